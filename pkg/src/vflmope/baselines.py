"""Reference heads: active-only local, split concat, and split mean.

All three are plain softmax classifiers over a fixed input transform:

* ``local``          - the active party's block only; passives are ignored.
* ``splitnn-concat`` - zero-padded concatenation of every block.
* ``splitnn-mean``   - elementwise mean over the blocks present in a row,
                       which requires every block to share one width.

Hidden width is twice the transform's output width, matching the experts of
the mixture head.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .errors import ConfigurationError, ContractError, ShapeError, ValidationError
from .mope import BlockLayout, TrainConfig, _epoch_batches, stack_padded

BASELINE_KINDS = ("local", "splitnn-concat", "splitnn-mean")


@dataclass
class BaselineHead:
    kind: str
    layout: BlockLayout
    classifier: nn.Mlp2
    n_classes: int


def init_baseline(kind: str, layout: BlockLayout, n_classes: int, seed,
                  hidden: int | None = None) -> BaselineHead:
    if kind not in BASELINE_KINDS:
        raise ConfigurationError(f"unknown baseline kind {kind!r}")
    if n_classes < 2:
        raise ValidationError(f"need at least two classes, got {n_classes}")
    if kind == "local":
        in_dim = layout.dims[-1]
    elif kind == "splitnn-concat":
        in_dim = layout.total_dim
    else:
        widths = set(layout.dims)
        if len(widths) != 1:
            raise ConfigurationError(
                f"splitnn-mean needs equal block widths, got {layout.dims}"
            )
        in_dim = layout.dims[0]
    classifier = nn.init_mlp(in_dim, hidden or 2 * in_dim, n_classes, seed)
    return BaselineHead(kind=kind, layout=layout, classifier=classifier,
                        n_classes=n_classes)


def baseline_features(head: BaselineHead, block_mats: Sequence[np.ndarray],
                      presence: np.ndarray) -> np.ndarray:
    """Apply the head's fixed input transform to a batch of blocks."""
    layout = head.layout
    presence = np.asarray(presence, dtype=bool)
    n = presence.shape[0]
    if presence.shape != (n, layout.n_participants):
        raise ShapeError(
            f"presence has shape {presence.shape}, expected ({n}, {layout.n_participants})"
        )
    if not presence[:, -1].all():
        raise ContractError("active participant column must be fully present")
    if head.kind == "local":
        mat = np.asarray(block_mats[-1], dtype=np.float64)
        if mat.shape != (n, layout.dims[-1]):
            raise ShapeError(
                f"active block has shape {mat.shape}, expected ({n}, {layout.dims[-1]})"
            )
        return mat.copy()
    if head.kind == "splitnn-concat":
        return stack_padded(block_mats, presence, layout)
    # splitnn-mean: average the present blocks; the active one is always there
    width = layout.dims[0]
    total = np.zeros((n, width))
    for k, mat in enumerate(block_mats):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (n, width):
            raise ShapeError(f"block {k} has shape {mat.shape}, expected ({n}, {width})")
        total += np.where(presence[:, k, None], mat, 0.0)
    counts = presence.sum(axis=1)
    return total / counts[:, None]


def baseline_forward(head: BaselineHead, blocks: Sequence,
                     presence_row=None) -> np.ndarray:
    """Class distribution for one sample given per-participant blocks.

    ``blocks[k]`` is a vector or None for an absent block; alternatively pass
    full vectors plus an explicit ``presence_row``.
    """
    layout = head.layout
    if len(blocks) != layout.n_participants:
        raise ShapeError(
            f"got {len(blocks)} blocks for a layout with {layout.n_participants}"
        )
    if presence_row is None:
        presence_row = [b is not None for b in blocks]
    row = np.asarray(presence_row, dtype=bool).reshape(1, -1)
    mats = []
    for k, b in enumerate(blocks):
        if b is None:
            mats.append(np.zeros((1, layout.dims[k])))
        else:
            vec = np.asarray(b, dtype=np.float64)
            if vec.shape != (layout.dims[k],):
                raise ShapeError(
                    f"block {k} has shape {vec.shape}, expected ({layout.dims[k]},)"
                )
            mats.append(vec.reshape(1, -1))
    return baseline_forward_matrix(head, mats, row)[0]


def baseline_forward_matrix(head: BaselineHead, block_mats: Sequence[np.ndarray],
                            presence: np.ndarray) -> np.ndarray:
    feats = baseline_features(head, block_mats, presence)
    logits, _ = nn.mlp_forward(head.classifier, feats)
    return nn.softmax(logits, axis=-1)


def train_baseline(head: BaselineHead, block_mats: Sequence[np.ndarray],
                   presence: np.ndarray, labels,
                   config: TrainConfig) -> tuple[BaselineHead, list[float]]:
    """Mini-batch Adam on softmax cross-entropy; returns (new head, trace)."""
    config.validate()
    feats = baseline_features(head, block_mats, presence)
    y = np.asarray(labels)
    n = feats.shape[0]
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")
    if y.shape != (n,):
        raise ShapeError(f"{n} samples but labels have shape {y.shape}")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= head.n_classes):
        raise ValidationError(
            f"labels must lie in [0, {head.n_classes}), got [{y.min()}, {y.max()}]"
        )
    net = head.classifier.copy()
    state = nn.init_adam(net, lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)
    rng = (config.seed if isinstance(config.seed, np.random.Generator)
           else np.random.default_rng(config.seed))
    trace: list[float] = []
    for _ in range(config.epochs):
        total = 0.0
        for idx in _epoch_batches(n, config, rng):
            logits, cache = nn.mlp_forward(net, feats[idx])
            loss, dlogits = nn.softmax_nll_and_dlogits(logits, y[idx])
            grads, _ = nn.mlp_backward(net, cache, dlogits)
            net, state = nn.adam_step(net, grads, state)
            total += loss * len(idx)
        trace.append(total / n)
    return BaselineHead(head.kind, head.layout, net, head.n_classes), trace
