"""Mixture-of-predefined-experts head over participant embedding blocks.

One expert exists per subset of participants that includes the active party,
so K participants give exactly 2**(K-1) experts; the family is fixed by K,
never learned. Every expert is evaluated densely on each sample (no top-M
routing). A router scores all experts with independent sigmoid gates from the
zero-padded concatenation of all blocks (no presence indicator is appended;
absence is visible only as zeros), and the mixture output is

    probs = sum_i g_i * softmax(expert_i(subvector_i)) / (sum_i g_i + 1e-12)

Training minimizes the negative log of the mixture probability at the label,
with the log clamped at 1e-12. All gradients are analytic and verified
against central finite differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn
from .alignment import active_subsets, check_subset, members, subset_label
from .errors import (
    ContractError,
    ShapeError,
    UndefinedContributionError,
    ValidationError,
)

# Guard added to the total gate mass before normalizing the mixture.
GATE_MASS_EPS = 1e-12

# Optional instrumentation: called as hook(expert_index, n_samples) on every
# expert evaluation. Used to verify dense evaluation; single-threaded only.
_expert_call_hook: Optional[Callable[[int, int], None]] = None


def set_expert_call_hook(hook: Optional[Callable[[int, int], None]]):
    """Install (or clear, with None) the expert-evaluation hook.

    Returns the previously installed hook so callers can restore it.
    """
    global _expert_call_hook
    previous = _expert_call_hook
    _expert_call_hook = hook
    return previous


@dataclass(frozen=True)
class BlockLayout:
    """Widths of each participant's embedding block inside the concatenation.

    Participant k owns columns [offset_k, offset_k + dims[k]) of the padded
    concatenation; offsets follow the canonical participant order.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) < 1:
            raise ShapeError("layout needs at least one block")
        for k, d in enumerate(self.dims):
            if int(d) != d or d < 1:
                raise ShapeError(f"block {k} has invalid width {d!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n_participants(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def offset_of(self, k: int) -> int:
        return sum(self.dims[:k])

    def slice_of(self, k: int) -> slice:
        if not 0 <= k < len(self.dims):
            raise ShapeError(f"participant index {k} out of range for K={len(self.dims)}")
        start = self.offset_of(k)
        return slice(start, start + self.dims[k])

    def subset_indices(self, mask: int) -> np.ndarray:
        """Column indices selected by a subset, ascending participant order."""
        check_subset(mask, self.n_participants)
        cols = [np.arange(self.offset_of(k), self.offset_of(k) + self.dims[k])
                for k in members(mask)]
        return np.concatenate(cols)

    def subset_dim(self, mask: int) -> int:
        check_subset(mask, self.n_participants)
        return sum(self.dims[k] for k in members(mask))


def pad_and_concat(blocks: Sequence, layout: BlockLayout) -> np.ndarray:
    """Concatenate one sample's blocks, zero-filling the missing ones.

    ``blocks[k]`` is either a vector of width dims[k] or None for an absent
    block. The active party's block (the last one) must be present.
    """
    if len(blocks) != layout.n_participants:
        raise ShapeError(
            f"got {len(blocks)} blocks for a layout with {layout.n_participants}"
        )
    if blocks[-1] is None:
        raise ContractError("the active participant's block is always required")
    out = np.zeros(layout.total_dim)
    for k, block in enumerate(blocks):
        if block is None:
            continue
        vec = np.asarray(block, dtype=np.float64)
        if vec.shape != (layout.dims[k],):
            raise ShapeError(
                f"block {k} has shape {vec.shape}, expected ({layout.dims[k]},)"
            )
        out[layout.slice_of(k)] = vec
    return out


def stack_padded(block_mats: Sequence[np.ndarray], presence: np.ndarray,
                 layout: BlockLayout) -> np.ndarray:
    """Batched pad_and_concat: [n, total_dim] with absent blocks zeroed.

    ``block_mats[k]`` is [n, dims[k]]; values in rows where presence[:, k] is
    False are ignored and replaced by zeros.
    """
    if len(block_mats) != layout.n_participants:
        raise ShapeError(
            f"got {len(block_mats)} blocks for a layout with {layout.n_participants}"
        )
    presence = np.asarray(presence, dtype=bool)
    n = presence.shape[0]
    if presence.shape != (n, layout.n_participants):
        raise ShapeError(
            f"presence has shape {presence.shape}, expected ({n}, {layout.n_participants})"
        )
    if not presence[:, -1].all():
        raise ContractError("active participant column must be fully present")
    out = np.zeros((n, layout.total_dim))
    for k, mat in enumerate(block_mats):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (n, layout.dims[k]):
            raise ShapeError(
                f"block {k} has shape {mat.shape}, expected ({n}, {layout.dims[k]})"
            )
        out[:, layout.slice_of(k)] = np.where(presence[:, k, None], mat, 0.0)
    return out


def decompose(z_agg, mask: int, layout: BlockLayout) -> np.ndarray:
    """Extract the subvector a subset's expert consumes, in participant order."""
    arr = np.asarray(z_agg, dtype=np.float64)
    if arr.shape[-1] != layout.total_dim:
        raise ShapeError(
            f"aggregate has width {arr.shape[-1]}, layout expects {layout.total_dim}"
        )
    return arr[..., layout.subset_indices(mask)]


@dataclass
class MopeHead:
    """Router plus one expert per gated subset, in canonical subset order."""

    layout: BlockLayout
    subsets: tuple[int, ...]
    router: nn.Mlp2
    experts: list[nn.Mlp2]
    n_classes: int

    def validate(self) -> None:
        expected = tuple(active_subsets(self.layout.n_participants))
        if self.subsets != expected:
            raise ContractError("subsets are not the canonical gated family")
        if len(self.experts) != len(self.subsets):
            raise ShapeError(
                f"{len(self.experts)} experts for {len(self.subsets)} subsets"
            )
        if self.router.in_dim != self.layout.total_dim:
            raise ShapeError("router input width does not match the layout")
        if self.router.out_dim != len(self.subsets):
            raise ShapeError("router emits one logit per expert")
        for s, e in zip(self.subsets, self.experts):
            if e.in_dim != self.layout.subset_dim(s):
                raise ShapeError(f"expert for {bin(s)} has input width {e.in_dim}")
            if e.out_dim != self.n_classes:
                raise ShapeError("every expert must emit one logit per class")
        self.router.validate()
        for e in self.experts:
            e.validate()

    def copy(self) -> "MopeHead":
        return MopeHead(self.layout, self.subsets, self.router.copy(),
                        [e.copy() for e in self.experts], self.n_classes)


def init_mope_head(layout: BlockLayout, n_classes: int, seed,
                   router_hidden: int = 128) -> MopeHead:
    """Seeded head construction.

    Expert hidden width is twice its input width; the router's hidden width
    defaults to 128 and is configurable. Initialization order is fixed
    (router first, then experts in canonical subset order) so a seed pins
    every parameter.
    """
    if n_classes < 2:
        raise ValidationError(f"need at least two classes, got {n_classes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    subsets = tuple(active_subsets(layout.n_participants))
    router = nn.init_mlp(layout.total_dim, router_hidden, len(subsets), rng)
    experts = []
    for s in subsets:
        d = layout.subset_dim(s)
        experts.append(nn.init_mlp(d, 2 * d, n_classes, rng))
    return MopeHead(layout=layout, subsets=subsets, router=router,
                    experts=experts, n_classes=n_classes)


@dataclass
class MopeOutput:
    probs: np.ndarray         # [..., n_classes] normalized mixture
    gates: np.ndarray         # [..., n_experts] independent sigmoid gates
    expert_probs: np.ndarray  # [..., n_experts, n_classes]


@dataclass
class _ForwardState:
    z2d: np.ndarray
    gates: np.ndarray
    gate_mass: np.ndarray
    probs: np.ndarray
    expert_probs: np.ndarray
    router_cache: nn.MlpCache
    expert_caches: list[nn.MlpCache]


def _forward_state(head: MopeHead, z_agg) -> tuple[_ForwardState, bool]:
    z = np.asarray(z_agg, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValidationError("aggregate embedding contains non-finite values")
    squeeze = z.ndim == 1
    z2d = np.atleast_2d(z)
    if z2d.ndim != 2 or z2d.shape[1] != head.layout.total_dim:
        raise ShapeError(
            f"aggregate has shape {z.shape}, expected width {head.layout.total_dim}"
        )
    n = z2d.shape[0]
    router_logits, router_cache = nn.mlp_forward(head.router, z2d)
    gates = nn.sigmoid(router_logits)
    expert_probs = np.empty((n, len(head.subsets), head.n_classes))
    expert_caches = []
    for i, mask in enumerate(head.subsets):
        sub = z2d[:, head.layout.subset_indices(mask)]
        logits, cache = nn.mlp_forward(head.experts[i], sub)
        expert_probs[:, i, :] = nn.softmax(logits, axis=-1)
        expert_caches.append(cache)
        if _expert_call_hook is not None:
            _expert_call_hook(i, n)
    gate_mass = gates.sum(axis=1) + GATE_MASS_EPS
    mixed = np.einsum("ne,nec->nc", gates, expert_probs)
    probs = mixed / gate_mass[:, None]
    return _ForwardState(z2d, gates, gate_mass, probs, expert_probs,
                         router_cache, expert_caches), squeeze


def mope_forward(head: MopeHead, z_agg) -> MopeOutput:
    """Dense mixture forward pass for one sample or a batch."""
    state, squeeze = _forward_state(head, z_agg)
    if squeeze:
        return MopeOutput(state.probs[0], state.gates[0], state.expert_probs[0])
    return MopeOutput(state.probs, state.gates, state.expert_probs)


@dataclass
class MopeGrads:
    router: nn.Mlp2
    experts: list[nn.Mlp2]


def _check_labels(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 0:
        y = y[None]
    if y.ndim != 1:
        raise ValidationError("labels must be a scalar or 1-D")
    if y.size and (not np.issubdtype(y.dtype, np.integer)):
        if not np.all(y == y.astype(np.int64)):
            raise ValidationError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValidationError(
            f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]"
        )
    return y


def mope_loss_and_backward(head: MopeHead, z_agg, labels) -> tuple[float, MopeGrads]:
    """Mean clamped NLL of the mixture plus analytic gradients for everything.

    With mixture q = sum_i g_i p_i / T, T = sum_i g_i + eps, the label-column
    derivative gives dL/dg_i = (q_y - p_{i,y}) / (B qhat T) per sample and the
    expert-logit gradient g_i * p_c (p_y - 1{c=y}) / (B qhat T). A gate that
    has numerically collapsed to zero therefore contributes exactly zero
    gradient to its expert.
    """
    state, squeeze = _forward_state(head, z_agg)
    n = state.z2d.shape[0]
    y = _check_labels(labels, head.n_classes)
    if y.shape[0] != n:
        raise ShapeError(f"{n} samples but {y.shape[0]} labels")
    rows = np.arange(n)

    qy = state.probs[rows, y]
    qhat = np.maximum(qy, nn.LOG_FLOOR)
    loss = float(np.mean(-np.log(qhat)))

    alpha = 1.0 / (n * qhat * state.gate_mass)            # [n]
    py = state.expert_probs[rows, :, y]                   # [n, E]
    dgates = alpha[:, None] * (qy[:, None] - py)          # [n, E]
    drouter_logits = dgates * state.gates * (1.0 - state.gates)
    router_grads, _ = nn.mlp_backward(head.router, state.router_cache, drouter_logits)

    expert_grads = []
    for i in range(len(head.subsets)):
        coeff = state.gates[:, i] * alpha                 # [n]
        dlogits = state.expert_probs[:, i, :] * (coeff * py[:, i])[:, None]
        dlogits[rows, y] -= state.expert_probs[rows, i, y] * coeff
        g, _ = nn.mlp_backward(head.experts[i], state.expert_caches[i], dlogits)
        expert_grads.append(g)
    return loss, MopeGrads(router=router_grads, experts=expert_grads)


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch Adam settings shared by the mixture and baseline trainers.

    ``epochs=0`` is allowed and means "build but do not train", which the
    accounting paths use. ``seed`` drives both initialization-independent
    shuffling and nothing else; pass any int / SeedSequence / Generator.
    """

    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: object = 0
    shuffle: bool = True

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")


def _epoch_batches(n: int, config: TrainConfig, rng: np.random.Generator):
    order = rng.permutation(n) if config.shuffle else np.arange(n)
    for start in range(0, n, config.batch_size):
        yield order[start:start + config.batch_size]


def train_mope(head: MopeHead, features: np.ndarray, labels,
               config: TrainConfig) -> tuple[MopeHead, list[float]]:
    """Train a copy of the head on padded aggregates; returns (head, trace).

    The trace holds one mean training loss per epoch (sample-weighted over
    that epoch's batches). The input head is left untouched.
    """
    config.validate()
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != head.layout.total_dim:
        raise ShapeError(
            f"features must be [n, {head.layout.total_dim}], got {feats.shape}"
        )
    y = _check_labels(labels, head.n_classes)
    n = feats.shape[0]
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")
    if y.shape[0] != n:
        raise ShapeError(f"{n} samples but {y.shape[0]} labels")

    current = head.copy()
    nets = [current.router] + list(current.experts)
    states = [nn.init_adam(net, lr=config.lr, beta1=config.beta1,
                           beta2=config.beta2, eps=config.eps) for net in nets]
    rng = (config.seed if isinstance(config.seed, np.random.Generator)
           else np.random.default_rng(config.seed))
    trace: list[float] = []
    for _ in range(config.epochs):
        total = 0.0
        for idx in _epoch_batches(n, config, rng):
            loss, grads = mope_loss_and_backward(current, feats[idx], y[idx])
            glist = [grads.router] + grads.experts
            for j in range(len(nets)):
                nets[j], states[j] = nn.adam_step(nets[j], glist[j], states[j])
            current = MopeHead(current.layout, current.subsets, nets[0],
                               nets[1:], current.n_classes)
            total += loss * len(idx)
        trace.append(total / n)
    return current, trace


def contribution(gates, subsets: Sequence[int], participant: int,
                 *, passive_only: bool = False, literal: bool = False) -> float:
    """Share of the gate mass flowing through experts that include a party.

        C_k = sum_{e : k in e} g_e / sum_e g_e

    The active party is in every gated subset, so its share is exactly 1.
    ``passive_only`` drops the expert that sees only the active party from
    both sums, which isolates how passive data is weighted. ``literal``
    switches to the unnormalized historical form sum_e 1{k in e} * g_e/g_e
    (a plain expert count wherever gates are nonzero, NaN on zero gates);
    it exists only for comparison and is not used anywhere in the pipeline.
    """
    g = np.asarray(gates, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != len(subsets):
        raise ShapeError(f"expected {len(subsets)} gates, got shape {g.shape}")
    if not np.isfinite(g).all() or (g < 0).any():
        raise ValidationError("gates must be finite and non-negative")
    if participant < 0:
        raise ContractError(f"participant index must be non-negative, got {participant}")
    keep = np.ones(len(subsets), dtype=bool)
    if passive_only:
        n_parts = max(members(subsets[-1])) + 1
        active_only = 1 << (n_parts - 1)
        keep = np.array([s != active_only for s in subsets])
    in_subset = np.array([bool(s & (1 << participant)) for s in subsets])
    if literal:
        with np.errstate(invalid="ignore"):
            ratio = g / g
        return float(np.sum(np.where(in_subset & keep, ratio, 0.0)))
    total = float(g[keep].sum())
    if total == 0.0:
        raise UndefinedContributionError(
            "all gates are zero; contribution shares are undefined"
        )
    return float(g[in_subset & keep].sum() / total)


def per_sample_report(head: MopeHead, z_agg, *, sample_id, label=None,
                      presence_row=None) -> dict:
    """One report row: gates, contribution shares, and the prediction.

    Keys appear in a fixed order (sample_id, gates, contributions, predicted,
    label, padded) so serialized reports are stable. Ties in the mixture
    argmax resolve to the lowest class index. ``padded`` lists participants
    whose block was absent and therefore zero-filled.
    """
    out = mope_forward(head, z_agg)
    if out.probs.ndim != 1:
        raise ShapeError("per_sample_report works on a single sample")
    gates = [float(v) for v in out.gates]
    contribs = [
        contribution(out.gates, head.subsets, k)
        for k in range(head.layout.n_participants)
    ]
    padded: list[int] = []
    if presence_row is not None:
        row = np.asarray(presence_row, dtype=bool)
        if row.shape != (head.layout.n_participants,):
            raise ShapeError(
                f"presence row has shape {row.shape}, expected ({head.layout.n_participants},)"
            )
        if not row[-1]:
            raise ContractError("active participant bit is unset in presence row")
        padded = [int(k) for k in np.flatnonzero(~row)]
    return {
        "sample_id": sample_id,
        "gates": gates,
        "contributions": contribs,
        "predicted": int(np.argmax(out.probs)),
        "label": None if label is None else int(label),
        "padded": padded,
    }


def subset_labels(head: MopeHead) -> list[str]:
    """Canonical display names of the head's experts."""
    return [subset_label(s, head.layout.n_participants) for s in head.subsets]
