"""Synthetic data generation, the binary embedding file format, and metrics.

File format (little-endian throughout):

    magic   4 bytes  b"VFLE"
    version u32      currently 1
    party   u32      participant index
    n       u64      sample count
    z       u32      embedding width
    ids     n * u64  sample ids
    data    n * z * f32, row-major
    flag    u8       1 if labels follow, else 0
    labels  n * u32  only when flag == 1

Values are widened to float64 after reading; 4 bytes per value is the wire
precision that the communication ledgers assume.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines, mope
from .errors import FormatError, ShapeError, ValidationError

MAGIC = b"VFLE"
VERSION = 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian blobs split vertically across participants.

    Each participant k holds a block of width ``dims[k]``; class c's mean in
    that block is ``separations[k]`` times a seeded unit-norm direction, and
    samples add isotropic noise of ``within_std``. A separation of 0 makes
    the block pure noise. The last block belongs to the active party.
    ``n_samples`` is the total; the first ``train_fraction`` of a seeded
    shuffle becomes the training split.
    """

    classes: int
    n_samples: int
    dims: tuple[int, ...]
    separations: tuple[float, ...]
    within_std: float = 1.0
    seed: int = 0
    train_fraction: float = 0.8

    def validate(self) -> None:
        if self.classes < 2:
            raise ValidationError(f"classes must be >= 2, got {self.classes}")
        if len(self.dims) < 1:
            raise ValidationError("need at least one participant block")
        if any(int(d) != d or d < 1 for d in self.dims):
            raise ValidationError(f"block widths must be positive ints, got {self.dims}")
        if len(self.separations) != len(self.dims):
            raise ValidationError(
                f"{len(self.separations)} separations for {len(self.dims)} blocks"
            )
        if any(s < 0 for s in self.separations):
            raise ValidationError("separations must be non-negative")
        if self.within_std <= 0:
            raise ValidationError(f"within_std must be positive, got {self.within_std}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )
        n_train = int(self.n_samples * self.train_fraction)
        if n_train < 1 or n_train >= self.n_samples:
            raise ValidationError(
                f"n_samples={self.n_samples} leaves an empty split at "
                f"fraction {self.train_fraction}"
            )


@dataclass
class SplitData:
    train_blocks: list[np.ndarray]
    train_labels: np.ndarray
    train_ids: np.ndarray
    test_blocks: list[np.ndarray]
    test_labels: np.ndarray
    test_ids: np.ndarray

    @property
    def n_participants(self) -> int:
        return len(self.train_blocks)


def gen_synthetic(spec: SyntheticSpec) -> SplitData:
    """Deterministic draw of the spec; the same seed is bitwise-stable."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, classes = spec.n_samples, spec.classes
    labels = np.resize(np.arange(classes, dtype=np.int64), n)
    labels = labels[rng.permutation(n)]
    blocks = []
    for width, sep in zip(spec.dims, spec.separations):
        directions = rng.standard_normal((classes, width))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        noise = rng.standard_normal((n, width)) * spec.within_std
        blocks.append(sep * directions[labels] + noise)
    n_train = int(n * spec.train_fraction)
    ids = np.arange(n, dtype=np.uint64)
    return SplitData(
        train_blocks=[b[:n_train] for b in blocks],
        train_labels=labels[:n_train],
        train_ids=ids[:n_train],
        test_blocks=[b[n_train:] for b in blocks],
        test_labels=labels[n_train:],
        test_ids=ids[n_train:],
    )


def write_embedding_file(path, participant_index: int, ids, embeddings,
                         labels=None) -> None:
    """Serialize one participant's embeddings; see the module docstring."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ShapeError(f"embeddings must be 2-D, got shape {emb.shape}")
    n, z = emb.shape
    if z < 1:
        raise ShapeError("embedding width must be at least 1")
    id_arr = np.asarray(ids, dtype=np.uint64)
    if id_arr.shape != (n,):
        raise ShapeError(f"ids have shape {id_arr.shape}, expected ({n},)")
    if participant_index < 0 or participant_index > 0xFFFFFFFF:
        raise ValidationError(f"participant index out of u32 range: {participant_index}")
    label_arr = None
    if labels is not None:
        label_arr = np.asarray(labels)
        if label_arr.shape != (n,):
            raise ShapeError(f"labels have shape {label_arr.shape}, expected ({n},)")
        if label_arr.size and (label_arr.min() < 0 or label_arr.max() > 0xFFFFFFFF):
            raise ValidationError("labels out of u32 range")
        label_arr = label_arr.astype("<u4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", participant_index))
        fh.write(struct.pack("<Q", n))
        fh.write(struct.pack("<I", z))
        fh.write(id_arr.astype("<u8").tobytes())
        fh.write(emb.astype("<f4").tobytes(order="C"))
        if label_arr is None:
            fh.write(b"\x00")
        else:
            fh.write(b"\x01")
            fh.write(label_arr.tobytes())


@dataclass
class EmbeddingFile:
    participant_index: int
    ids: np.ndarray                  # [n] uint64
    embeddings: np.ndarray           # [n, z] float64 (widened from f32)
    labels: Optional[np.ndarray]     # [n] int64 or None


def read_embedding_file(path) -> EmbeddingFile:
    """Parse and validate; FormatError messages carry section and offset."""
    data = Path(path).read_bytes()
    offset = 0

    def take(nbytes: int, section: str) -> bytes:
        nonlocal offset
        if len(data) - offset < nbytes:
            raise FormatError(
                f"truncated file: needed {nbytes} bytes for {section} at offset "
                f"{offset}, only {len(data) - offset} left",
                offset=offset,
            )
        chunk = data[offset:offset + nbytes]
        offset += nbytes
        return chunk

    magic = take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}", offset=0)
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4", offset=4)
    participant_index = struct.unpack("<I", take(4, "participant index"))[0]
    n = struct.unpack("<Q", take(8, "sample count"))[0]
    z = struct.unpack("<I", take(4, "embedding width"))[0]
    if z < 1:
        raise FormatError(f"embedding width must be >= 1, got {z}", offset=20)
    ids = np.frombuffer(take(8 * n, "sample ids"), dtype="<u8").copy()
    flat = np.frombuffer(take(4 * n * z, "embedding matrix"), dtype="<f4")
    embeddings = flat.reshape(n, z).astype(np.float64)
    flag_off = offset
    flag = take(1, "label flag")[0]
    if flag not in (0, 1):
        raise FormatError(f"label flag must be 0 or 1, got {flag}", offset=flag_off)
    labels = None
    if flag == 1:
        labels = np.frombuffer(take(4 * n, "labels"), dtype="<u4").astype(np.int64)
    if offset != len(data):
        raise FormatError(
            f"{len(data) - offset} unexpected trailing bytes at offset {offset}",
            offset=offset,
        )
    return EmbeddingFile(participant_index=participant_index, ids=ids,
                         embeddings=embeddings, labels=labels)


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    precision: np.ndarray       # [classes]
    recall: np.ndarray          # [classes]
    f1_per_class: np.ndarray    # [classes]
    binary_f1: Optional[float]  # class-1 F1 when classes == 2
    sample_count: int


def predict_proba(head, block_mats: Sequence[np.ndarray],
                  presence: np.ndarray) -> np.ndarray:
    """Class distributions from either head type; padding, never dropping."""
    if isinstance(head, mope.MopeHead):
        feats = mope.stack_padded(block_mats, presence, head.layout)
        return mope.mope_forward(head, feats).probs
    if isinstance(head, baselines.BaselineHead):
        return baselines.baseline_forward_matrix(head, block_mats, presence)
    raise TypeError(f"unknown head type {type(head).__name__}")


def evaluate(head, block_mats: Sequence[np.ndarray], presence: np.ndarray,
             labels) -> MetricReport:
    """Accuracy and per-class precision/recall/F1 over a test split.

    Samples with missing blocks are zero-padded and always scored. Argmax
    ties resolve to the lowest class index. A class with no true and no
    predicted samples scores precision = recall = F1 = 0 by convention; the
    macro average runs over all classes the head models.
    """
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.shape[0] == 0:
        raise ValidationError("test labels must be a non-empty 1-D array")
    classes = head.n_classes
    if y.min() < 0 or y.max() >= classes:
        raise ValidationError(f"test labels outside [0, {classes})")
    probs = predict_proba(head, block_mats, presence)
    if probs.shape[0] != y.shape[0]:
        raise ShapeError(f"{probs.shape[0]} predictions for {y.shape[0]} labels")
    pred = probs.argmax(axis=1)
    precision = np.zeros(classes)
    recall = np.zeros(classes)
    f1 = np.zeros(classes)
    for c in range(classes):
        tp = int(np.sum((pred == c) & (y == c)))
        fp = int(np.sum((pred == c) & (y != c)))
        fn = int(np.sum((pred != c) & (y == c)))
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        f1[c] = (2 * precision[c] * recall[c] / (precision[c] + recall[c])
                 if precision[c] + recall[c] else 0.0)
    return MetricReport(
        accuracy=float(np.mean(pred == y)),
        macro_f1=float(f1.mean()),
        precision=precision,
        recall=recall,
        f1_per_class=f1,
        binary_f1=float(f1[1]) if classes == 2 else None,
        sample_count=int(y.shape[0]),
    )
