"""Participants, byte-exact communication ledgers, and round simulation.

The simulator runs everything in one process but accounts for traffic as if
embeddings crossed the wire: every value is a 4-byte float on the wire (files
and messages both use float32), while in-memory math stays in float64.

Two training schedules are modeled:

* single-round: each passive party uploads its embeddings once, the active
  party trains alone. Total bytes = sum over passives of n_present * z * 4.
* end-to-end (split-learning style): every epoch moves activations forward
  and gradients backward for every passive, so the closed form is
  2 * (K-1) * epochs * n * z * 4. ``simulate_end_to_end_ledger`` enumerates
  those messages; its sum matches the closed form exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import baselines, mope
from .errors import (
    ConfigurationError,
    EmptyFederationError,
    ShapeError,
    ValidationError,
)

log = logging.getLogger("vflmope")

BYTES_PER_VALUE = 4  # float32 on the wire

ROLE_ACTIVE = "active"
ROLE_PASSIVE = "passive"
ROLE_NOISY = "noisy"

HEAD_KINDS = ("mope",) + baselines.BASELINE_KINDS


@dataclass
class Participant:
    """One party's view: sample ids it holds plus an embedding per sample."""

    index: int
    role: str
    sample_ids: np.ndarray          # [n_k] uint64
    embeddings: np.ndarray          # [n_k, dim] float64
    labels: Optional[np.ndarray] = None  # active party only

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


def make_federation(block_mats: Sequence[np.ndarray], labels,
                    ids=None) -> list[Participant]:
    """Fully aligned federation from per-participant matrices.

    The last matrix belongs to the active party, which also gets the labels.
    """
    if len(block_mats) < 1:
        raise EmptyFederationError("need at least one participant")
    n = np.asarray(block_mats[0]).shape[0]
    ids = np.arange(n, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
    if ids.shape != (n,):
        raise ShapeError(f"ids have shape {ids.shape}, expected ({n},)")
    parts = []
    last = len(block_mats) - 1
    for k, mat in enumerate(block_mats):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != n:
            raise ShapeError(f"block {k} must be [n={n}, dim], got {mat.shape}")
        parts.append(Participant(
            index=k,
            role=ROLE_ACTIVE if k == last else ROLE_PASSIVE,
            sample_ids=ids.copy(),
            embeddings=mat,
            labels=np.asarray(labels, dtype=np.int64) if k == last else None,
        ))
    return parts


def validate_federation(participants: Sequence[Participant]) -> None:
    if len(participants) < 1:
        raise EmptyFederationError("need at least one participant")
    actives = [p for p in participants if p.role == ROLE_ACTIVE]
    if len(actives) != 1:
        raise ConfigurationError(f"exactly one active participant required, got {len(actives)}")
    if participants[-1].role != ROLE_ACTIVE:
        raise ConfigurationError("the active participant must hold the highest index")
    for k, p in enumerate(participants):
        if p.index != k:
            raise ConfigurationError(f"participant at position {k} carries index {p.index}")
        if p.embeddings.ndim != 2 or p.embeddings.shape[0] != p.sample_ids.shape[0]:
            raise ShapeError(f"participant {k}: embeddings do not match its sample ids")
    if participants[-1].labels is None:
        raise ConfigurationError("the active participant must hold labels")
    if participants[-1].labels.shape[0] != participants[-1].sample_ids.shape[0]:
        raise ShapeError("active participant labels do not match its sample count")


@dataclass(frozen=True)
class CommEntry:
    sender: int
    receiver: int
    direction: str         # "forward" (embeddings) or "backward" (gradients)
    n_samples: int
    dim: int
    n_bytes: int
    round: int


class CommLedger:
    """Append-only message log; totals are exact Python ints."""

    def __init__(self):
        self.entries: list[CommEntry] = []

    def record(self, sender: int, receiver: int, direction: str,
               n_samples: int, dim: int, round: int) -> CommEntry:
        if direction not in ("forward", "backward"):
            raise ValidationError(f"unknown direction {direction!r}")
        if n_samples < 0 or dim < 1:
            raise ValidationError("message needs n_samples >= 0 and dim >= 1")
        entry = CommEntry(sender=sender, receiver=receiver, direction=direction,
                          n_samples=int(n_samples), dim=int(dim),
                          n_bytes=int(n_samples) * int(dim) * BYTES_PER_VALUE,
                          round=int(round))
        self.entries.append(entry)
        return entry

    @property
    def total_bytes(self) -> int:
        return sum(e.n_bytes for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def gather_blocks(participants: Sequence[Participant],
                  presence: np.ndarray) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Align every participant's rows to the active party's id order.

    Returns (block matrices, effective presence, labels). Effective presence
    is the given mask AND-ed with actual id availability; rows a participant
    does not hold (or that the mask drops) are zero in its matrix.
    """
    validate_federation(participants)
    active = participants[-1]
    n = active.sample_ids.shape[0]
    presence = np.asarray(presence, dtype=bool)
    if presence.shape != (n, len(participants)):
        raise ShapeError(
            f"presence has shape {presence.shape}, expected ({n}, {len(participants)})"
        )
    if not presence[:, -1].all():
        raise ConfigurationError("presence mask drops active samples")
    effective = presence.copy()
    mats = []
    for k, part in enumerate(participants):
        pos = {int(sid): j for j, sid in enumerate(part.sample_ids)}
        rows = np.array([pos.get(int(sid), -1) for sid in active.sample_ids])
        available = rows >= 0
        effective[:, k] &= available
        mat = np.zeros((n, part.dim))
        take = effective[:, k]
        mat[take] = part.embeddings[rows[take]]
        mats.append(mat)
    if not effective[:, -1].all():
        raise ConfigurationError("active participant is missing some of its own ids")
    return mats, effective, active.labels.copy()


@dataclass
class RoundResult:
    head_kind: str
    head: object                 # MopeHead or BaselineHead
    ledger: CommLedger
    loss_trace: list[float]
    presence: np.ndarray         # effective training presence


def run_single_round(participants: Sequence[Participant], presence: np.ndarray,
                     head_kind: str, config: mope.TrainConfig, *,
                     n_classes: int | None = None,
                     router_hidden: int = 128) -> RoundResult:
    """One upload per passive party, then local training at the active party.

    The ledger gets exactly K-1 forward entries (one per passive or noisy
    party, sized by the samples that party actually sends) and no backward
    entries. K=1 is legal and moves zero bytes.
    """
    if head_kind not in HEAD_KINDS:
        raise ConfigurationError(f"unknown head kind {head_kind!r}")
    mats, effective, labels = gather_blocks(participants, presence)
    ledger = CommLedger()
    for k, part in enumerate(participants[:-1]):
        ledger.record(sender=k, receiver=len(participants) - 1,
                      direction="forward",
                      n_samples=int(effective[:, k].sum()),
                      dim=part.dim, round=0)
    classes = int(labels.max()) + 1 if n_classes is None else n_classes
    layout = mope.BlockLayout(tuple(p.dim for p in participants))
    log.info("single round: head=%s K=%d n=%d classes=%d",
             head_kind, len(participants), labels.shape[0], classes)
    if head_kind == "mope":
        head = mope.init_mope_head(layout, classes, seed=config.seed,
                                   router_hidden=router_hidden)
        feats = mope.stack_padded(mats, effective, layout)
        head, trace = mope.train_mope(head, feats, labels, config)
    else:
        head = baselines.init_baseline(head_kind, layout, classes, seed=config.seed)
        head, trace = baselines.train_baseline(head, mats, effective, labels, config)
    return RoundResult(head_kind=head_kind, head=head, ledger=ledger,
                       loss_trace=trace, presence=effective)


def simulate_end_to_end_cost(n_participants: int, n_aligned: int, dim: int,
                             epochs: int) -> int:
    """Closed-form bytes for epoch-wise forward+backward exchange:

        2 * (K - 1) * epochs * n * z * 4
    """
    if n_participants < 1:
        raise EmptyFederationError("need at least one participant")
    if n_aligned < 0 or dim < 1 or epochs < 0:
        raise ValidationError("need n_aligned >= 0, dim >= 1, epochs >= 0")
    return 2 * (n_participants - 1) * epochs * n_aligned * dim * BYTES_PER_VALUE


def simulate_end_to_end_ledger(n_participants: int, n_aligned: int, dim: int,
                               epochs: int) -> CommLedger:
    """Enumerate the end-to-end schedule message by message.

    Each epoch, every passive party sends activations forward and receives a
    same-sized gradient back. The ledger total equals
    ``simulate_end_to_end_cost`` exactly.
    """
    if n_participants < 1:
        raise EmptyFederationError("need at least one participant")
    if n_aligned < 0 or dim < 1 or epochs < 0:
        raise ValidationError("need n_aligned >= 0, dim >= 1, epochs >= 0")
    ledger = CommLedger()
    active = n_participants - 1
    for epoch in range(epochs):
        for k in range(n_participants - 1):
            ledger.record(sender=k, receiver=active, direction="forward",
                          n_samples=n_aligned, dim=dim, round=epoch)
            ledger.record(sender=active, receiver=k, direction="backward",
                          n_samples=n_aligned, dim=dim, round=epoch)
    return ledger


def noisy_embeddings(n_samples: int, dim: int, seed, scale: float = 100.0,
                     scale_is_variance: bool = True) -> np.ndarray:
    """Zero-mean gaussian junk embeddings for an uninformative party.

    ``scale`` is the variance by default (scale=100 means std=10); set
    ``scale_is_variance=False`` to treat it as the standard deviation.
    """
    if n_samples < 0 or dim < 1:
        raise ValidationError("need n_samples >= 0 and dim >= 1")
    if scale <= 0:
        raise ValidationError(f"noise scale must be positive, got {scale}")
    std = float(np.sqrt(scale)) if scale_is_variance else float(scale)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.normal(0.0, std, size=(n_samples, dim))


def inject_noisy(participants: Sequence[Participant], count: int, seed, *,
                 dim: int | None = None, scale: float = 100.0,
                 scale_is_variance: bool = True) -> list[Participant]:
    """Insert ``count`` noisy parties just below the active one.

    Noisy parties claim every sample the active party has (their presence is
    full at p_miss=0) and are re-indexed into the canonical order, the active
    party staying highest. The input list is not modified.
    """
    validate_federation(participants)
    if count < 0:
        raise ValidationError(f"count must be >= 0, got {count}")
    if count == 0:
        return list(participants)
    active = participants[-1]
    width = active.dim if dim is None else dim
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = list(participants[:-1])
    for i in range(count):
        emb = noisy_embeddings(active.sample_ids.shape[0], width, rng,
                               scale=scale, scale_is_variance=scale_is_variance)
        out.append(Participant(index=len(out), role=ROLE_NOISY,
                               sample_ids=active.sample_ids.copy(),
                               embeddings=emb))
    out.append(Participant(index=len(out), role=ROLE_ACTIVE,
                           sample_ids=active.sample_ids, embeddings=active.embeddings,
                           labels=active.labels))
    return out
