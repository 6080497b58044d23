"""Participant-set algebra, sample alignment, and MCAR missingness masks.

Conventions used everywhere in this package:

* participants are indexed 0..K-1 in a fixed canonical order and the highest
  index is the active party (the one holding labels);
* a subset of participants is a plain int bitmask, bit k == participant k;
* the canonical order of subsets is ascending bitmask value;
* presence is a boolean matrix [n_samples, K], row i column k meaning
  "participant k holds sample i". The active column is always True.

Randomness comes from numpy's PCG64 (np.random.default_rng), so any mask is
reproducible from its seed.
"""
from __future__ import annotations

from typing import Hashable, Sequence

import numpy as np

from .errors import ContractError, EmptyFederationError, ValidationError


def active_subsets(n_participants: int) -> list[int]:
    """All subsets of {0..K-1} that contain the active party, as bitmasks.

    There are exactly 2**(K-1) of them, returned in ascending bitmask order.
    For K=2 that is [{A}, {P0, A}]; for K=3 [{A}, {P0, A}, {P1, A},
    {P0, P1, A}].
    """
    if n_participants < 1:
        raise EmptyFederationError("need at least one participant")
    active_bit = 1 << (n_participants - 1)
    return [active_bit | m for m in range(active_bit)]


def members(mask: int) -> tuple[int, ...]:
    """Participant indices contained in a subset bitmask, ascending."""
    if mask < 0:
        raise ContractError(f"subset bitmask must be non-negative, got {mask}")
    out = []
    k = 0
    m = mask
    while m:
        if m & 1:
            out.append(k)
        m >>= 1
        k += 1
    return tuple(out)


def mask_from_members(indices: Sequence[int]) -> int:
    mask = 0
    for k in indices:
        if k < 0:
            raise ContractError(f"participant index must be non-negative, got {k}")
        mask |= 1 << k
    return mask


def subset_label(mask: int, n_participants: int) -> str:
    """Human-readable name of a subset, e.g. "P0+P2+A" for K >= 3."""
    parts = []
    for k in members(mask):
        if k >= n_participants:
            raise ContractError(
                f"subset {bin(mask)} mentions participant {k} but K={n_participants}"
            )
        parts.append("A" if k == n_participants - 1 else f"P{k}")
    return "+".join(parts)


def check_subset(mask: int, n_participants: int) -> None:
    """Raise unless ``mask`` is one of the gated subsets for K participants."""
    if n_participants < 1:
        raise EmptyFederationError("need at least one participant")
    if mask <= 0 or mask >= (1 << n_participants):
        raise ContractError(
            f"subset {mask} is out of range for {n_participants} participants"
        )
    if not mask & (1 << (n_participants - 1)):
        raise ContractError(
            f"subset {subset_label(mask | (1 << (n_participants - 1)), n_participants)!s}"
            f" minus the active party is not gated: active bit missing from {bin(mask)}"
        )


def alignment_of(presence_row) -> int:
    """Bitmask of the participants present in one sample's presence row."""
    row = np.asarray(presence_row, dtype=bool)
    if row.ndim != 1 or row.size < 1:
        raise ValidationError("presence row must be a non-empty 1-D boolean vector")
    if not row[-1]:
        raise ContractError("active participant bit is unset in presence row")
    return int(sum(1 << k for k in range(row.size) if row[k]))


def align_by_ids(id_lists: Sequence[Sequence[Hashable]]) -> tuple[list, np.ndarray]:
    """Intersect participants' sample id lists against the active party's.

    The last list belongs to the active party and defines the row order of the
    result. Returns (active_ids, presence) where presence[i, k] says whether
    participant k also holds active id i. Ids must be unique per participant.
    """
    if len(id_lists) < 1:
        raise EmptyFederationError("need at least one participant")
    for k, ids in enumerate(id_lists):
        seen = set()
        for i in ids:
            if i in seen:
                raise ValidationError(f"participant {k} has duplicate sample id {i!r}")
            seen.add(i)
    active_ids = list(id_lists[-1])
    if not active_ids:
        raise ValidationError("active participant has no samples")
    n = len(active_ids)
    k_total = len(id_lists)
    presence = np.ones((n, k_total), dtype=bool)
    for k, ids in enumerate(id_lists[:-1]):
        held = set(ids)
        presence[:, k] = [i in held for i in active_ids]
    return active_ids, presence


def mcar_mask(n_samples: int, n_participants: int, p_miss: float, seed) -> np.ndarray:
    """Independent Bernoulli presence mask, missing-completely-at-random.

    Each (sample, passive participant) cell is dropped with probability
    ``p_miss``; the active column is never dropped. p_miss=0 keeps everything,
    p_miss=1 leaves only the active column.
    """
    if n_participants < 1:
        raise EmptyFederationError("need at least one participant")
    if n_samples < 0:
        raise ValidationError(f"n_samples must be non-negative, got {n_samples}")
    if not 0.0 <= p_miss <= 1.0:
        raise ValidationError(f"p_miss must lie in [0, 1], got {p_miss}")
    present = np.ones((n_samples, n_participants), dtype=bool)
    if n_participants > 1 and n_samples > 0:
        rng = np.random.default_rng(seed)
        draws = rng.random((n_samples, n_participants - 1))
        present[:, : n_participants - 1] = draws >= p_miss
    return present
