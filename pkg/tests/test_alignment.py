"""Subset algebra, id alignment, and MCAR mask tests."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vflmope import (
    ContractError,
    EmptyFederationError,
    ValidationError,
    active_subsets,
    align_by_ids,
    alignment_of,
    mcar_mask,
    members,
    subset_label,
)
from vflmope.alignment import check_subset, mask_from_members


class TestActiveSubsets:
    def test_k2(self):
        # {A} = 0b10, {P0,A} = 0b11
        assert active_subsets(2) == [0b10, 0b11]

    def test_k3(self):
        assert active_subsets(3) == [0b100, 0b101, 0b110, 0b111]

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
    def test_count_and_membership(self, k):
        subs = active_subsets(k)
        assert len(subs) == 2 ** (k - 1)
        assert len(set(subs)) == len(subs)
        active_bit = 1 << (k - 1)
        for s in subs:
            assert s & active_bit
        assert subs == sorted(subs)

    def test_empty_federation(self):
        with pytest.raises(EmptyFederationError):
            active_subsets(0)


class TestMaskAlgebra:
    def test_members_known(self):
        assert members(0b101) == (0, 2)
        assert members(0) == ()

    @given(st.lists(st.integers(0, 10), max_size=8))
    def test_round_trip(self, indices):
        mask = mask_from_members(indices)
        assert members(mask) == tuple(sorted(set(indices)))

    def test_negative_rejected(self):
        with pytest.raises(ContractError):
            members(-1)
        with pytest.raises(ContractError):
            mask_from_members([2, -1])

    def test_subset_label(self):
        assert subset_label(0b10, 2) == "A"
        assert subset_label(0b11, 2) == "P0+A"
        assert subset_label(0b111, 3) == "P0+P1+A"
        assert subset_label(0b101, 3) == "P0+A"

    def test_subset_label_out_of_range(self):
        with pytest.raises(ContractError):
            subset_label(0b1000, 3)

    def test_check_subset(self):
        check_subset(0b11, 2)
        with pytest.raises(ContractError):
            check_subset(0b01, 2)  # active bit missing
        with pytest.raises(ContractError):
            check_subset(0b100, 2)  # beyond K
        with pytest.raises(ContractError):
            check_subset(0, 2)


class TestAlignmentOf:
    def test_full_row(self):
        assert alignment_of([True, True, True]) == 0b111

    def test_partial_row(self):
        assert alignment_of([False, True, True]) == 0b110

    def test_active_missing_rejected(self):
        with pytest.raises(ContractError):
            alignment_of([True, True, False])

    def test_bad_shape(self):
        with pytest.raises(ValidationError):
            alignment_of(np.ones((2, 2), dtype=bool))


class TestAlignByIds:
    def test_intersection_semantics(self):
        ids, presence = align_by_ids([[10, 30, 50], [20, 30, 10], [10, 20, 30, 40]])
        assert ids == [10, 20, 30, 40]
        expected = np.array([
            [True, True, True],    # 10 held by both passives
            [False, True, True],   # 20 only by participant 1
            [True, True, True],    # 30 by both
            [False, False, True],  # 40 by neither
        ])
        np.testing.assert_array_equal(presence, expected)

    def test_active_order_preserved(self):
        ids, _ = align_by_ids([[3, 1], [2, 3, 1]])
        assert ids == [2, 3, 1]

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            align_by_ids([[1, 1], [1, 2]])

    def test_empty_active_rejected(self):
        with pytest.raises(ValidationError):
            align_by_ids([[1, 2], []])

    def test_no_participants_rejected(self):
        with pytest.raises(EmptyFederationError):
            align_by_ids([])

    def test_active_column_always_true(self):
        _, presence = align_by_ids([[], [7, 8]])
        assert presence[:, -1].all()


class TestMcarMask:
    def test_reproducible(self):
        a = mcar_mask(50, 3, 0.4, seed=9)
        b = mcar_mask(50, 3, 0.4, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_active_column_never_dropped(self):
        m = mcar_mask(200, 4, 0.99, seed=0)
        assert m[:, -1].all()

    def test_p_zero_keeps_everything(self):
        assert mcar_mask(20, 3, 0.0, seed=1).all()

    def test_p_one_drops_all_passives(self):
        m = mcar_mask(20, 3, 1.0, seed=1)
        assert not m[:, :-1].any()
        assert m[:, -1].all()

    def test_empirical_rate(self):
        m = mcar_mask(20000, 2, 0.3, seed=5)
        rate = 1.0 - m[:, 0].mean()
        assert abs(rate - 0.3) < 0.02

    def test_columns_independent(self):
        # correlation between passive columns should be negligible
        m = mcar_mask(20000, 3, 0.5, seed=7).astype(float)
        corr = np.corrcoef(m[:, 0], m[:, 1])[0, 1]
        assert abs(corr) < 0.03

    def test_shape(self):
        assert mcar_mask(7, 4, 0.5, seed=0).shape == (7, 4)
        assert mcar_mask(0, 4, 0.5, seed=0).shape == (0, 4)

    @pytest.mark.parametrize("bad_p", [-0.1, 1.1, np.nan])
    def test_bad_probability_rejected(self, bad_p):
        with pytest.raises(ValidationError):
            mcar_mask(5, 2, bad_p, seed=0)

    def test_bad_counts_rejected(self):
        with pytest.raises(ValidationError):
            mcar_mask(-1, 2, 0.5, seed=0)
        with pytest.raises(EmptyFederationError):
            mcar_mask(5, 0, 0.5, seed=0)
