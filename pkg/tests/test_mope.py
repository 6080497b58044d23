"""Mixture head tests: layout, padding, forward/backward, training, reports."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vflmope import (
    BlockLayout,
    ContractError,
    ShapeError,
    TrainConfig,
    UndefinedContributionError,
    ValidationError,
    contribution,
    decompose,
    init_mope_head,
    mope_forward,
    mope_loss_and_backward,
    pad_and_concat,
    per_sample_report,
    set_expert_call_hook,
    stack_padded,
    train_mope,
)
from vflmope.mope import GATE_MASS_EPS, subset_labels

import _oracles as oracle


def small_head(dims=(2, 3), classes=3, seed=0, router_hidden=4):
    return init_mope_head(BlockLayout(dims), classes, seed, router_hidden=router_hidden)


class TestBlockLayout:
    def test_offsets_and_slices(self):
        layout = BlockLayout((3, 2, 4))
        assert layout.total_dim == 9
        assert layout.offset_of(0) == 0
        assert layout.offset_of(2) == 5
        assert layout.slice_of(1) == slice(3, 5)

    def test_subset_indices_order(self):
        layout = BlockLayout((2, 2, 2))
        np.testing.assert_array_equal(layout.subset_indices(0b101), [0, 1, 4, 5])
        assert layout.subset_dim(0b101) == 4

    def test_invalid_width_rejected(self):
        with pytest.raises(ShapeError):
            BlockLayout((2, 0))
        with pytest.raises(ShapeError):
            BlockLayout(())

    def test_out_of_range_participant(self):
        layout = BlockLayout((2, 2))
        with pytest.raises(ShapeError):
            layout.slice_of(2)


class TestPadding:
    def test_missing_passive_zero_filled(self):
        layout = BlockLayout((3, 2))
        out = pad_and_concat([None, np.array([1.0, 2.0])], layout)
        np.testing.assert_array_equal(out, [0, 0, 0, 1, 2])

    def test_all_present(self):
        layout = BlockLayout((2, 2))
        out = pad_and_concat([np.array([1.0, 2.0]), np.array([3.0, 4.0])], layout)
        np.testing.assert_array_equal(out, [1, 2, 3, 4])

    def test_active_required(self):
        layout = BlockLayout((2, 2))
        with pytest.raises(ContractError):
            pad_and_concat([np.zeros(2), None], layout)

    def test_block_count_checked(self):
        with pytest.raises(ShapeError):
            pad_and_concat([np.zeros(2)], BlockLayout((2, 2)))

    def test_block_width_checked(self):
        with pytest.raises(ShapeError):
            pad_and_concat([np.zeros(3), np.zeros(2)], BlockLayout((2, 2)))

    def test_round_trip_through_decompose(self, rng):
        layout = BlockLayout((3, 2, 4))
        blocks = [rng.normal(size=3), None, rng.normal(size=4)]
        agg = pad_and_concat(blocks, layout)
        np.testing.assert_array_equal(decompose(agg, 0b101, layout),
                                      np.concatenate([blocks[0], blocks[2]]))
        np.testing.assert_array_equal(agg[layout.slice_of(1)], np.zeros(2))

    def test_stack_padded_zeroes_absent_rows(self, rng):
        layout = BlockLayout((2, 2))
        mats = [rng.normal(size=(3, 2)), rng.normal(size=(3, 2))]
        presence = np.array([[True, True], [False, True], [True, True]])
        out = stack_padded(mats, presence, layout)
        np.testing.assert_array_equal(out[1, :2], [0, 0])
        np.testing.assert_array_equal(out[0, :2], mats[0][0])
        np.testing.assert_array_equal(out[:, 2:], mats[1])

    def test_stack_padded_requires_active_column(self, rng):
        layout = BlockLayout((2, 2))
        mats = [rng.normal(size=(2, 2)), rng.normal(size=(2, 2))]
        presence = np.array([[True, True], [True, False]])
        with pytest.raises(ContractError):
            stack_padded(mats, presence, layout)

    def test_decompose_batch(self, rng):
        layout = BlockLayout((2, 3))
        agg = rng.normal(size=(5, 5))
        sub = decompose(agg, 0b10, layout)
        np.testing.assert_array_equal(sub, agg[:, 2:])


class TestInit:
    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_expert_count(self, k):
        head = small_head(dims=(2,) * k)
        assert len(head.experts) == 2 ** (k - 1)
        head.validate()

    def test_expert_widths(self):
        head = small_head(dims=(2, 3))
        # canonical order: {A} then {P0, A}
        assert head.experts[0].in_dim == 3
        assert head.experts[0].hidden_dim == 6
        assert head.experts[1].in_dim == 5
        assert head.experts[1].hidden_dim == 10

    def test_router_shape(self):
        head = small_head(dims=(2, 3), router_hidden=7)
        assert head.router.in_dim == 5
        assert head.router.hidden_dim == 7
        assert head.router.out_dim == 2

    def test_deterministic(self):
        a = small_head(seed=5)
        b = small_head(seed=5)
        np.testing.assert_array_equal(a.router.w1, b.router.w1)
        for ea, eb in zip(a.experts, b.experts):
            np.testing.assert_array_equal(ea.w1, eb.w1)

    def test_copy_is_deep(self):
        head = small_head()
        dup = head.copy()
        dup.router.w1[0, 0] += 1.0
        assert head.router.w1[0, 0] != dup.router.w1[0, 0]

    def test_too_few_classes(self):
        with pytest.raises(ValidationError):
            init_mope_head(BlockLayout((2, 2)), 1, seed=0)


class TestForward:
    def test_matches_loop_oracle(self, rng):
        head = small_head(dims=(2, 3), classes=4, seed=3)
        z = rng.normal(size=(6, 5))
        out = mope_forward(head, z)
        expected_probs, expected_gates = oracle.mixture_probs_loops(head, z)
        np.testing.assert_allclose(out.probs, expected_probs, rtol=1e-10)
        np.testing.assert_allclose(out.gates, expected_gates, rtol=1e-10)

    def test_probabilities_normalized(self, rng):
        head = small_head(dims=(3, 2, 2), classes=5, seed=1)
        out = mope_forward(head, rng.normal(size=(10, 7)))
        np.testing.assert_allclose(out.probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(out.probs >= 0.0)

    def test_every_expert_evaluated_on_every_sample(self, rng):
        head = small_head(dims=(2, 2, 2), seed=2)
        calls = []
        previous = set_expert_call_hook(lambda i, n: calls.append((i, n)))
        try:
            mope_forward(head, rng.normal(size=(7, 6)))
        finally:
            set_expert_call_hook(previous)
        assert calls == [(i, 7) for i in range(4)]

    def test_single_sample_squeeze(self, rng):
        head = small_head()
        out = mope_forward(head, rng.normal(size=5))
        assert out.probs.shape == (3,)
        assert out.gates.shape == (2,)
        assert out.expert_probs.shape == (2, 3)

    def test_batch_consistent_with_single(self, rng):
        head = small_head(seed=8)
        z = rng.normal(size=(4, 5))
        batch = mope_forward(head, z)
        for b in range(4):
            single = mope_forward(head, z[b])
            np.testing.assert_allclose(batch.probs[b], single.probs, rtol=1e-12)

    def test_non_finite_input_rejected(self):
        head = small_head()
        bad = np.zeros(5)
        bad[2] = np.inf
        with pytest.raises(ValidationError):
            mope_forward(head, bad)

    def test_width_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            mope_forward(small_head(), np.zeros(4))

    def test_gate_mass_floor_keeps_probs_finite(self):
        # router biased so hard negative that every gate underflows to 0
        head = small_head()
        head.router.b2[:] = -800.0
        out = mope_forward(head, np.ones(5))
        assert np.isfinite(out.probs).all()
        np.testing.assert_array_equal(out.gates, 0.0)


class TestBackward:
    def test_all_gradients_match_finite_differences(self, rng):
        head = small_head(dims=(2, 3), classes=3, seed=7, router_hidden=4)
        z = rng.normal(size=(4, 5))
        y = rng.integers(0, 3, size=4)

        def loss_fn():
            loss, _ = mope_loss_and_backward(head, z, y)
            return loss

        _, grads = mope_loss_and_backward(head, z, y)
        tensors = [head.router.w1, head.router.b1, head.router.w2, head.router.b2]
        analytic = [grads.router.w1, grads.router.b1, grads.router.w2, grads.router.b2]
        for e, ge in zip(head.experts, grads.experts):
            tensors += [e.w1, e.b1, e.w2, e.b2]
            analytic += [ge.w1, ge.b1, ge.w2, ge.b2]
        numeric = oracle.numeric_gradient(loss_fn, tensors)
        for a, n in zip(analytic, numeric):
            assert oracle.relative_error(a, n) < 1e-5

    def test_collapsed_gate_blocks_expert_gradient(self, rng):
        head = small_head(seed=4)
        head.router.b2[0] = -800.0  # gate 0 underflows to exactly 0
        z = rng.normal(size=(5, 5))
        _, grads = mope_loss_and_backward(head, z, rng.integers(0, 3, size=5))
        for _, arr in grads.experts[0].params():
            np.testing.assert_array_equal(arr, 0.0)
        assert any(np.any(arr != 0) for _, arr in grads.experts[1].params())

    def test_loss_value_is_clamped_nll(self, rng):
        head = small_head(seed=6)
        z = rng.normal(size=(8, 5))
        y = rng.integers(0, 3, size=8)
        loss, _ = mope_loss_and_backward(head, z, y)
        out = mope_forward(head, z)
        expected = float(np.mean(-np.log(np.maximum(
            out.probs[np.arange(8), y], 1e-12))))
        np.testing.assert_allclose(loss, expected, rtol=1e-12)

    def test_label_validation(self, rng):
        head = small_head()
        z = rng.normal(size=(2, 5))
        with pytest.raises(ValidationError):
            mope_loss_and_backward(head, z, [0, 5])
        with pytest.raises(ValidationError):
            mope_loss_and_backward(head, z, [0.5, 1.0])
        with pytest.raises(ShapeError):
            mope_loss_and_backward(head, z, [0])


class TestTraining:
    def test_zero_epochs_returns_untrained_copy(self, rng):
        head = small_head()
        feats = rng.normal(size=(10, 5))
        trained, trace = train_mope(head, feats, rng.integers(0, 3, 10),
                                    TrainConfig(epochs=0))
        assert trace == []
        np.testing.assert_array_equal(trained.router.w1, head.router.w1)
        assert trained is not head

    def test_deterministic(self, rng):
        head = small_head(seed=1)
        feats = rng.normal(size=(30, 5))
        y = rng.integers(0, 3, 30)
        cfg = TrainConfig(epochs=3, batch_size=8, lr=1e-3, seed=42)
        a, trace_a = train_mope(head, feats, y, cfg)
        b, trace_b = train_mope(head, feats, y, cfg)
        assert trace_a == trace_b
        np.testing.assert_array_equal(a.router.w1, b.router.w1)
        for ea, eb in zip(a.experts, b.experts):
            np.testing.assert_array_equal(ea.w2, eb.w2)

    def test_input_head_untouched(self, rng):
        head = small_head(seed=2)
        before = head.copy()
        feats = rng.normal(size=(20, 5))
        train_mope(head, feats, rng.integers(0, 3, 20),
                   TrainConfig(epochs=2, batch_size=10, lr=1e-3))
        np.testing.assert_array_equal(head.router.w1, before.router.w1)

    def test_loss_decreases_on_separable_data(self, rng):
        # two well-separated classes; the mixture should fit them quickly
        n = 60
        y = np.repeat([0, 1], n // 2)
        feats = rng.normal(size=(n, 5)) + 4.0 * (2 * y[:, None] - 1)
        head = init_mope_head(BlockLayout((2, 3)), 2, seed=0, router_hidden=8)
        _, trace = train_mope(head, feats, y, TrainConfig(epochs=20, batch_size=16, lr=3e-3, seed=0))
        assert trace[-1] < 0.3 * trace[0]

    def test_empty_dataset_rejected(self):
        head = small_head()
        with pytest.raises(ValidationError):
            train_mope(head, np.zeros((0, 5)), [], TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(epochs=-1).validate()
        with pytest.raises(ValidationError):
            TrainConfig(batch_size=0).validate()
        with pytest.raises(ValidationError):
            TrainConfig(lr=0.0).validate()


class TestContribution:
    def test_active_share_is_one(self):
        subsets = (0b10, 0b11)
        assert contribution([0.3, 0.6], subsets, 1) == 1.0

    @given(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4))
    def test_shares_bounded_and_active_exact(self, gate_values):
        subsets = (0b100, 0b101, 0b110, 0b111)  # K = 3
        g = np.array(gate_values)
        assert contribution(g, subsets, 2) == 1.0
        for k in (0, 1):
            share = contribution(g, subsets, k)
            assert 0.0 <= share <= 1.0
            np.testing.assert_allclose(
                share, oracle.contribution_loops(g, subsets, k)[0], rtol=1e-12)

    def test_known_two_party_value(self):
        # gates (g_A, g_PA) = (0, 0.99): all mass sits on the joint expert
        subsets = (0b10, 0b11)
        assert contribution([0.0, 0.99], subsets, 0) == 1.0

    def test_passive_only_excludes_active_only_expert(self):
        subsets = (0b10, 0b11)
        share = contribution([0.5, 0.5], subsets, 0, passive_only=True)
        assert share == 1.0

    def test_literal_form_counts_experts(self):
        subsets = (0b100, 0b101, 0b110, 0b111)
        out = contribution([0.2, 0.3, 0.4, 0.5], subsets, 0, literal=True)
        assert out == 2.0  # two subsets contain participant 0

    def test_literal_form_nan_on_zero_gate(self):
        subsets = (0b10, 0b11)
        assert np.isnan(contribution([0.0, 0.5], subsets, 1, literal=True))

    def test_all_zero_gates_undefined(self):
        with pytest.raises(UndefinedContributionError):
            contribution([0.0, 0.0], (0b10, 0b11), 0)

    def test_negative_gate_rejected(self):
        with pytest.raises(ValidationError):
            contribution([-0.1, 0.5], (0b10, 0b11), 0)

    def test_gate_count_checked(self):
        with pytest.raises(ShapeError):
            contribution([0.5], (0b10, 0b11), 0)


class TestReport:
    def test_keys_and_padded_flags(self, rng):
        head = small_head(dims=(2, 3), seed=9)
        z = pad_and_concat([None, rng.normal(size=3)], head.layout)
        row = per_sample_report(head, z, sample_id=17, label=2,
                                presence_row=[False, True])
        assert list(row) == ["sample_id", "gates", "contributions",
                             "predicted", "label", "padded"]
        assert row["sample_id"] == 17
        assert row["label"] == 2
        assert row["padded"] == [0]
        assert len(row["gates"]) == 2
        assert len(row["contributions"]) == 2
        assert row["contributions"][1] == 1.0
        assert 0 <= row["predicted"] < 3

    def test_no_label_no_presence(self, rng):
        head = small_head()
        row = per_sample_report(head, rng.normal(size=5), sample_id="s1")
        assert row["label"] is None
        assert row["padded"] == []

    def test_batch_input_rejected(self, rng):
        head = small_head()
        with pytest.raises(ShapeError):
            per_sample_report(head, rng.normal(size=(2, 5)), sample_id=0)

    def test_presence_row_validated(self, rng):
        head = small_head()
        z = rng.normal(size=5)
        with pytest.raises(ShapeError):
            per_sample_report(head, z, sample_id=0, presence_row=[True])
        with pytest.raises(ContractError):
            per_sample_report(head, z, sample_id=0, presence_row=[True, False])

    def test_subset_labels(self):
        assert subset_labels(small_head(dims=(2, 3))) == ["A", "P0+A"]
        assert subset_labels(small_head(dims=(2, 2, 2))) == [
            "A", "P0+A", "P1+A", "P0+P1+A"]
