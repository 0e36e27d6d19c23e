import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memlab.linalg import basis_rows
from memlab.model import Activation, Network
from memlab.sampling import Dataset, derive_stream, sample_dataset, sample_signs, sample_weights
from memlab.training import (
    BreakpointProximityError,
    count_active,
    default_step_size,
    empirical_loss,
    finite_diff_gradient,
    full_gradient,
    gradient_by_rank1,
    gradient_oracle_error,
    gradient_step,
    leave_one_out_gradient,
    per_example_gradient,
    scaled_hinge,
)

from oracles import numerical_rank

SMOOTH = Activation("smoothed_abs", 0.1)


def instance(seed, d, q, m, act=SMOOTH, sign_mode="iid"):
    s = derive_stream(seed, 0)
    W = sample_weights(s.child(0), q, d)
    a = sample_signs(s.child(1), q, sign_mode)
    return Network(W, a, act), sample_dataset(s.child(2), m, d)


class TestHinge:
    def test_active(self):
        assert scaled_hinge(0.0, 1.0, 100) == pytest.approx(math.log(100))

    def test_inactive(self):
        assert scaled_hinge(10.0, 1.0, 100) == 0.0

    def test_at_kink(self):
        d = 100
        assert scaled_hinge(math.log(d), 1.0, d) == 0.0

    def test_rejects_small_d(self):
        with pytest.raises(ValueError):
            scaled_hinge(0.0, 1.0, 1)

    def test_step_size(self):
        assert default_step_size(1237, 2048) == pytest.approx(1237 * math.log(2048) / 2048, rel=1e-15)
        assert default_step_size(1237, 2048) == pytest.approx(4.6053, abs=1e-4)


class TestClosedForm:
    def test_single_neuron_by_hand(self):
        # d=2, q=1, abs, x=(0.5,0), y=1: h = 0.5 < ln 2, G = a * sign(w.x) * x^T
        net = Network(np.array([[1.0, 0.0]]), np.array([1.0]), Activation("abs"))
        data = Dataset(np.array([[0.5, 0.0]]), np.array([1.0]))
        G, active = full_gradient(net, data)
        np.testing.assert_array_equal(G, [[0.5, 0.0]])
        assert active == 1

    def test_per_example_matches_full_for_one_example(self):
        net, data = instance(3, 6, 3, 1)
        G, _ = full_gradient(net, data, "paper")
        np.testing.assert_allclose(per_example_gradient(net, data.inputs[0], data.labels[0], 1), G, rtol=1e-14)

    def test_label_flip_negates(self):
        net, data = instance(4, 10, 5, 7)
        flipped = Dataset(data.inputs, -data.labels)
        G, _ = full_gradient(net, data, "paper")
        Gf, _ = full_gradient(net, flipped, "paper")
        np.testing.assert_array_equal(Gf, -G)

    def test_empty_dataset(self):
        net, data = instance(4, 10, 5, 0)
        G, active = full_gradient(net, data)
        assert not G.any() and active == 0

    def test_unknown_mode(self):
        net, data = instance(4, 10, 5, 3)
        with pytest.raises(ValueError):
            full_gradient(net, data, "approx")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_rank1_path_agrees(self, seed):
        net, data = instance(seed, 12, 6, 9, Activation("abs"))
        for mode in ("exact", "paper"):
            G, _ = full_gradient(net, data, mode)
            np.testing.assert_allclose(gradient_by_rank1(net, data, mode), G, rtol=0, atol=1e-12)

    def test_additive_over_examples(self):
        net, data = instance(5, 12, 6, 10)
        m = data.m
        total = sum(per_example_gradient(net, x, y, m) for x, y in zip(data.inputs, data.labels))
        G, active = full_gradient(net, data, "paper")
        assert active == m
        np.testing.assert_allclose(G, total, rtol=0, atol=1e-12)

    def test_inactive_examples_dropped_in_exact_mode(self):
        net = Network(np.array([[1.0, 0.0]]), np.array([1.0]), Activation("abs"))
        d = 2
        big = 10 * math.log(d)  # margin far beyond ln d
        data = Dataset(np.array([[big, 0.0], [0.5, 0.0]]), np.array([1.0, 1.0]))
        # G = (1/m) * sum over counted examples of x^T
        G_exact, active = full_gradient(net, data, "exact")
        G_all, _ = full_gradient(net, data, "paper")
        assert active == 1 == count_active(net, data)
        np.testing.assert_allclose(G_exact, [[0.25, 0.0]])
        np.testing.assert_allclose(G_all, [[(big + 0.5) / 2, 0.0]])


class TestLeaveOneOut:
    def test_sums_to_full(self):
        net, data = instance(6, 16, 8, 12)
        G, _ = full_gradient(net, data)
        for i in (0, 5, 11):
            Gt = leave_one_out_gradient(net, data, i)
            Gi = per_example_gradient(net, data.inputs[i], data.labels[i], data.m)
            np.testing.assert_allclose(Gt + Gi, G, rtol=0, atol=1e-13)

    def test_difference_is_rank_one(self):
        net, data = instance(7, 16, 8, 12)
        G, _ = full_gradient(net, data)
        assert numerical_rank(G - leave_one_out_gradient(net, data, 3)) <= 1

    def test_out_of_range(self):
        net, data = instance(7, 16, 8, 12)
        with pytest.raises(IndexError):
            leave_one_out_gradient(net, data, 12)


class TestFiniteDifferences:
    def test_oracle_small_config(self):
        net, data = instance(0, 8, 4, 6)
        assert gradient_oracle_error(net, data, h=1e-5) <= 1e-6

    def test_fd_is_minus_gradient(self):
        net, data = instance(1, 8, 4, 6)
        G, _ = full_gradient(net, data)
        np.testing.assert_allclose(finite_diff_gradient(net, data), -G, atol=1e-8)

    def test_refuses_near_kink(self):
        net = Network(basis_rows(2, 3), np.array([1.0, -1.0]), Activation("abs"))
        data = Dataset(np.array([[1e-7, 1.0, 0.0]]), np.array([1.0]))
        with pytest.raises(BreakpointProximityError) as info:
            finite_diff_gradient(net, data)
        assert info.value.offending == [(0, 0)]

    def test_abs_away_from_kink(self):
        net, data = instance(2, 8, 4, 6, Activation("abs"))
        assert gradient_oracle_error(net, data) <= 1e-6

    def test_directional_derivative(self):
        # d/dt L(W + tG) at t=0 equals -||G||_F^2 when every hinge is active
        net, data = instance(8, 10, 5, 8)
        G, active = full_gradient(net, data)
        assert active == data.m
        t = 1e-6
        slope = (
            empirical_loss(net.with_weights(net.W + t * G), data)
            - empirical_loss(net.with_weights(net.W - t * G), data)
        ) / (2 * t)
        assert slope == pytest.approx(-np.sum(G * G), rel=1e-6)


class TestStep:
    def test_small_step_descends(self):
        net, data = instance(9, 20, 10, 15)
        before = empirical_loss(net, data)
        step = gradient_step(net, data, eta=1e-3)
        assert empirical_loss(net.with_weights(step.W_plus), data) < before

    def test_zero_step(self):
        net, data = instance(9, 20, 10, 15)
        step = gradient_step(net, data, eta=0.0)
        np.testing.assert_array_equal(step.W_plus, net.W)

    def test_default_eta(self):
        net, data = instance(9, 20, 10, 15)
        step = gradient_step(net, data)
        assert step.eta == default_step_size(15, 20)
        np.testing.assert_array_equal(step.W_plus, net.W + step.eta * step.G)

    def test_negative_eta(self):
        net, data = instance(9, 20, 10, 15)
        with pytest.raises(ValueError):
            gradient_step(net, data, eta=-1.0)

    def test_modes_identical_at_default_size(self):
        # all hinges are active before the step, so the two modes coincide bit for bit
        net, data = instance(10, 2048, 2048, 1237, Activation("abs"), "balanced")
        G_exact, active = full_gradient(net, data, "exact")
        G_all, _ = full_gradient(net, data, "paper")
        assert active == 1237
        assert G_exact.tobytes() == G_all.tobytes()
