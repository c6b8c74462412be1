import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierfolio.allocator import (
    AllocatorConfig,
    GroupMoments,
    aggregate_global_mass,
    allocate,
    capital_split,
    detect_rebound,
    estimate_moments,
    final_weights,
    fuse_on_rebound,
    momentum_adjust,
    momentum_strength,
    utility_optimal,
)
from hierfolio.clustering import GroupMask
from hierfolio.errors import (
    BlendOutOfRange,
    DegenerateExcessReturn,
    InvalidBounds,
    MaskMismatch,
    NonPositiveTemperature,
    WindowTooShort,
)


def moments(mu, sigma):
    return GroupMoments(np.asarray(mu, float), np.asarray(sigma, float), 10, 0.0)


def random_spd(rng, n=2):
    a = rng.normal(size=(n, n))
    return a @ a.T + 0.1 * np.eye(n)


class TestMoments:
    def test_constant_returns(self):
        R = np.tile([[0.01], [0.02]], (1, 30))
        mo = estimate_moments(R, 1e-6)
        np.testing.assert_allclose(mo.mu, [0.01, 0.02], rtol=1e-14)
        np.testing.assert_allclose(mo.sigma, 1e-6 * np.eye(2), atol=1e-20)

    def test_two_period_textbook(self):
        R = np.array([[0.01, 0.03], [0.02, -0.02]])
        mo = estimate_moments(R, 0.0)
        # two-sample covariance: (x1 - x2)(y1 - y2) / 2
        assert mo.sigma[0, 1] == pytest.approx((0.01 - 0.03) * (0.02 + 0.02) / 2, abs=1e-18)
        assert mo.sigma[0, 0] == pytest.approx((0.01 - 0.03) ** 2 / 2, abs=1e-18)

    def test_brute_force(self):
        R = np.random.default_rng(0).normal(0.001, 0.02, (2, 500))
        mo = estimate_moments(R, 1e-6)
        mu = [sum(R[i]) / 500 for i in range(2)]
        for i in range(2):
            for j in range(2):
                s = sum((R[i, k] - mu[i]) * (R[j, k] - mu[j]) for k in range(500)) / 499
                s += 1e-6 if i == j else 0.0
                assert abs(mo.sigma[i, j] - s) <= 1e-10
        assert np.all(np.linalg.eigvalsh(mo.sigma) > 0)

    def test_too_short(self):
        with pytest.raises(WindowTooShort):
            estimate_moments(np.zeros((2, 1)))


class TestUtilityOptimal:
    def test_identity_example(self):
        np.testing.assert_allclose(utility_optimal(moments([1.0, 0.0], np.eye(2)), 0.0, -1.0), [1.0, 0.0])

    def test_zero_hyperplane(self):
        np.testing.assert_array_equal(utility_optimal(moments([0.3, 0.1], np.eye(2)), 0.0, 0.0), [0.0, 0.0])

    def test_degenerate(self):
        with pytest.raises(DegenerateExcessReturn):
            utility_optimal(moments([0.01, 0.01], np.eye(2)), 0.01, -0.05)

    @given(st.integers(0, 2**31 - 1), st.floats(-1.0, 1.0))
    def test_constraint_residual(self, seed, c):
        rng = np.random.default_rng(seed)
        mo = moments(rng.normal(0, 0.02, 2), random_spd(rng) * 1e-3)
        w = utility_optimal(mo, 0.0001, c)
        assert abs(w @ (mo.mu - 0.0001) + c) <= 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_variance_minimal_on_hyperplane(self, seed):
        rng = np.random.default_rng(seed)
        mo = moments(rng.normal(0, 0.02, 2), random_spd(rng) * 1e-3)
        c, r_A = -0.05, 0.0001
        w = utility_optimal(mo, r_A, c)
        e = mo.mu - r_A
        d = np.array([-e[1], e[0]])  # direction along the hyperplane
        ts = rng.normal(0, 10 * np.abs(w).max() / np.linalg.norm(d), 10_000)
        xs = w + ts[:, None] * d
        var_x = np.einsum("ij,jk,ik->i", xs, mo.sigma, xs)
        assert np.all(w @ mo.sigma @ w <= var_x + 1e-15)

    @given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0), st.floats(1.0, 1e7))
    def test_alpha_wealth_invariance(self, seed, alpha, wealth):
        rng = np.random.default_rng(seed)
        mo = moments(rng.normal(0, 0.02, 2), random_spd(rng))
        np.testing.assert_array_equal(utility_optimal(mo, 0.0, -0.05),
                                      utility_optimal(mo, 0.0, -0.05, alpha=alpha, wealth=wealth))

    def test_monotone_in_c(self):
        mo = moments([0.02, 0.01], np.eye(2))
        prev = None
        for c in np.linspace(-1, 1, 21):
            w = utility_optimal(mo, 0.0, c)
            if prev is not None:
                assert np.all(w < prev)
            prev = w


class TestMomentum:
    def test_strength(self):
        np.testing.assert_array_equal(momentum_strength([0, 0], -0.5, 0.5), [0, 0])
        np.testing.assert_array_equal(momentum_strength([1, -1], -0.5, 0.5), [0.5, -0.5])
        np.testing.assert_allclose(momentum_strength([0.1, -0.05], -0.5, 0.5), [0.3, -0.15], atol=1e-15)
        with pytest.raises(InvalidBounds):
            momentum_strength([0, 0], 0.5, -0.5)

    def test_adjust(self):
        np.testing.assert_array_equal(momentum_adjust([0.3, -0.2], [0.4, 0.1], [0, 0]), [0.3, -0.2])
        np.testing.assert_array_equal(momentum_adjust([0.3, -0.2], [0, 0], [1, 2]), [0.3, -0.2])
        got = momentum_adjust([1, 1], [0.5, 0.5], [5, -5])
        np.testing.assert_allclose(got, [1 + 0.5 * math.tanh(5), 1 - 0.5 * math.tanh(5)], atol=1e-15)
        np.testing.assert_allclose(got, [1.49995, 0.50005], atol=1e-5)


class TestRebound:
    def test_truth_table(self):
        hit = [-0.05, -0.05, -0.05, 0.01, 0.01]
        assert detect_rebound([hit], 3, -0.02, 0.005).tolist() == [True]
        assert detect_rebound([[0.0] * 5], 3, -0.02, 0.005).tolist() == [False]
        one_up = [-0.05, -0.05, -0.05, 0.001, 0.01]
        assert detect_rebound([one_up], 3, -0.02, 0.005).tolist() == [False]

    def test_errors(self):
        with pytest.raises(WindowTooShort):
            detect_rebound([[0.0] * 4], 3)
        with pytest.raises(InvalidBounds):
            detect_rebound([[0.0] * 5], 3, 0.01, 0.02)


class TestFusion:
    def test_global_mass(self):
        masks = GroupMask([1, 1, 0, 0], [0, 0, 1, 1])
        np.testing.assert_array_equal(aggregate_global_mass(np.full(4, 0.25), masks), [0.5, 0.5])
        np.testing.assert_array_equal(aggregate_global_mass([1, 0, 0, 0], masks), [1.0, 0.0])

    @given(st.integers(0, 2**31 - 1))
    def test_global_mass_sums_to_one(self, seed):
        rng = np.random.default_rng(seed)
        m1 = rng.integers(0, 2, 7)
        g = aggregate_global_mass(rng.dirichlet(np.ones(7)), GroupMask(m1, 1 - m1))
        assert abs(g.sum() - 1.0) <= 1e-12

    def test_fuse(self):
        s, g = [0.2, 0.4], [0.6, 0.1]
        np.testing.assert_array_equal(fuse_on_rebound(s, g, (False, False), 0.7), s)
        np.testing.assert_array_equal(fuse_on_rebound(s, g, (True, True), 0.0), s)
        np.testing.assert_allclose(fuse_on_rebound(s, g, (True, False), 0.5), [0.4, 0.4], atol=1e-15)
        with pytest.raises(BlendOutOfRange):
            fuse_on_rebound(s, g, (True, True), 1.5)


class TestCapitalSplit:
    def test_equal_logits(self):
        np.testing.assert_allclose(capital_split([0, 0], 0.5), [1 / 3] * 3, atol=1e-15)

    def test_hot_temperature(self):
        np.testing.assert_allclose(capital_split([3.0, -2.0], 1e9), [1 / 3] * 3, atol=1e-6)

    def test_ln2_logit(self):
        np.testing.assert_allclose(capital_split([0.6931, 0.0], 1.0), [0.25, 0.5, 0.25], atol=1e-4)

    def test_unavailable_group(self):
        f, a, b = capital_split([0.0, 5.0], 1.0, (True, False))
        assert b == 0.0 and f == pytest.approx(0.5)

    def test_bad_temperature(self):
        with pytest.raises(NonPositiveTemperature):
            capital_split([0, 0], 0.0)


class TestFinalWeights:
    def test_all_risk_free(self):
        d = final_weights([0.5, 0.5, 0], [0, 0, 1], (1.0, 0.0, 0.0))
        np.testing.assert_array_equal(d.final, [0, 0, 0])

    def test_single_asset(self):
        d = final_weights([1.0], [0.0], (0.5, 0.5, 0.0))
        assert d.final.tolist() == [0.5]

    def test_mask_mismatch(self):
        with pytest.raises(MaskMismatch):
            final_weights([0.5, 0.5], [0, 0], (0, 1, 0), GroupMask([1, 0], [0, 1]))

    @given(st.integers(0, 2**31 - 1))
    def test_budget_identity(self, seed):
        rng = np.random.default_rng(seed)
        m1 = np.array([1, 1, 1, 0, 0, 0])
        i1 = np.where(m1 == 1, rng.dirichlet(np.ones(6)), 0)
        i1 /= i1.sum()
        i2 = np.where(m1 == 0, rng.dirichlet(np.ones(6)), 0)
        i2 /= i2.sum()
        caps = capital_split(rng.normal(size=2), 0.5)
        d = final_weights(i1, i2, caps, GroupMask(m1, 1 - m1))
        assert d.budget_residual() <= 1e-12


class TestAllocate:
    masks = GroupMask([1, 1, 0, 0], [0, 0, 1, 1])
    intra1 = np.array([0.5, 0.5, 0, 0])
    intra2 = np.array([0, 0, 0.5, 0.5])

    @given(st.integers(0, 2**31 - 1))
    def test_budget_and_support(self, seed):
        rng = np.random.default_rng(seed)
        R = rng.normal(0.0005, 0.02, (4, 60))
        d = allocate(self.intra1, self.intra2, np.full(4, 0.25), self.masks, R, 0.0001)
        assert d.budget_residual() <= 1e-12
        assert min(d.caps) >= 0

    def test_short_history_falls_back_to_cash(self):
        d = allocate(self.intra1, self.intra2, np.full(4, 0.25), self.masks, np.zeros((4, 2)), 0.0)
        assert d.caps == (1.0, 0.0, 0.0)
        assert d.diagnostics["fallback"]

    def test_flat_returns_fall_back(self):
        d = allocate(self.intra1, self.intra2, np.full(4, 0.25), self.masks, np.zeros((4, 60)), 0.0)
        assert d.caps == (1.0, 0.0, 0.0)

    def test_rebound_gate_soundness(self):
        rng = np.random.default_rng(3)
        R = rng.normal(0.0, 0.001, (4, 60))
        cfg = AllocatorConfig(eta_blend=1.0)
        d = allocate(self.intra1, self.intra2, np.array([1.0, 0, 0, 0]), self.masks, R, 0.0, cfg)
        assert not any(d.rebound_flags)
        np.testing.assert_array_equal(d.diagnostics["omega_new"], d.diagnostics["omega_star"])

    def test_rebound_blends_upper_view(self):
        R = np.zeros((4, 60))
        R[:, :-2] = np.random.default_rng(1).normal(0, 0.001, (4, 58))
        R[:2, -5:-2] = -0.05
        R[:2, -2:] = 0.01
        cfg = AllocatorConfig(eta_blend=0.5)
        d = allocate(self.intra1, self.intra2, np.array([1.0, 0, 0, 0]), self.masks, R, 0.0, cfg)
        assert d.rebound_flags == (True, False)
        star, new = d.diagnostics["omega_star"], d.diagnostics["omega_new"]
        assert new[0] == pytest.approx(0.5 * star[0] + 0.5, abs=1e-12)
        assert new[1] == star[1]
