"""Compiled kernels and their numpy fallbacks must agree."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierfolio import _kernels
from hierfolio._accel import numba_enabled


def test_env_flag_switches_path(monkeypatch):
    monkeypatch.setenv("HIERFOLIO_DISABLE_NUMBA", "1")
    assert not numba_enabled()
    monkeypatch.setenv("HIERFOLIO_DISABLE_NUMBA", "0")
    assert numba_enabled()


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.integers(3, 15))
def test_lloyd_parity(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    c0 = X[rng.choice(n, 2, replace=False)].copy()
    a = _kernels.lloyd.jit(X, c0.copy(), 100)
    b = _kernels.lloyd.numpy(X, c0.copy(), 100)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a[2], b[2], rtol=1e-12, atol=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_log_wealth_parity(seed):
    rng = np.random.default_rng(seed)
    B = rng.dirichlet(np.ones(4), 50)
    X = np.exp2(rng.normal(0, 0.05, (7, 4)))
    np.testing.assert_allclose(_kernels.log_wealth.jit(B, X), _kernels.log_wealth.numpy(B, X), rtol=1e-12, atol=1e-14)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.sampled_from([0.0, 0.3, 0.8]))
def test_corn_match_parity(seed, w, rho):
    X = np.exp2(np.random.default_rng(seed).normal(0, 0.05, (30, 4)))
    np.testing.assert_array_equal(_kernels.corn_match.jit(X, w, rho), _kernels.corn_match.numpy(X, w, rho))


def test_log_optimal_parity():
    X = np.exp2(np.random.default_rng(0).normal(0, 0.05, (20, 4)))
    a = _kernels.log_optimal.jit(X, 50)
    b = _kernels.log_optimal.numpy(X, 50)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    assert abs(a.sum() - 1) <= 1e-12


def test_ou_trace_parity():
    normals = np.random.default_rng(0).standard_normal((500, 3))
    a = _kernels.ou_trace.jit(np.zeros(3), 0.15, 0.2, normals)
    b = _kernels.ou_trace.numpy(np.zeros(3), 0.15, 0.2, normals)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.5))
def test_feasible_scale_parity(seed, cs):
    rng = np.random.default_rng(seed)
    m = 5
    in1 = rng.integers(0, 2, m).astype(bool)
    w_prev = rng.dirichlet(np.ones(m + 1))[:m]
    w_new = rng.dirichlet(np.ones(m + 1))[:m]
    intra_prev = np.zeros(m)
    for on in (in1, ~in1):
        if w_prev[on].sum() > 0:
            intra_prev[on] = w_prev[on] / w_prev[on].sum()
    args = (100.0, 1 - w_prev.sum(), 1 - w_new.sum(), w_prev, w_new, intra_prev, in1,
            100.0 * w_prev[in1].sum(), 100.0 * w_prev[~in1].sum(), cs, 60)
    a = _kernels.feasible_scale.jit(*args)
    b = _kernels.feasible_scale.numpy(*args)
    assert a == pytest.approx(b, abs=1e-12)
    assert 0.0 <= a <= 1.0
