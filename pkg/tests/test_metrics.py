import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierfolio.errors import NoDownside, ZeroVariance
from hierfolio.market_data import SORTINO_SENTINEL
from hierfolio.metrics import (
    cumulative_return,
    omega,
    performance_report,
    sharpe,
    sortino,
    write_reports,
)

R_A = math.log2(1.02) / 252


def loop_sharpe(x, r):
    n = len(x)
    mean = sum(v - r for v in x) / n
    mu = sum(x) / n
    return mean / math.sqrt(sum((v - mu) ** 2 for v in x) / n)


def loop_sortino(x, r):
    excess = [v - r for v in x]
    down = [e * e for e in excess if e < 0]
    return (sum(excess) / len(x)) / math.sqrt(sum(down) / len(down))


def loop_omega(x, r):
    gain = sum(v - r for v in x if v >= r)
    loss = sum(r - v for v in x if v < r)
    return gain / loss


class TestExamples:
    def test_cumulative(self):
        assert cumulative_return([]) == 0.0
        assert cumulative_return([1, -1]) == 0.0
        assert cumulative_return([0.3, 0.4047]) == pytest.approx(0.7047, abs=1e-15)

    def test_sharpe(self):
        with pytest.raises(ZeroVariance):
            sharpe([0.01] * 5)
        with pytest.raises(ZeroVariance):
            sharpe([0.01])
        assert sharpe([R_A + 1, R_A - 1], R_A) == pytest.approx(0.0, abs=1e-15)

    def test_sortino(self):
        assert sortino([R_A + 0.1, R_A + 0.2], R_A) == SORTINO_SENTINEL
        with pytest.raises(NoDownside):
            sortino([R_A + 0.1], R_A, strict=True)
        assert abs(sortino([R_A + 0.02, R_A - 0.02], R_A)) <= 1e-15

    def test_omega(self):
        assert omega([R_A + 0.03, R_A - 0.03, R_A + 0.01, R_A - 0.01], R_A) == pytest.approx(1.0, abs=1e-12)
        assert omega([R_A - 0.01, R_A - 0.02], R_A) == 0.0
        with pytest.raises(NoDownside):
            omega([R_A + 0.01], R_A, strict=True)

    def test_brute_force_oracles(self):
        x = np.random.default_rng(42).normal(0.0005, 0.01, 250)
        assert abs(sharpe(x, R_A) - loop_sharpe(list(x), R_A)) <= 1e-12
        assert abs(sortino(x, R_A) - loop_sortino(list(x), R_A)) <= 1e-12
        assert abs(omega(x, R_A) - loop_omega(list(x), R_A)) <= 1e-12


class TestProperties:
    @given(st.integers(0, 2**31 - 1), st.floats(-0.1, 0.1))
    def test_shift_invariance(self, seed, d):
        x = np.random.default_rng(seed).normal(0, 0.01, 50)
        for f in (sharpe, sortino, omega):
            assert f(x + d, R_A + d) == pytest.approx(f(x, R_A), rel=1e-10, abs=1e-10)

    @given(st.integers(0, 2**31 - 1))
    def test_gain_loss_identity(self, seed):
        x = np.random.default_rng(seed).normal(0, 0.01, 30)
        total = float((x - R_A).sum())
        if abs(total) > 1e-12:
            assert (omega(x, R_A) > 1) == (total > 0)

    def test_report_flags(self):
        rep = performance_report([0.01, 0.01, 0.01], 0.0)
        assert rep.flags == {"sharpe": "zero_variance", "sortino": "no_downside", "omega": "no_downside"}
        assert rep.sortino == SORTINO_SENTINEL and math.isnan(rep.sharpe)
        assert rep.periods == 3

    def test_write_reports(self, tmp_path):
        x = np.random.default_rng(0).normal(0, 0.01, 20)
        write_reports({"crp": performance_report(x, R_A)}, tmp_path / "r.csv")
        rows = list(csv.reader((tmp_path / "r.csv").open()))
        assert rows[0][:5] == ["strategy", "Return", "Sharpe", "Sortino", "Omega"]
        assert rows[1][0] == "crp" and float(rows[1][1]) == pytest.approx(x.sum(), rel=1e-9)
