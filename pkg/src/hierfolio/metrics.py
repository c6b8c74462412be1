"""Per-period (unannualised) performance measures over base-2 log returns."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NoDownside, ZeroVariance
from .market_data import SORTINO_SENTINEL


@dataclass(frozen=True)
class PerformanceReport:
    cumulative_return: float
    sharpe: float
    sortino: float
    omega: float
    periods: int
    flags: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"Return": self.cumulative_return, "Sharpe": self.sharpe,
                "Sortino": self.sortino, "Omega": self.omega}


def cumulative_return(phis) -> float:
    return math.fsum(np.asarray(phis, dtype=float).tolist())


def sharpe(phis, r_A: float = 0.0) -> float:
    """Mean excess return over the population standard deviation."""
    x = np.asarray(phis, dtype=float)
    if x.size < 2:
        raise ZeroVariance("need at least 2 returns")
    sd = x.std()
    if not sd > 0:
        raise ZeroVariance("returns have zero variance")
    return float((x - r_A).mean() / sd)


def sortino(phis, r_A: float = 0.0, strict: bool = False, sentinel: float = SORTINO_SENTINEL) -> float:
    x = np.asarray(phis, dtype=float) - r_A
    below = x[x < 0]
    if below.size == 0:
        if strict:
            raise NoDownside("no return below the threshold")
        return sentinel
    return float(x.mean() / math.sqrt((below * below).mean()))


def omega(phis, r_A: float = 0.0, strict: bool = False, sentinel: float = SORTINO_SENTINEL) -> float:
    x = np.asarray(phis, dtype=float) - r_A
    loss = -x[x < 0].sum()
    if not loss > 0:
        if strict:
            raise NoDownside("no return below the threshold")
        return sentinel
    return float(x[x >= 0].sum() / loss)


def performance_report(phis, r_A: float = 0.0) -> PerformanceReport:
    """All four measures; degenerate cases are flagged instead of raising."""
    x = np.asarray(phis, dtype=float)
    flags = {}
    try:
        sh = sharpe(x, r_A)
    except ZeroVariance:
        sh = float("nan")
        flags["sharpe"] = "zero_variance"
    try:
        so = sortino(x, r_A, strict=True)
    except NoDownside:
        so = SORTINO_SENTINEL
        flags["sortino"] = "no_downside"
    try:
        om = omega(x, r_A, strict=True)
    except NoDownside:
        om = SORTINO_SENTINEL
        flags["omega"] = "no_downside"
    return PerformanceReport(cumulative_return(x), sh, so, om, int(x.size), flags)


def write_reports(reports: dict, path) -> None:
    """One row per strategy: ``strategy,Return,Sharpe,Sortino,Omega,periods,flags``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "Return", "Sharpe", "Sortino", "Omega", "periods", "flags"])
        for name, rep in reports.items():
            flags = ";".join(f"{k}={v}" for k, v in sorted(rep.flags.items()))
            w.writerow([name, f"{rep.cumulative_return:.10g}", f"{rep.sharpe:.10g}",
                        f"{rep.sortino:.10g}", f"{rep.omega:.10g}", rep.periods, flags])
