"""Two-group share/cash ledger.

One ``rebalance`` call executes a target allocation at the current prices:

1. positions sitting in the wrong group's book after a re-clustering are sold
   into that group's cash, paying ``cs`` on the proceeds;
2. the risk-free target is carved out of total value; the remaining value is
   split between the groups in proportion to their target weight mass;
3. group ``i`` pays ``cs * p_i * ||w_prev_i - w_new_i||_1`` where ``p_i`` is its
   pre-trade value and the weights are intra-group weights (realized before,
   pre-rounding target after); a group whose target mass is zero is instead
   sold out in step 1;
4. what is left is turned into whole shares, ``floor(capital * intra / price)``,
   the remainder staying as that group's residual cash;
5. if a group's costs would exceed its capital, the whole trade vector is
   shrunk toward the current holdings by the largest feasible factor.

Trades fill at the quoted price with no market impact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsolventPortfolio, MaskMismatch, NonPositiveValue

_FLOOR_SLACK = 1e-12  # relative slack so exact multiples survive float noise in floor()
_CASH_NOISE = 1e-9  # relative size of a negative residual treated as rounding noise
_BISECT_ITERS = 60


def _ro(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Ledger:
    sh1: np.ndarray
    sh2: np.ndarray
    h1: float
    h2: float
    pf: float
    p0: float
    t: int = 0
    cum_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sh1", _ro(self.sh1, np.int64))
        object.__setattr__(self, "sh2", _ro(self.sh2, np.int64))
        if self.h1 < 0 or self.h2 < 0:
            raise ValueError(f"negative residual cash h1={self.h1} h2={self.h2}")
        if np.any(self.sh1 < 0) or np.any(self.sh2 < 0):
            raise ValueError("negative share count")

    @classmethod
    def open(cls, p0: float, m: int) -> "Ledger":
        """All capital as pooled cash. Before the first trade only ``h1 + h2`` matters."""
        if not p0 > 0:
            raise NonPositiveValue("initial capital must be positive")
        z = np.zeros(m, dtype=np.int64)
        return cls(z, z, float(p0), 0.0, 0.0, float(p0), 0, 0.0)

    @property
    def m(self) -> int:
        return len(self.sh1)


@dataclass(frozen=True)
class RebalanceReport:
    cost1: float
    cost2: float
    u1: float
    u2: float
    scaled: bool
    weights_realized: np.ndarray
    weights_target: np.ndarray = None
    scale: float = 1.0
    capital1: float = 0.0  # group capital before cost deduction
    capital2: float = 0.0
    value_before: float = 0.0
    value_after: float = 0.0
    group_value_before: tuple = (0.0, 0.0)
    migration_cost: float = 0.0

    @property
    def cost(self) -> float:
        return self.cost1 + self.cost2


def mark_to_market(ledger: Ledger, prices):
    """``(p, p1, p2, pf)`` at ``prices``."""
    v = np.asarray(prices, dtype=float)
    p1 = float(ledger.sh1 @ v) + ledger.h1
    p2 = float(ledger.sh2 @ v) + ledger.h2
    return p1 + p2 + ledger.pf, p1, p2, ledger.pf


def period_log_return(p_t: float, p_prev: float) -> float:
    if not (p_t > 0 and p_prev > 0):
        raise NonPositiveValue(f"values must be positive, got {p_t}, {p_prev}")
    return math.log2(p_t / p_prev)


def terminal_value(p0: float, phis) -> float:
    if not p0 > 0:
        raise NonPositiveValue("p0 must be positive")
    return p0 * 2.0 ** math.fsum(phis)


def _shares(capital, intra, v):
    if capital <= 0:
        return np.zeros(len(v), dtype=np.int64), 0.0
    sh = np.floor(capital * intra / v * (1.0 + _FLOOR_SLACK)).astype(np.int64)
    cash = capital - float(sh @ v)
    while cash < 0:
        if cash >= -_CASH_NOISE * capital:
            cash = 0.0
            break
        # slack pushed one position a share too far; give back the one that overshot most
        j = int(np.argmax(np.where(sh > 0, sh * v - capital * intra, -np.inf)))
        sh[j] -= 1
        cash += v[j]
    return sh, cash


def rebalance(ledger: Ledger, target, prices, masks, cs: float = 0.001, r_A: float = 0.0):
    """Execute ``target`` (an :class:`~hierfolio.allocator.AllocationDecision`) at ``prices``."""
    v = np.asarray(prices, dtype=float)
    if v.shape != (ledger.m,) or not np.all(v > 0):
        raise ValueError("prices must be a positive vector with one entry per asset")
    if cs < 0:
        raise ValueError("cost rate must be non-negative")
    in1 = masks.m1.astype(bool)
    in2 = ~in1
    if np.any(np.asarray(target.intra1)[in2] != 0) or np.any(np.asarray(target.intra2)[in1] != 0):
        raise MaskMismatch("target puts weight on an asset outside its group")
    w_new = np.asarray(target.final, dtype=float)
    if np.any(w_new < 0):
        raise ValueError("negative target weight")

    # 1. sell positions sitting in the wrong book, and empty any group whose
    #    target mass is zero, into that group's cash
    s1_new, s2_new = float(w_new[in1].sum()), float(w_new[in2].sum())
    sh1, sh2 = ledger.sh1.copy(), ledger.sh2.copy()
    sell1 = np.ones(ledger.m, bool) if s1_new == 0 else in2
    sell2 = np.ones(ledger.m, bool) if s2_new == 0 else in1
    mig1 = float((sh1 * sell1) @ v)
    mig2 = float((sh2 * sell2) @ v)
    h1 = ledger.h1 + mig1 * (1.0 - cs)
    h2 = ledger.h2 + mig2 * (1.0 - cs)
    sh1[sell1] = 0
    sh2[sell2] = 0
    mig_cost1, mig_cost2 = cs * mig1, cs * mig2

    # 2. value and current weights
    p1 = float(sh1 @ v) + h1
    p2 = float(sh2 @ v) + h2
    p = p1 + p2 + ledger.pf
    if not p > 0:
        raise InsolventPortfolio(f"portfolio value {p} <= 0")
    w_prev = (sh1 + sh2) * v / p
    f_prev = ledger.pf / p
    f_new = float(target.cap_f)
    # held weights within each group's stock book (zero for a cash-only group)
    intra_prev = np.zeros(ledger.m)
    for held, on in ((sh1 * v, in1), (sh2 * v, in2)):
        if held.sum() > 0:
            intra_prev[on] = held[on] / held.sum()
    if ledger.t == 0:
        # first trade: each group's pre-trade value is its split of the pooled cash
        tot = s1_new + s2_new
        basis1 = (h1 + h2) * s1_new / tot if tot > 0 else 0.0
        basis2 = (h1 + h2) * s2_new / tot if tot > 0 else 0.0
    else:
        basis1, basis2 = p1, p2

    # 3. feasibility scale, then costs on the (possibly scaled) pre-rounding target
    lam = float(_kernels.feasible_scale(p, f_prev, f_new, w_prev, w_new, intra_prev, in1,
                                        basis1, basis2, cs, _BISECT_ITERS))
    w_t = w_prev + lam * (w_new - w_prev)
    f_t = f_prev + lam * (f_new - f_prev)
    s1, s2 = float(w_t[in1].sum()), float(w_t[in2].sum())
    g1, g2, cost1, cost2 = _kernels.group_costs(lam, p, f_prev, f_new, w_prev, w_new, intra_prev, in1,
                                                basis1, basis2, cs)
    risky = p * (1.0 - f_t)
    tot = s1 + s2
    g1n = max(g1 - cost1, 0.0)
    g2n = max(g2 - cost2, 0.0)

    # 4. whole shares + residual cash
    intra1 = np.where(in1, w_t, 0.0) / s1 if s1 > 0 else np.zeros(ledger.m)
    intra2 = np.where(in2, w_t, 0.0) / s2 if s2 > 0 else np.zeros(ledger.m)
    new_sh1, new_h1 = _shares(g1n, intra1, v)
    new_sh2, new_h2 = _shares(g2n, intra2, v)
    if tot <= 0:
        new_h1 += risky  # nothing risky to buy: keep it as pooled cash
    pf_trade = p * f_t
    value_after = float((new_sh1 + new_sh2) @ v) + new_h1 + new_h2 + pf_trade

    out = Ledger(new_sh1, new_sh2, new_h1, new_h2, pf_trade * 2.0 ** r_A, ledger.p0, ledger.t + 1,
                 ledger.cum_cost + cost1 + cost2 + mig_cost1 + mig_cost2)
    report = RebalanceReport(
        cost1=float(cost1 + mig_cost1),
        cost2=float(cost2 + mig_cost2),
        u1=g1n / g1 if g1 > 0 else 1.0,
        u2=g2n / g2 if g2 > 0 else 1.0,
        scaled=lam < 1.0,
        weights_realized=(new_sh1 + new_sh2) * v / value_after,
        weights_target=w_t,
        scale=lam,
        capital1=g1,
        capital2=g2,
        value_before=p,
        value_after=value_after,
        group_value_before=(p1, p2),
        migration_cost=mig_cost1 + mig_cost2,
    )
    return out, report
