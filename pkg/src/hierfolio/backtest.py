"""Run strategies over a test span through the share/cash ledger.

Every strategy trades at column ``t`` and is marked at ``t + 1``. Classical
baselines hold one group containing the whole universe and no risk-free
position; the hierarchical policy uses clustered masks and the allocator.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocator import AllocatorConfig, final_weights
from .baselines import get_strategy
from .clustering import GroupMask, cluster_epoch
from .errors import DegenerateFeatures, TooShort
from .ledger import Ledger, mark_to_market, rebalance
from .market_data import PriceMatrix, daily_log2_rate, log2_returns
from .metrics import PerformanceReport, performance_report, write_reports

HRL = "hrl"


@dataclass
class BacktestConfig:
    cs: float = 0.001
    r_A: float = daily_log2_rate(0.02)
    p0: float = 1_000_000.0
    cadence: int = 75
    sortino_window: int = 75
    seed: int = 0
    strategy_params: dict = field(default_factory=dict)


@dataclass
class BacktestResult:
    strategy: str
    dates: list
    phis: list
    snapshots: list
    allocations: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    report: PerformanceReport = None

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.phis)


def _snapshot(t, date, ledger, v, report, skipped=False):
    p, p1, p2, pf = mark_to_market(ledger, v)
    w = (ledger.sh1 + ledger.sh2) * v / p
    return {"t": t, "date": str(date), "p": p, "p1": p1, "p2": p2, "pf": pf,
            "cost": 0.0 if skipped else report.cost, "scaled": False if skipped else bool(report.scaled),
            "weights": w.tolist()}


def _simulate(q: PriceMatrix, start: int, stop: int, cfg: BacktestConfig, decide, name: str) -> BacktestResult:
    """Trade at columns ``start .. stop - 2``; ``decide(t, ledger) -> (decision | None, masks)``."""
    ledger = Ledger.open(cfg.p0, q.m)
    value = cfg.p0
    phis, snaps, dates = [], [], []
    for t in range(start, stop - 1):
        v = q.prices[:, t]
        decision, masks = decide(t, ledger)
        if decision is None:
            # hold: positions drift, only the risk-free balance accrues
            ledger = Ledger(ledger.sh1, ledger.sh2, ledger.h1, ledger.h2, ledger.pf * 2.0 ** cfg.r_A,
                            ledger.p0, ledger.t + 1, ledger.cum_cost)
            report = None
        else:
            ledger, report = rebalance(ledger, decision, v, masks, cfg.cs, cfg.r_A)
        v_next = q.prices[:, t + 1]
        p = mark_to_market(ledger, v_next)[0]
        phis.append(math.log2(p / value))
        value = p
        dates.append(q.dates[t + 1])
        snaps.append(_snapshot(t + 1, q.dates[t + 1], ledger, v_next, report, skipped=decision is None))
    return BacktestResult(name, dates, phis, snaps)


def run_baseline(q: PriceMatrix, start: int, stop: int, strategy_id: str, cfg: BacktestConfig,
                 index: int = 0) -> BacktestResult:
    strat = get_strategy(strategy_id, **cfg.strategy_params.get(strategy_id, {}))
    if strategy_id == "capm":
        strat.params.setdefault("r_A", cfg.r_A)
    rng = np.random.default_rng([cfg.seed, index])
    R = log2_returns(q).values
    masks = GroupMask.single_group(q.m)
    state = strat.init(q.m, rng)
    zeros = np.zeros(q.m)

    def decide(t, ledger):
        nonlocal state
        first = t == start
        if not first and not state.trades:
            return None, masks
        history = R[:, start:t]
        if history.shape[1] == 0:
            w = state.weights
        else:
            w, state = strat.step(state, history)
        if not first and not state.trades:
            return None, masks
        return final_weights(w, zeros, (0.0, 1.0, 0.0), masks), masks

    res = _simulate(q, start, stop, cfg, decide, strategy_id)
    res.report = performance_report(res.phis, cfg.r_A)
    return res


def run_hierarchical(q: PriceMatrix, start: int, stop: int, policy, cfg: BacktestConfig) -> BacktestResult:
    """Greedy evaluation of a trained :class:`~hierfolio.agents.HierarchicalPolicy`."""
    L = policy.cfg.lookback
    alloc: AllocatorConfig = policy.cfg.allocator
    if start < max(L - 1, cfg.sortino_window):
        raise TooShort(f"test start {start} leaves less than max(lookback - 1, sortino window) of history")
    R = log2_returns(q).values
    allocations, clusters = [], []
    current = {"masks": None}

    def decide(t, ledger):
        if (t - start) % cfg.cadence == 0 or current["masks"] is None:
            try:
                assignment, masks = cluster_epoch(q.columns(0, t + 1), cfg.sortino_window, cfg.r_A,
                                                  seed=cfg.seed, epoch_start=t)
                clusters.append(assignment.to_record() | masks.to_record())
                current["masks"] = masks
            except DegenerateFeatures:
                if current["masks"] is None:
                    current["masks"] = GroupMask.single_group(q.m, t)
                clusters.append({"epoch_start": t, "degenerate": True})
        masks = current["masks"]
        decision = policy.decide(q.prices[:, t - L + 1:t + 1], masks, R[:, max(0, t - alloc.moment_window):t], cfg.r_A)
        d = decision.diagnostics
        allocations.append({"t": t, "date": str(q.dates[t]), "cap_f": decision.cap_f, "cap1": decision.cap1,
                            "cap2": decision.cap2, "rebound1": bool(decision.rebound_flags[0]),
                            "rebound2": bool(decision.rebound_flags[1]),
                            "omega_c": d.get("omega_c"), "omega_star": d.get("omega_star"),
                            "omega_new": d.get("omega_new")})
        return decision, masks

    res = _simulate(q, start, stop, cfg, decide, HRL)
    res.allocations, res.clusters = allocations, clusters
    res.report = performance_report(res.phis, cfg.r_A)
    return res


def _baseline_job(args):
    return run_baseline(*args)


def run_strategies(q: PriceMatrix, start: int, stop: int, strategies, cfg: BacktestConfig, policy=None,
                   parallel: bool = False) -> dict:
    """Results keyed by strategy id, in the order given."""
    if stop - start < 2:
        raise TooShort("test span needs at least two price columns")
    base = [s for s in strategies if s != HRL]
    jobs = [(q, start, stop, s, cfg, i) for i, s in enumerate(base)]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as ex:
            done = dict(zip(base, ex.map(_baseline_job, jobs)))
    else:
        done = {s: _baseline_job(j) for s, j in zip(base, jobs)}
    if HRL in strategies:
        if policy is None:
            raise ValueError("strategy 'hrl' needs a trained policy")
        done[HRL] = run_hierarchical(q, start, stop, policy, cfg)
    return {s: done[s] for s in strategies}


# ---- artifacts -----------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_outputs(results: dict, out_dir) -> list:
    """Reports, cumulative series, ledger snapshots, allocation and cluster logs; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    reports = {k: r.report for k, r in results.items()}
    write_reports(reports, out / "reports.csv")
    paths.append(out / "reports.csv")

    first = next(iter(results.values()))
    with (out / "cumulative.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *results])
        cums = [r.cumulative for r in results.values()]
        for i, d in enumerate(first.dates):
            w.writerow([d, *(_fmt(c[i]) for c in cums)])
    paths.append(out / "cumulative.csv")
    with (out / "returns.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *results])
        for i, d in enumerate(first.dates):
            w.writerow([d, *(_fmt(r.phis[i]) for r in results.values())])
    paths.append(out / "returns.csv")

    for name, r in results.items():
        p = out / f"ledger_{name}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            m = len(r.snapshots[0]["weights"]) if r.snapshots else 0
            w.writerow(["t", "date", "p", "p1", "p2", "pf", "cost", "scaled", *(f"w{j}" for j in range(m))])
            for s in r.snapshots:
                w.writerow([s["t"], s["date"], _fmt(s["p"]), _fmt(s["p1"]), _fmt(s["p2"]), _fmt(s["pf"]),
                            _fmt(s["cost"]), int(s["scaled"]), *(_fmt(x) for x in s["weights"])])
        paths.append(p)
        if r.allocations:
            p = out / f"allocation_{name}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "date", "cap_f", "cap1", "cap2", "rebound1", "rebound2",
                            "omega_c", "omega_star", "omega_new"])
                for a in r.allocations:
                    w.writerow([a["t"], a["date"], _fmt(a["cap_f"]), _fmt(a["cap1"]), _fmt(a["cap2"]),
                                int(a["rebound1"]), int(a["rebound2"]),
                                *(" ".join(_fmt(x) for x in a[k]) for k in ("omega_c", "omega_star", "omega_new"))])
            paths.append(p)
        if r.clusters:
            p = out / f"clusters_{name}.jsonl"
            with p.open("w") as fh:
                for rec in r.clusters:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
            paths.append(p)
    return paths


def read_series(path) -> dict:
    """Per-period log2 returns per strategy from a ``returns.csv`` written by :func:`write_outputs`."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    return {n: np.array([float(r[j + 1]) for r in rows[1:]]) for j, n in enumerate(names)}
