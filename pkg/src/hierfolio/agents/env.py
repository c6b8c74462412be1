"""Market environment: clustering schedule + ledger + group-wise rewards.

Decisions are taken at price column ``t`` with the window of the last
``lookback`` prices; trades fill at column ``t`` and are marked at ``t + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..clustering import GroupMask, cluster_epoch
from ..errors import DegenerateFeatures
from ..ledger import Ledger, mark_to_market, rebalance
from ..market_data import PriceMatrix, log2_returns


def reward(group_log_return: float, sigma_hist: float, N: int, kappa: float = 10.0,
           beta_risk: float = 0.2, eta_norm: float = 252.0) -> float:
    """Scaled log return, minus an observation-count-weighted volatility penalty once ``N >= 2``."""
    if kappa <= 0 or eta_norm <= 0 or N < 0:
        raise ValueError("need kappa > 0, eta_norm > 0, N >= 0")
    if N < 2:
        return kappa * group_log_return
    return kappa * (group_log_return - beta_risk * N / eta_norm * sigma_hist)


class RunningStats:
    """Count and population standard deviation of a stream (Welford)."""

    def __init__(self):
        self.n, self.mean, self._m2 = 0, 0.0, 0.0

    def push(self, x: float):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self._m2 += d * (x - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self._m2 / self.n) if self.n else 0.0


@dataclass(frozen=True)
class EnvState:
    window: np.ndarray  # m x lookback prices
    sh1: np.ndarray
    sh2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    t: int

    def returns(self) -> np.ndarray:
        w = self.window
        return np.log2(w[:, 1:] / w[:, :-1])


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action1: np.ndarray
    action2: np.ndarray
    reward1: float
    reward2: float
    next_state: EnvState
    terminal: bool


@dataclass
class EnvConfig:
    lookback: int = 30
    r_A: float = math.log2(1.02) / 252
    cs: float = 0.001
    p0: float = 1_000_000.0
    cadence: int = 75
    sortino_window: int = 75
    cluster_seed: int = 0
    kappa: float = 10.0
    beta_risk: float = 0.2
    eta_norm: float = 252.0


class MarketEnv:
    def __init__(self, prices: PriceMatrix, cfg: EnvConfig = None, fixed_masks: GroupMask = None, stats=None):
        self.q = prices
        self.cfg = cfg or EnvConfig()
        self.R = log2_returns(prices).values
        self.fixed_masks = fixed_masks
        # reward statistics persist across episodes ("since training start")
        self.stats = stats if stats is not None else {k: RunningStats() for k in ("p", 1, 2)}
        self.cluster_log = []
        self.masks = None

    @property
    def first_t(self) -> int:
        need = self.cfg.lookback - 1
        if self.fixed_masks is None:
            need = max(need, self.cfg.sortino_window)
        return need

    def returns_window(self, t: int, w: int) -> np.ndarray:
        """Asset log2 returns of the ``w`` periods ending at price column ``t``."""
        return self.R[:, max(0, t - w):t]

    def _recluster(self, t):
        if self.fixed_masks is not None:
            self.masks = GroupMask(self.fixed_masks.m1, self.fixed_masks.m2, t)
            return
        try:
            assignment, masks = cluster_epoch(self.q.columns(0, t + 1), self.cfg.sortino_window, self.cfg.r_A,
                                              seed=self.cfg.cluster_seed, epoch_start=t)
        except DegenerateFeatures:
            masks = self.masks if self.masks is not None else GroupMask.single_group(self.q.m, t)
            self.cluster_log.append({"epoch_start": t, "degenerate": True})
            self.masks = masks
            return
        self.cluster_log.append(assignment.to_record())
        self.masks = masks

    def observe(self) -> EnvState:
        t, L = self.t, self.cfg.lookback
        return EnvState(self.q.prices[:, t - L + 1:t + 1], self.ledger.sh1, self.ledger.sh2,
                        self.masks.m1, self.masks.m2, t)

    def reset(self, t0: int = None) -> EnvState:
        t0 = self.first_t if t0 is None else t0
        if t0 < self.first_t or t0 >= self.q.n - 1:
            raise ValueError(f"start {t0} outside [{self.first_t}, {self.q.n - 2}]")
        self.t0 = self.t = t0
        self.ledger = Ledger.open(self.cfg.p0, self.q.m)
        self.value = self.cfg.p0
        self.phis = []
        self._recluster(t0)
        return self.observe()

    @property
    def done(self) -> bool:
        return self.t >= self.q.n - 1

    def step(self, decision):
        """Trade to ``decision`` at column t, hold to t+1; returns ``(state, reward1, reward2, info)``."""
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        cfg = self.cfg
        v = self.q.prices[:, self.t]
        v_next = self.q.prices[:, self.t + 1]
        masks = self.masks
        self.ledger, report = rebalance(self.ledger, decision, v, masks, cfg.cs, cfg.r_A)
        p, p1, p2, pf = mark_to_market(self.ledger, v_next)
        phi = math.log2(p / self.value)
        self.value = p
        self.phis.append(phi)

        rewards, group_phi = {}, {}
        counted = {1: False, 2: False}
        # group reward: holding-period log2 return of the post-trade group book
        for g, cap, end in ((1, report.capital1 * report.u1, p1), (2, report.capital2 * report.u2, p2)):
            if cap > 0:
                group_phi[g] = math.log2(end / cap)
                st = self.stats[g]
                rewards[g] = reward(group_phi[g], st.std, st.n, cfg.kappa, cfg.beta_risk, cfg.eta_norm)
                st.push(group_phi[g])
                counted[g] = True
            else:
                group_phi[g], rewards[g] = 0.0, 0.0
        st = self.stats["p"]
        reward_p = reward(phi, st.std, st.n, cfg.kappa, cfg.beta_risk, cfg.eta_norm)
        st.push(phi)

        self.t += 1
        if not self.done and (self.t - self.t0) % cfg.cadence == 0 if cfg.cadence > 0 else False:
            self._recluster(self.t)
        nxt = self.observe() if not self.done else EnvState(
            self.q.prices[:, self.t - cfg.lookback + 1:self.t + 1], self.ledger.sh1, self.ledger.sh2,
            self.masks.m1, self.masks.m2, self.t)
        info = {"phi": phi, "phi1": group_phi[1], "phi2": group_phi[2], "reward_p": reward_p,
                "report": report, "decision": decision, "value": p, "values": (p, p1, p2, pf),
                "masks": masks, "counted": counted, "done": self.done}
        return nxt, rewards[1], rewards[2], info


def env_step(env: MarketEnv, decision):
    return env.step(decision)
