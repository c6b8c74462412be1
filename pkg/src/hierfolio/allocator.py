"""Group-level capital allocation.

The risky groups are treated as two assets whose per-period log2 returns are
normal. Maximising expected exponential utility under a target excess-return
hyperplane gives a closed form; that solution is tilted by recent momentum,
optionally blended with the upper agent's view when a group shows a confirmed
rebound, and finally mapped to (risk-free, group 1, group 2) fractions by a
temperature softmax against a zero risk-free logit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BlendOutOfRange,
    DegenerateExcessReturn,
    InvalidBounds,
    MaskMismatch,
    NonPositiveTemperature,
    WindowTooShort,
)

BUDGET_TOL = 1e-12


@dataclass(frozen=True)
class AllocatorConfig:
    c: float = -0.05
    clip_low: float = -0.5
    clip_high: float = 0.5
    momentum_window: int = 3
    rebound_lookback: int = 3
    theta_down: float = -0.01
    theta_up: float = 0.003
    eta_blend: float = 0.3
    temperature: float = 0.5
    moment_window: int = 60
    ridge: float = 1e-6


@dataclass(frozen=True)
class GroupMoments:
    mu: np.ndarray
    sigma: np.ndarray
    window: int
    ridge: float


@dataclass(frozen=True)
class AllocationDecision:
    intra1: np.ndarray
    intra2: np.ndarray
    cap_f: float
    cap1: float
    cap2: float
    final: np.ndarray
    rebound_flags: tuple = (False, False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("intra1", "intra2", "final"):
            a = np.array(getattr(self, name), dtype=float, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        caps = (self.cap_f, self.cap1, self.cap2)
        if min(caps) < 0:
            raise ValueError(f"negative capital fraction in {caps}")
        if abs(sum(caps) - 1.0) > BUDGET_TOL:
            raise ValueError(f"capital fractions sum to {sum(caps)!r}, not 1")

    @property
    def caps(self):
        return (self.cap_f, self.cap1, self.cap2)

    def budget_residual(self) -> float:
        return abs(float(self.final.sum()) + self.cap_f - 1.0)


def estimate_moments(group_returns, ridge: float = 1e-6) -> GroupMoments:
    """Sample mean and (w-1)-denominator covariance of a ``g x w`` return window, plus ``ridge * I``."""
    R = np.atleast_2d(np.asarray(group_returns, dtype=float))
    g, w = R.shape
    if w < 2:
        raise WindowTooShort(f"need >= 2 observations, got {w}")
    mu = R.mean(axis=1)
    dev = R - mu[:, None]
    sigma = dev @ dev.T / (w - 1)
    sigma = 0.5 * (sigma + sigma.T) + ridge * np.eye(g)
    return GroupMoments(mu, sigma, w, ridge)


def utility_optimal(moments: GroupMoments, r_A: float, c: float, alpha: float = 1.0,
                    wealth: float = 1.0, tol: float = 1e-12) -> np.ndarray:
    """Minimum-variance point on the hyperplane ``w'(mu - r_A) = -c``.

    ``alpha`` (risk aversion) and ``wealth`` only scale the quadratic objective, so
    they are validated and otherwise have no effect on the solution.
    """
    if alpha <= 0 or wealth <= 0:
        raise ValueError("alpha and wealth must be positive")
    excess = moments.mu - r_A
    try:
        chol = np.linalg.cholesky(moments.sigma)
    except np.linalg.LinAlgError as exc:
        raise DegenerateExcessReturn("covariance is not positive definite") from exc
    y = np.linalg.solve(chol, excess)
    a = np.linalg.solve(chol.T, y)  # sigma^-1 (mu - r_A)
    B = float(y @ y)
    if not B > tol:
        raise DegenerateExcessReturn(f"excess-return quadratic form {B!r} <= {tol}")
    return -(c / B) * a


def momentum_strength(mean_recent, low: float, high: float) -> np.ndarray:
    if low > high:
        raise InvalidBounds(f"clip bounds ({low}, {high}) inverted")
    return np.clip(3.0 * np.asarray(mean_recent, dtype=float), low, high)


def momentum_adjust(omega_c, beta_mom, mean_recent) -> np.ndarray:
    omega_c = np.asarray(omega_c, dtype=float)
    return omega_c * (1.0 + np.asarray(beta_mom, dtype=float) * np.tanh(np.asarray(mean_recent, dtype=float)))


def detect_rebound(group_returns, m: int = 3, theta_down: float = -0.01, theta_up: float = 0.003) -> np.ndarray:
    """Per group: the ``m`` periods before the last two averaged below ``theta_down``,
    and each of the last two periods returned above ``theta_up``."""
    R = np.atleast_2d(np.asarray(group_returns, dtype=float))
    if not theta_down < 0 < theta_up:
        raise InvalidBounds("need theta_down < 0 < theta_up")
    if R.shape[1] < m + 2:
        raise WindowTooShort(f"need {m + 2} returns, got {R.shape[1]}")
    down = R[:, -(m + 2):-2].mean(axis=1) < theta_down
    up = (R[:, -2] > theta_up) & (R[:, -1] > theta_up)
    return down & up


def aggregate_global_mass(omega0, masks) -> np.ndarray:
    omega0 = np.asarray(omega0, dtype=float)
    return np.array([omega0 @ masks.m1, omega0 @ masks.m2], dtype=float)


def fuse_on_rebound(omega_star, global_mass, flags, eta_blend: float) -> np.ndarray:
    if not 0.0 <= eta_blend <= 1.0:
        raise BlendOutOfRange(f"eta_blend={eta_blend} outside [0, 1]")
    omega_star = np.asarray(omega_star, dtype=float)
    blended = (1.0 - eta_blend) * omega_star + eta_blend * np.asarray(global_mass, dtype=float)
    return np.where(np.asarray(flags, dtype=bool), blended, omega_star)


def capital_split(omega_new, temperature: float, available=(True, True)):
    """Softmax of ``[0, a, b] / temperature``; an unavailable group gets exactly zero."""
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    logits = np.concatenate([[0.0], np.asarray(omega_new, dtype=float)]) / temperature
    logits[1:][~np.asarray(available, dtype=bool)] = -np.inf
    z = np.exp(logits - logits.max())
    p = z / z.sum()
    return float(p[0]), float(p[1]), float(p[2])


def final_weights(intra1, intra2, caps, masks=None, rebound_flags=(False, False), diagnostics=None) -> AllocationDecision:
    """Scale each intra-group vector by its group's capital fraction."""
    intra1 = np.asarray(intra1, dtype=float)
    intra2 = np.asarray(intra2, dtype=float)
    if masks is not None:
        if np.any(intra1[masks.m1 == 0] != 0) or np.any(intra2[masks.m2 == 0] != 0):
            raise MaskMismatch("intra-group weight on a masked-out asset")
    cap_f, cap1, cap2 = caps
    final = intra1 * cap1 + intra2 * cap2
    return AllocationDecision(intra1, intra2, float(cap_f), float(cap1), float(cap2), final,
                              tuple(bool(x) for x in rebound_flags), dict(diagnostics or {}))


def group_return_series(rel_log2, intra, masks):
    """Log2 return each group would have earned holding its current intra weights.

    ``rel_log2`` is an ``m x w`` window of asset log2 returns. Returns a
    ``2 x w`` array plus the availability flags (a group with no assets has no series).
    """
    z = np.exp2(np.asarray(rel_log2, dtype=float))
    out = np.zeros((2, z.shape[1]))
    avail = []
    for g, (w, mk) in enumerate(zip(intra, (masks.m1, masks.m2))):
        ok = bool(mk.sum() > 0 and np.sum(w) > 0)
        avail.append(ok)
        if ok:
            out[g] = np.log2(np.asarray(w) @ z)
    return out, np.array(avail)


def allocate(intra1, intra2, omega0, masks, rel_log2, r_A: float, cfg: AllocatorConfig = AllocatorConfig()) -> AllocationDecision:
    """Full allocator step from intra-group weights and a trailing window of asset log2 returns."""
    R, avail = group_return_series(rel_log2, (intra1, intra2), masks)
    diag = {"omega_c": [0.0, 0.0], "omega_star": [0.0, 0.0], "omega_new": [0.0, 0.0]}
    fallback = final_weights(np.zeros_like(intra1), np.zeros_like(intra2), (1.0, 0.0, 0.0), masks,
                             diagnostics=dict(diag, fallback=True))
    idx = np.flatnonzero(avail)
    need = max(cfg.momentum_window, cfg.rebound_lookback + 2, 2)
    if idx.size == 0 or R.shape[1] < need:
        return fallback
    Rw = R[idx, -cfg.moment_window:]
    moments = estimate_moments(Rw, cfg.ridge)
    try:
        omega_c_sub = utility_optimal(moments, r_A, cfg.c)
    except DegenerateExcessReturn:
        return fallback
    omega_c = np.zeros(2)
    omega_c[idx] = omega_c_sub
    mean_recent = R[:, -cfg.momentum_window:].mean(axis=1)
    beta = momentum_strength(mean_recent, cfg.clip_low, cfg.clip_high)
    omega_star = momentum_adjust(omega_c, beta, mean_recent)
    flags = detect_rebound(R, cfg.rebound_lookback, cfg.theta_down, cfg.theta_up) & avail
    omega_new = fuse_on_rebound(omega_star, aggregate_global_mass(omega0, masks), flags, cfg.eta_blend)
    caps = capital_split(omega_new, cfg.temperature, avail)
    diag = {"omega_c": omega_c.tolist(), "omega_star": omega_star.tolist(), "omega_new": omega_new.tolist()}
    i1 = np.asarray(intra1, dtype=float) if avail[0] else np.zeros(len(intra1))
    i2 = np.asarray(intra2, dtype=float) if avail[1] else np.zeros(len(intra2))
    return final_weights(i1, i2, caps, masks, flags, diag)
