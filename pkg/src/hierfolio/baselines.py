"""Classical online portfolio-selection baselines.

Each strategy is a small class with ``init(m, rng) -> StrategyState`` and
``step(state, history, prev_realized) -> (weights, state)``. ``history`` is the
``m x T`` window of base-2 log returns observed so far (latest period last);
strategies that learn online consume only the columns they have not seen yet.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from . import _kernels
from .errors import InsufficientHistory, UnknownStrategy


@dataclass(frozen=True)
class StrategyState:
    strategy: str
    weights: np.ndarray
    aux: dict = field(default_factory=dict)
    seen: int = 0
    trades: bool = True  # False once a strategy only lets positions drift


def simplex_projection(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _uniform(m):
    return np.full(m, 1.0 / m)


def _relatives(history):
    h = np.asarray(getattr(history, "values", history), dtype=float)
    return np.exp2(h).T  # T x m


class Strategy:
    id = ""
    needs_history = True

    def __init__(self, **params):
        self.params = params

    def init(self, m, rng=None) -> StrategyState:
        return StrategyState(self.id, _uniform(m))

    def step(self, state, history, prev_realized=None):
        X = _relatives(history)
        if self.needs_history and X.shape[0] == 0:
            raise InsufficientHistory(f"{self.id} needs at least one observed period")
        new = X[state.seen:] if state.seen <= X.shape[0] else X[:0]
        w, state = self._update(state, X, new, prev_realized)
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        w = w / w.sum()
        return w, replace(state, weights=w, seen=X.shape[0])

    def _update(self, state, X, new, prev_realized):
        raise NotImplementedError


class CRP(Strategy):
    id = "crp"
    needs_history = False

    def _update(self, state, X, new, prev_realized):
        return _uniform(len(state.weights)), state


class UBAH(Strategy):
    id = "ubah"
    needs_history = False

    def _update(self, state, X, new, prev_realized):
        w = state.weights
        for x in new:
            w = w * x / (w @ x)
        return w, replace(state, trades=False)


class M0(Strategy):
    """Markov of order zero: best-asset frequencies with a (1/2, ..., 1/2) prior."""
    id = "m0"

    def _update(self, state, X, new, prev_realized):
        m = len(state.weights)
        counts = np.array(state.aux.get("counts", np.zeros(m)), dtype=float)
        for x in new:
            counts[np.argmax(x)] += 1.0
        w = (counts + 0.5) / (counts.sum() + m / 2.0)
        return w, replace(state, aux={"counts": counts})


class UP(Strategy):
    """Cover's universal portfolio, integrated by Monte-Carlo over Dirichlet(1) samples."""
    id = "up"

    def init(self, m, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        B = rng.dirichlet(np.ones(m), size=int(self.params.get("samples", 10_000)))
        return StrategyState(self.id, _uniform(m), {"B": B, "logw": np.zeros(len(B))})

    def _update(self, state, X, new, prev_realized):
        B = state.aux["B"]
        logw = state.aux["logw"] + _kernels.log_wealth(B, np.ascontiguousarray(new))
        p = np.exp(logw - logw.max())
        w = p @ B / p.sum()
        return w, replace(state, aux={"B": B, "logw": logw})


class EG(Strategy):
    """Exponentiated gradient, ``b <- b * exp(eta * x / (b.x))``."""
    id = "eg"

    def _update(self, state, X, new, prev_realized):
        eta = self.params.get("eta", 0.05)
        w = state.weights
        for x in new:
            w = w * np.exp(eta * x / (w @ x))
            w = w / w.sum()
        return w, state


class PAMR(Strategy):
    id = "pamr"

    def _update(self, state, X, new, prev_realized):
        eps = self.params.get("eps", 0.5)
        w = state.weights
        for x in new:
            loss = max(0.0, w @ x - eps)
            dev = x - x.mean()
            denom = dev @ dev
            tau = loss / denom if denom > 0 else 0.0
            w = simplex_projection(w - tau * dev)
        return w, state


class CWMR(Strategy):
    """Confidence-weighted mean reversion (variance form)."""
    id = "cwmr"

    def init(self, m, rng=None):
        return StrategyState(self.id, _uniform(m), {"sigma": np.eye(m) / m ** 2})

    def _update(self, state, X, new, prev_realized):
        eps = self.params.get("eps", -0.5)
        theta = norm.ppf(self.params.get("confidence", 0.95))
        mu = state.weights.copy()
        sigma = state.aux["sigma"]
        m = len(mu)
        for x in new:
            M = mu @ x
            V = x @ sigma @ x
            x_up = (np.diag(sigma) @ x) / np.trace(sigma)
            foo = (V - x_up * (x @ sigma.sum(axis=1))) / M ** 2 + V * theta ** 2 / 2.0
            a = foo ** 2 - V ** 2 * theta ** 4 / 4.0
            b = 2.0 * (eps - np.log(M)) * foo
            c = (eps - np.log(M)) ** 2 - V * theta ** 2
            disc = b * b - 4 * a * c
            lam = 0.0
            if a != 0 and disc >= 0:
                r = np.sqrt(disc)
                lam = max(0.0, (-b + r) / (2 * a), (-b - r) / (2 * a))
            lam = min(lam, 1e7)
            if lam > 0:
                u = 0.5 * (-lam * theta * V + np.sqrt(lam ** 2 * theta ** 2 * V ** 2 + 4 * V))
                mu = mu - lam * sigma @ (x - x_up) / M
                new_sigma = np.linalg.inv(np.linalg.inv(sigma) + theta * lam / u * np.diag(x ** 2))
                if np.all(np.isfinite(new_sigma)):
                    sigma = new_sigma
            mu = simplex_projection(mu)
            sigma = sigma / (m ** 2 * np.trace(sigma))
        return mu, replace(state, aux={"sigma": sigma})


class CORN(Strategy):
    """CORN-K: (window, correlation threshold) experts, top-K by wealth averaged uniformly."""
    id = "corn"

    def init(self, m, rng=None):
        W = int(self.params.get("window", 5))
        step = float(self.params.get("rho", 0.1))
        rhos = np.round(np.arange(0.0, 1.0 - 1e-9, step), 10)
        experts = [(w, r) for w in range(1, W + 1) for r in rhos]
        return StrategyState(self.id, _uniform(m), {
            "experts": experts,
            "wealth": np.ones(len(experts)),
            "ports": np.tile(_uniform(m), (len(experts), 1)),
        })

    def _update(self, state, X, new, prev_realized):
        K = int(self.params.get("k", 5))
        experts = state.aux["experts"]
        wealth = state.aux["wealth"].copy()
        ports = state.aux["ports"]
        start = X.shape[0] - new.shape[0]
        for r in range(new.shape[0]):
            x = new[r]
            wealth *= ports @ x
            hist = np.ascontiguousarray(X[: start + r + 1])
            ports = np.array([self._expert(hist, w, rho) for w, rho in experts])
        top = np.argsort(-wealth, kind="stable")[:K]
        w = ports[top].mean(axis=0)
        return w, replace(state, aux={"experts": experts, "wealth": wealth, "ports": ports})

    @staticmethod
    def _expert(X, w, rho):
        m = X.shape[1]
        match = _kernels.corn_match(X, int(w), float(rho))
        if not match.any():
            return _uniform(m)
        return _kernels.log_optimal(np.ascontiguousarray(X[match]), 50)


class CAPM(Strategy):
    """Long-only tangency portfolio from trailing moments."""
    id = "capm"

    def _update(self, state, X, new, prev_realized):
        window = int(self.params.get("window", 60))
        ridge = float(self.params.get("ridge", 1e-6))
        r_A = float(self.params.get("r_A", 0.0))
        R = np.log2(X[-window:])
        m = R.shape[1]
        if R.shape[0] < 2:
            return _uniform(m), state
        mu = R.mean(axis=0)
        sigma = np.cov(R, rowvar=False).reshape(m, m) + ridge * np.eye(m)
        w = np.clip(np.linalg.solve(sigma, mu - r_A), 0.0, None)
        if not w.sum() > 0:
            return _uniform(m), state
        return w / w.sum(), state


REGISTRY = {cls.id: cls for cls in (CRP, UBAH, M0, UP, EG, PAMR, CWMR, CORN, CAPM)}


def get_strategy(strategy_id: str, **params) -> Strategy:
    try:
        return REGISTRY[strategy_id.lower()](**params)
    except KeyError:
        raise UnknownStrategy(f"unknown strategy {strategy_id!r}; known: {', '.join(REGISTRY)}") from None


def strategy_step(state: StrategyState, history, prev_realized=None, **params):
    return get_strategy(state.strategy, **params).step(state, history, prev_realized)
