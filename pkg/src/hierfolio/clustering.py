"""Two-group asset partition by K-means on risk-adjusted features, and the masks it induces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateFeatures
from .market_data import SORTINO_SENTINEL, PriceMatrix, log2_returns, sortino_from_returns


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # 0-based cluster index per asset
    centroids: np.ndarray
    objective: float
    epoch_start: int = 0
    history: tuple = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def to_record(self) -> dict:
        return {
            "epoch_start": int(self.epoch_start),
            "labels": [int(x) + 1 for x in self.labels],  # logged 1-based
            "centroids": self.centroids.tolist(),
            "objective": float(self.objective),
        }


@dataclass(frozen=True)
class GroupMask:
    m1: np.ndarray
    m2: np.ndarray
    epoch_start: int = 0

    def __post_init__(self):
        m1 = np.asarray(self.m1, dtype=np.int8).copy()
        m2 = np.asarray(self.m2, dtype=np.int8).copy()
        if m1.shape != m2.shape or m1.ndim != 1:
            raise ValueError("masks must be 1-D vectors of equal length")
        if not (np.isin(m1, (0, 1)).all() and np.isin(m2, (0, 1)).all()):
            raise ValueError("mask entries must be 0 or 1")
        if not np.all(m1 + m2 == 1):
            raise ValueError("masks must be complementary")
        m1.setflags(write=False)
        m2.setflags(write=False)
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", m2)

    @classmethod
    def single_group(cls, m: int, epoch_start: int = 0) -> "GroupMask":
        """Every asset in group 1; group 2 empty."""
        return cls(np.ones(m, np.int8), np.zeros(m, np.int8), epoch_start)

    @property
    def in1(self) -> np.ndarray:
        return self.m1.astype(bool)

    def mask(self, i: int) -> np.ndarray:
        return self.m1 if i == 1 else self.m2

    def to_record(self) -> dict:
        return {"epoch_start": int(self.epoch_start), "m1": self.m1.tolist(), "m2": self.m2.tolist()}


def _standardize(x):
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - mu) / sd


def cluster_features(q: PriceMatrix, window: int, r_A: float, sentinel: float = SORTINO_SENTINEL):
    """Standardised ``[Sortino, mean log2 return, log2 return stdev]`` per asset over the trailing window.

    Returns ``(standardised features, raw features)``; raw column 0 is the Sortino ratio.
    """
    ret = log2_returns(q).values[:, -window:]
    sortino, _ = sortino_from_returns(ret, r_A, sentinel)
    raw = np.column_stack([sortino, ret.mean(axis=1), ret.std(axis=1)])
    return _standardize(raw), raw


def kmeans_plusplus(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(features, k: int = 2, seed: int = 0, max_iter: int = 100, n_init: int = 10,
           init=None, epoch_start: int = 0) -> ClusterAssignment:
    """Lloyd's algorithm from k-means++ seeds; the best of ``n_init`` restarts is kept.

    ``init`` pins the starting centroids (and forces a single run), which is what the
    permutation-equivariance checks need.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(X, axis=0)) < k:
        raise DegenerateFeatures(f"fewer than k={k} distinct feature vectors")
    X = np.ascontiguousarray(X)
    rng = np.random.default_rng(seed)
    starts = [np.asarray(init, dtype=float).reshape(k, X.shape[1])] if init is not None else [
        kmeans_plusplus(X, k, rng) for _ in range(max(1, n_init))
    ]
    best = None
    for c0 in starts:
        labels, cents, hist = _kernels.lloyd(X, np.ascontiguousarray(c0), int(max_iter))
        if best is None or hist[-1] < best[2][-1]:
            best = (labels, cents, hist)
    labels, cents, hist = best
    return ClusterAssignment(np.asarray(labels, dtype=np.int64), cents, float(hist[-1]), epoch_start,
                             tuple(float(h) for h in hist))


def wcss(features, labels, centroids) -> float:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return float(((X - np.asarray(centroids)[np.asarray(labels)]) ** 2).sum())


def build_masks(assignment: ClusterAssignment, sortino, mean_return=None) -> GroupMask:
    """The cluster with the higher mean Sortino ratio becomes group 1 (high quality).

    Ties go to the higher mean return, then to the lower cluster index.
    """
    if assignment.k != 2:
        raise ValueError("build_masks needs exactly 2 clusters")
    s = np.asarray(getattr(sortino, "values", sortino), dtype=float)
    labels = assignment.labels
    r = np.zeros_like(s) if mean_return is None else np.asarray(mean_return, dtype=float)
    keys = []
    for j in (0, 1):
        sel = labels == j
        keys.append((s[sel].mean() if sel.any() else -np.inf, r[sel].mean() if sel.any() else -np.inf, -j))
    hi = 0 if keys[0] >= keys[1] else 1
    m1 = (labels == hi).astype(np.int8)
    return GroupMask(m1, 1 - m1, assignment.epoch_start)


def recluster_due(t: int, cadence: int) -> bool:
    if t < 0 or cadence < 1:
        raise ValueError("need t >= 0 and cadence >= 1")
    return t % cadence == 0


def cluster_epoch(q: PriceMatrix, window: int, r_A: float, seed: int = 0, epoch_start: int = 0,
                  sentinel: float = SORTINO_SENTINEL, max_iter: int = 100):
    """Cluster the assets of ``q`` (history up to the epoch boundary) and build the masks."""
    feats, raw = cluster_features(q, window, r_A, sentinel)
    assignment = kmeans(feats, 2, seed=seed, max_iter=max_iter, epoch_start=epoch_start)
    return assignment, build_masks(assignment, raw[:, 0], raw[:, 1])
