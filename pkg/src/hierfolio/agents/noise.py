"""Exploration: Ornstein-Uhlenbeck drift plus an epsilon-greedy Gaussian kick, kept on the masked simplex."""
from __future__ import annotations

import numpy as np

from .. import _kernels


class OUNoise:
    """``x <- x + theta * (0 - x) + sigma * N(0, 1)`` per step, one coordinate per asset."""

    def __init__(self, dim: int, theta: float = 0.15, sigma: float = 0.2, rng=None):
        self.theta, self.sigma = float(theta), float(sigma)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state = np.zeros(dim)

    def reset(self):
        self.state = np.zeros_like(self.state)

    def sample(self) -> np.ndarray:
        self.state = self.state + self.theta * (0.0 - self.state) + self.sigma * self.rng.standard_normal(self.state.shape)
        return self.state.copy()

    def trace(self, steps: int) -> np.ndarray:
        """``steps`` consecutive samples as a ``steps x dim`` array (advances the state)."""
        normals = self.rng.standard_normal((steps, self.state.size))
        out = _kernels.ou_trace(self.state.copy(), self.theta, self.sigma, normals)
        if steps:
            self.state = out[-1].copy()
        return out


def explore(action, noise: OUNoise, epsilon: float, sigma_g: float, rng, mask=None) -> np.ndarray:
    """Perturb ``action`` and map it back onto the simplex restricted to ``mask``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    a = np.asarray(action, dtype=float)
    on = np.ones(a.shape, dtype=bool) if mask is None else np.asarray(mask).astype(bool)
    x = a + noise.sample()
    if rng.random() < epsilon:
        x = x + rng.normal(0.0, sigma_g, size=a.shape)
    x = np.where(on, np.clip(x, 0.0, None), 0.0)
    s = x.sum()
    if not s > 0:
        return np.where(on, a, 0.0) / np.where(on, a, 0.0).sum()
    return x / s
