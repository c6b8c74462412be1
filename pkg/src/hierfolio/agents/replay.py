import numpy as np


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions with uniform sampling.

    Each field is kept in its own preallocated array; ``add`` takes keyword
    arrays whose shapes are fixed by the first call.
    """

    def __init__(self, capacity: int, rng=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = rng if rng is not None else np.random.default_rng()
        self._data = None
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, **fields):
        if self._data is None:
            self._data = {
                k: np.zeros((self.capacity,) + np.shape(v), dtype=np.asarray(v).dtype)
                for k, v in fields.items()
            }
        for k, v in fields.items():
            self._data[k][self._next] = v
        self._next = (self._next + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("empty buffer")
        return self.rng.integers(0, self.size, size=batch)

    def sample(self, batch: int) -> dict:
        idx = self.sample_indices(batch)
        return {k: v[idx] for k, v in self._data.items()}

    def get(self, key):
        """Stored values of one field, oldest first."""
        arr = self._data[key][: self.size]
        if self.size < self.capacity:
            return arr
        return np.roll(arr, -self._next, axis=0)
