"""Uniform time grids shared by the kernel tables, path engine and PDE solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_n = T with t_k = k*T/n."""

    T: float
    n_steps: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps!r}")
        nodes = np.linspace(0.0, self.T, self.n_steps + 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def first_index_at_or_after(self, t: float) -> int:
        """Smallest k with t_k >= t (clipped to the final node)."""
        k = int(np.ceil(t / self.dt - 1e-12))
        return min(max(k, 0), self.n_steps)
