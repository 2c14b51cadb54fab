"""Trajectory samples ``(q, p, q_dot, p_dot)`` used to train energy functionals."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .dvr import Grid, StateCoefficients


@dataclass(frozen=True)
class TrajectorySample:
    coeffs: StateCoefficients
    q_dot: np.ndarray
    p_dot: np.ndarray

    def __post_init__(self) -> None:
        n = self.coeffs.n_basis
        if np.shape(self.q_dot) != (n,) or np.shape(self.p_dot) != (n,):
            raise ValueError("q_dot and p_dot must match the coefficient length")

    def norm_rate(self) -> float:
        """d/dt of the orbital norm; zero for norm-conserving data."""
        c = self.coeffs
        return float(np.dot(c.q, self.q_dot) + np.dot(c.p, self.p_dot))


@dataclass
class TrajectoryDataset:
    """Column-stored samples; row ``i`` of every array is one time snapshot."""

    grid: Grid
    q: np.ndarray
    p: np.ndarray
    q_dot: np.ndarray
    p_dot: np.ndarray
    t: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        self.p = np.ascontiguousarray(self.p, dtype=np.float64)
        self.q_dot = np.ascontiguousarray(self.q_dot, dtype=np.float64)
        self.p_dot = np.ascontiguousarray(self.p_dot, dtype=np.float64)
        self.t = np.ascontiguousarray(self.t, dtype=np.float64)
        shape = self.q.shape
        if len(shape) != 2 or shape[0] == 0:
            raise ValueError("dataset must hold a nonempty 2D array of samples")
        if shape[1] != self.grid.n_points:
            raise ValueError(f"samples have {shape[1]} coefficients, grid has {self.grid.n_points} points")
        for name in ("p", "q_dot", "p_dot"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.t.shape != (shape[0],):
            raise ValueError("t must hold one timestamp per sample")

    @classmethod
    def from_samples(cls, grid: Grid, samples: Sequence[TrajectorySample], metadata: dict | None = None) -> "TrajectoryDataset":
        if not samples:
            raise ValueError("dataset must be nonempty")
        return cls(
            grid,
            np.stack([s.coeffs.q for s in samples]),
            np.stack([s.coeffs.p for s in samples]),
            np.stack([s.q_dot for s in samples]),
            np.stack([s.p_dot for s in samples]),
            np.array([s.coeffs.t for s in samples]),
            dict(metadata or {}),
        )

    def __len__(self) -> int:
        return self.q.shape[0]

    @property
    def n_basis(self) -> int:
        return self.q.shape[1]

    def __getitem__(self, i: int) -> TrajectorySample:
        return TrajectorySample(StateCoefficients(self.q[i], self.p[i], float(self.t[i])), self.q_dot[i], self.p_dot[i])

    def __iter__(self) -> Iterator[TrajectorySample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[TrajectorySample]:
        return list(self)

    def subset(self, idx: np.ndarray) -> "TrajectoryDataset":
        return TrajectoryDataset(self.grid, self.q[idx], self.p[idx], self.q_dot[idx], self.p_dot[idx], self.t[idx], dict(self.metadata))

    def inputs(self) -> np.ndarray:
        """Network inputs ``[q; p]``, shape ``(N, 2n)``."""
        return np.concatenate([self.q, self.p], axis=1)

    def gradient_targets(self) -> np.ndarray:
        """Exact-dynamics input gradient ``[dE/dq; dE/dp] = [-p_dot; q_dot]``."""
        return np.concatenate([-self.p_dot, self.q_dot], axis=1)

    def norm_rates(self) -> np.ndarray:
        return np.sum(self.q * self.q_dot + self.p * self.p_dot, axis=1)
