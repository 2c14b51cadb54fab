"""Uniform-grid sinc discrete-variable representation (Colbert-Miller).

Basis functions have unit L2 norm, so a wavefunction sampled on the grid maps to
DVR coefficients via ``c_k = sqrt(dx) * psi(x_k)``. Coefficients enter the rest
of the package in scaled real form ``q = sqrt(2) Re c``, ``p = sqrt(2) Im c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Evenly spaced grid including both endpoints."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise GridError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise GridError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise GridError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points, dtype=np.float64)

    def nearest_index(self, x: float) -> int:
        if x < self.x_min - 0.5 * self.dx or x > self.x_max + 0.5 * self.dx:
            raise GridError(f"x = {x} lies outside the grid [{self.x_min}, {self.x_max}]")
        return int(np.clip(round((x - self.x_min) / self.dx), 0, self.n_points - 1))

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(float(d["x_min"]), float(d["x_max"]), int(d["n_points"]))


def build_grid(x_min: float, x_max: float, n_points: int) -> Grid:
    return Grid(float(x_min), float(x_max), n_points)


@dataclass(frozen=True)
class StateCoefficients:
    """Scaled real/imaginary DVR coefficients of one orbital at time ``t``."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=np.float64)
        p = np.asarray(self.p, dtype=np.float64)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError(f"q and p must be 1D of equal length, got {q.shape} and {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_complex(cls, c: np.ndarray, t: float = 0.0) -> "StateCoefficients":
        c = np.asarray(c, dtype=np.complex128)
        return cls(math.sqrt(2.0) * c.real, math.sqrt(2.0) * c.imag, t)

    @classmethod
    def from_vector(cls, u: np.ndarray, t: float = 0.0) -> "StateCoefficients":
        n = u.shape[-1] // 2
        return cls(u[:n].copy(), u[n:].copy(), t)

    @property
    def c(self) -> np.ndarray:
        return (self.q + 1j * self.p) / math.sqrt(2.0)

    @property
    def vector(self) -> np.ndarray:
        """Network input layout ``[q; p]``."""
        return np.concatenate([self.q, self.p])

    @property
    def n_basis(self) -> int:
        return self.q.shape[0]

    def norm(self) -> float:
        return float(0.5 * (np.dot(self.q, self.q) + np.dot(self.p, self.p)))


def kinetic_matrix(grid: Grid) -> np.ndarray:
    """Sinc-DVR kinetic energy matrix ``T[i, j]``.

    Diagonal ``pi^2 / (6 dx^2)``, off-diagonal ``(-1)^(i-j) / (dx^2 (i-j)^2)``.
    Built from ``|i - j|`` only so the result is symmetric bit-for-bit.
    """
    idx = np.arange(grid.n_points)
    diff = np.abs(idx[:, None] - idx[None, :])
    sign = np.where(diff % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        off = 2.0 / diff.astype(np.float64) ** 2
    off[diff == 0] = math.pi**2 / 3.0
    return sign * off / (2.0 * grid.dx**2)


def derivative_matrix(grid: Grid) -> np.ndarray:
    """Sinc-DVR first-derivative matrix, antisymmetric with zero diagonal."""
    idx = np.arange(grid.n_points)
    diff = idx[:, None] - idx[None, :]
    sign = np.where(diff % 2 == 0, 1.0, -1.0)
    out = np.zeros((grid.n_points, grid.n_points))
    mask = diff != 0
    out[mask] = sign[mask] / (grid.dx * diff[mask])
    return out


def coefficients_from_samples(psi_values: np.ndarray, grid: Grid, t: float = 0.0) -> StateCoefficients:
    psi = np.asarray(psi_values, dtype=np.complex128)
    if psi.shape != (grid.n_points,):
        raise ValueError(f"expected {grid.n_points} samples, got shape {psi.shape}")
    return StateCoefficients.from_complex(math.sqrt(grid.dx) * psi, t)


def samples_from_coefficients(state: StateCoefficients, grid: Grid) -> np.ndarray:
    return state.c / math.sqrt(grid.dx)


def density_from_coefficients(states: Sequence[StateCoefficients], grid: Grid) -> np.ndarray:
    """Total density ``sum_m |phi_m(x_k)|^2`` on the grid points."""
    n = np.zeros(grid.n_points)
    for s in states:
        if s.n_basis != grid.n_points:
            raise GridError(f"state has {s.n_basis} coefficients but grid has {grid.n_points} points")
        n += (s.q**2 + s.p**2) / (2.0 * grid.dx)
    return n
