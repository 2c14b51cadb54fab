"""Analytic harmonic-oscillator (omega = 1) eigenstates and training trajectories."""
from __future__ import annotations

import math

import numpy as np

from .dvr import Grid, StateCoefficients, coefficients_from_samples, kinetic_matrix
from .trajectory import TrajectoryDataset

MAX_QUANTUM_NUMBER = 50

#: Evaluation state used for density-propagation comparisons (lowest four levels).
SUPERPOSITION_AMPLITUDES = np.array([1 / math.sqrt(2), 0.5, 1 / math.sqrt(6), 1 / math.sqrt(12)], dtype=np.complex128)


def _eigenfunction_table(n_max: int, x: np.ndarray) -> np.ndarray:
    """Rows ``psi_0 .. psi_{n_max}`` at ``x`` via the normalized recurrence."""
    if n_max > MAX_QUANTUM_NUMBER:
        raise OverflowError(f"quantum number {n_max} exceeds the supported maximum {MAX_QUANTUM_NUMBER}")
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, n_max + 1):
        out[n] = x * math.sqrt(2.0 / n) * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def ho_eigenfunction(n: int, x):
    """Normalized eigenfunction ``psi_n(x)``; accepts scalar or array ``x``."""
    if n < 0:
        raise ValueError("quantum number must be nonnegative")
    val = _eigenfunction_table(n, x)[n]
    return float(val) if np.ndim(val) == 0 else val


def ho_energy(n: int) -> float:
    return n + 0.5


def ho_eigenstate(n: int, t: float, grid: Grid) -> StateCoefficients:
    psi = ho_eigenfunction(n, grid.points) * np.exp(-1j * ho_energy(n) * t)
    return coefficients_from_samples(psi, grid, t)


def ho_eigenstate_time_derivative(n: int, t: float, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(q_dot, p_dot)`` from ``c_dot = -i (n + 1/2) c``."""
    s = ho_eigenstate(n, t, grid)
    w = ho_energy(n)
    return w * s.p, -w * s.q


def build_ho_dataset(M: int, grid: Grid, t_start: float, t_end: float, n_timestamps: int) -> TrajectoryDataset:
    """Lowest ``M`` eigenstates at ``n_timestamps`` evenly spaced times (endpoints included).

    Samples are ordered eigenstate-major: all timestamps of ``n = 0`` first.
    """
    if M < 1:
        raise ValueError("need at least one eigenstate")
    if n_timestamps < 2:
        raise ValueError("need at least two timestamps")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    times = np.linspace(t_start, t_end, n_timestamps)
    table = _eigenfunction_table(M - 1, grid.points) * math.sqrt(2.0 * grid.dx)
    energies = np.arange(M) + 0.5
    phase = energies[:, None] * times[None, :]  # (M, T)
    # psi_n(x) e^{-i w t}: q = a cos(wt), p = -a sin(wt)
    cos, sin = np.cos(phase), np.sin(phase)
    q = (cos[:, :, None] * table[:, None, :]).reshape(M * n_timestamps, -1)
    p = (-sin[:, :, None] * table[:, None, :]).reshape(M * n_timestamps, -1)
    w = np.repeat(energies, n_timestamps)[:, None]
    meta = {
        "source": "ho",
        "eigenstates": M,
        "t_start": float(t_start),
        "t_end": float(t_end),
        "n_timestamps": int(n_timestamps),
    }
    return TrajectoryDataset(grid, q, p, w * p, -w * q, np.tile(times, M), meta)


def superposition_state(amplitudes, t: float, grid: Grid) -> StateCoefficients:
    a = np.asarray(amplitudes, dtype=np.complex128)
    if abs(np.sum(np.abs(a) ** 2) - 1.0) > 1e-10:
        raise ValueError("superposition amplitudes must be normalized")
    table = _eigenfunction_table(len(a) - 1, grid.points)
    phases = np.exp(-1j * (np.arange(len(a)) + 0.5) * t)
    return coefficients_from_samples((a * phases) @ table, grid, t)


def superposition_time_derivative(amplitudes, t: float, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(amplitudes, dtype=np.complex128) * (-1j * (np.arange(len(amplitudes)) + 0.5))
    table = _eigenfunction_table(len(a) - 1, grid.points)
    phases = np.exp(-1j * (np.arange(len(a)) + 0.5) * t)
    cdot = math.sqrt(grid.dx) * ((a * phases) @ table)
    return math.sqrt(2.0) * cdot.real, math.sqrt(2.0) * cdot.imag


def ho_hamiltonian(grid: Grid) -> np.ndarray:
    return kinetic_matrix(grid) + np.diag(0.5 * grid.points**2)
