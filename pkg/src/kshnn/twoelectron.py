"""Exact two-electron soft-Coulomb dynamics and the Kohn-Sham orbital built from it.

The spatial wavefunction is a symmetric (singlet) ``n x n`` array
``Psi[i, j] = Psi(x_i, x_j)``. Both electrons occupy a single Kohn-Sham orbital
``phi = sqrt(n/2) exp(i int j/n)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .dvr import Grid, StateCoefficients, build_grid, derivative_matrix, kinetic_matrix
from .potential import PotentialProfile
from .trajectory import TrajectoryDataset

#: Grid, time step, and final time of the reference two-electron run.
DEFAULT_GRID = (-24.78, 21.97, 200)
DEFAULT_DT = 5e-4
DEFAULT_T_END = 15.0
DEFAULT_STRIDE = 10

WAVE_PACKET = {"alpha": 0.1, "x0": 10.0, "p": -1.5}
DENSITY_FLOOR = 1e-8


class GridTooSmallError(ValueError):
    pass


def default_grid() -> Grid:
    return build_grid(*DEFAULT_GRID)


def soft_coulomb(x1, x2):
    d = np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    out = 1.0 / np.sqrt(d * d + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def external_potential_2e(x):
    x = np.asarray(x, dtype=np.float64)
    out = -1.0 / np.sqrt((x + 10.0) ** 2 + 1.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Wavefunction2D:
    values: np.ndarray
    grid: Grid
    t: float = 0.0

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx**2)

    def exchange_asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))


@dataclass(frozen=True)
class DensityCurrentSnapshot:
    n: np.ndarray
    j: np.ndarray
    t: float = 0.0


def hydrogen_ground_state(grid: Grid, v_ext: Callable = external_potential_2e) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of ``T + diag(v_ext)``; the orbital is returned as grid samples."""
    H = kinetic_matrix(grid) + np.diag(v_ext(grid.points))
    w, V = np.linalg.eigh(H)
    c = V[:, 0]
    if np.sum(c) < 0:
        c = -c
    return float(w[0]), c / math.sqrt(grid.dx)


def wave_packet(x, alpha: float = 0.1, x0: float = 10.0, p: float = -1.5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (2.0 * alpha / math.pi) ** 0.25 * np.exp(-alpha * (x - x0) ** 2 + 1j * p * (x - x0))


def initial_wavefunction(grid: Grid, boundary_tol: float = 1e-6) -> Wavefunction2D:
    x = grid.points
    if not grid.x_min < WAVE_PACKET["x0"] < grid.x_max:
        raise GridTooSmallError("wave packet center lies outside the grid")
    _, phi_h = hydrogen_ground_state(grid)
    phi_wp = wave_packet(x, **WAVE_PACKET)
    psi = (np.outer(phi_h, phi_wp) + np.outer(phi_wp, phi_h)) / math.sqrt(2.0)
    edge = max(np.abs(psi[[0, -1], :]).max(), np.abs(psi[:, [0, -1]]).max())
    if edge > boundary_tol:
        raise GridTooSmallError(f"|Psi| = {edge:.2e} at the grid boundary exceeds {boundary_tol:.0e}")
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx**2)
    # exact exchange symmetry after normalization rounding
    psi = 0.5 * (psi + psi.T)
    return Wavefunction2D(psi, grid, 0.0)


class ExactPropagator:
    """Strang splitting ``K/2 V K/2`` with dense per-axis kinetic exponentials.

    ``exp(-i T dt/2)`` is formed once from the eigendecomposition of the
    (real symmetric) DVR kinetic matrix and applied as ``U Psi U^T``.
    Consecutive kinetic half steps are fused: the loop carries
    ``chi = U_half^dagger Psi`` and applies a full kinetic step between potential
    kicks, restoring ``Psi`` only when a snapshot is emitted.
    """

    def __init__(self, grid: Grid, dt: float, v_ext: Callable = external_potential_2e,
                 interaction: Optional[Callable] = soft_coulomb):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.grid, self.dt = grid, float(dt)
        x = grid.points
        self.T = kinetic_matrix(grid)
        w, V = np.linalg.eigh(self.T)
        self.U_half = (V * np.exp(-0.5j * dt * w)) @ V.T
        self.U_full = (V * np.exp(-1j * dt * w)) @ V.T
        v1 = v_ext(x)
        self.V = v1[:, None] + v1[None, :]
        if interaction is not None:
            self.V = self.V + interaction(x[:, None], x[None, :])
        self.kick = np.exp(-1j * dt * self.V)

    @staticmethod
    def _axes(U: np.ndarray, psi: np.ndarray) -> np.ndarray:
        return U @ psi @ U.T

    def run(self, psi: Wavefunction2D, n_steps: int, record_every: int = 1) -> Iterator[Wavefunction2D]:
        """Yield the state at step 0 and every ``record_every`` steps through ``n_steps``."""
        if psi.grid != self.grid:
            raise ValueError("wavefunction grid differs from the propagator grid")
        yield psi
        if n_steps == 0:
            return
        Uh = self.U_half
        chi = self.kick * self._axes(Uh, psi.values)
        for step in range(1, n_steps + 1):
            if step % record_every == 0:
                yield Wavefunction2D(self._axes(Uh, chi), self.grid, psi.t + step * self.dt)
            if step < n_steps:
                chi = self.kick * self._axes(self.U_full, chi)

    def energy(self, psi: Wavefunction2D) -> float:
        v = psi.values
        h = self.T @ v + v @ self.T + self.V * v
        return float(np.real(np.vdot(v, h)) * self.grid.dx**2)


def propagate_exact(psi: Wavefunction2D, dt: float, n_steps: int, record_every: int = 1,
                    propagator: ExactPropagator | None = None) -> list[Wavefunction2D]:
    """Return the states at steps ``0, record_every, ...`` (the input is element 0)."""
    prop = propagator or ExactPropagator(psi.grid, dt)
    return list(prop.run(psi, n_steps, record_every))


def propagate_exact_1d(phi: np.ndarray, grid: Grid, dt: float, n_steps: int, v: Callable) -> np.ndarray:
    """Single-particle Strang propagation of grid samples ``phi`` (reference solver)."""
    T = kinetic_matrix(grid)
    w, V = np.linalg.eigh(T)
    Uh = (V * np.exp(-0.5j * dt * w)) @ V.T
    kick = np.exp(-1j * dt * v(grid.points))
    out = np.asarray(phi, dtype=np.complex128)
    for _ in range(n_steps):
        out = Uh @ (kick * (Uh @ out))
    return out


def density_and_current(psi: Wavefunction2D) -> DensityCurrentSnapshot:
    dx = psi.grid.dx
    v = psi.values
    n = 2.0 * np.sum(np.abs(v) ** 2, axis=1) * dx
    dv = derivative_matrix(psi.grid) @ v  # d/dx along the first particle
    j = 2.0 * np.sum(np.imag(np.conj(v) * dv), axis=1) * dx
    return DensityCurrentSnapshot(n, j, psi.t)


def ks_orbital_from_density(snapshot: DensityCurrentSnapshot, grid: Grid,
                            floor: float = DENSITY_FLOOR) -> StateCoefficients:
    """Doubly occupied orbital with modulus ``sqrt(n/2)`` and phase ``int j/n`` from the left edge."""
    n = np.asarray(snapshot.n, dtype=np.float64)
    if np.any(n < -1e-14):
        raise ValueError("density must be nonnegative")
    n = np.clip(n, 0.0, None)
    if np.mean(n < floor) > 0.5:
        warnings.warn("density is below the floor on more than half of the grid", RuntimeWarning, stacklevel=2)
    velocity = snapshot.j / np.maximum(n, floor)
    phase = np.concatenate([[0.0], np.cumsum(0.5 * (velocity[1:] + velocity[:-1]) * grid.dx)])
    phi = np.sqrt(n / 2.0) * np.exp(1j * phase)
    return StateCoefficients.from_complex(math.sqrt(grid.dx) * phi, snapshot.t)


def hartree_potential(n: np.ndarray, grid: Grid) -> PotentialProfile:
    x = grid.points
    kernel = soft_coulomb(x[:, None], x[None, :])
    return PotentialProfile(grid, kernel @ np.asarray(n, dtype=np.float64) * grid.dx)


def exact_ks_potential(phi: StateCoefficients, phi_dot: tuple[np.ndarray, np.ndarray], grid: Grid,
                       threshold: float = 1e-6) -> PotentialProfile:
    """Invert ``i c_dot = (T + V) c`` pointwise: ``V = Re[(i c_dot - T c) / c]``.

    Points where the orbital density ``|phi(x)|^2`` falls below ``threshold``
    are flagged invalid (their value is set to 0).
    """
    c = phi.c
    c_dot = (np.asarray(phi_dot[0]) + 1j * np.asarray(phi_dot[1])) / math.sqrt(2.0)
    rho = np.abs(c) ** 2 / grid.dx
    valid = rho >= threshold
    safe = np.where(valid, c, 1.0)
    v = np.real((1j * c_dot - kinetic_matrix(grid) @ c) / safe)
    return PotentialProfile(grid, np.where(valid, v, 0.0), valid)


@dataclass
class ExactTrajectory:
    """Snapshots of the exact run at ``t = k * stride * dt``."""

    grid: Grid
    times: np.ndarray
    orbitals: list[StateCoefficients]
    densities: np.ndarray
    currents: np.ndarray
    energies: np.ndarray
    norms: np.ndarray
    max_asymmetry: float
    psi: Optional[list[Wavefunction2D]] = None
    metadata: dict = field(default_factory=dict)


def run_exact_trajectory(grid: Grid, dt: float = DEFAULT_DT, t_end: float = DEFAULT_T_END,
                         sample_stride: int = DEFAULT_STRIDE, store_psi: bool = False) -> ExactTrajectory:
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    n_steps = int(round(t_end / dt))
    prop = ExactPropagator(grid, dt)
    times, orbitals, dens, curr, energies, norms, psis = [], [], [], [], [], [], []
    asym = 0.0
    for psi in prop.run(initial_wavefunction(grid), n_steps, sample_stride):
        snap = density_and_current(psi)
        times.append(psi.t)
        orbitals.append(ks_orbital_from_density(snap, grid))
        dens.append(snap.n)
        curr.append(snap.j)
        energies.append(prop.energy(psi))
        norms.append(psi.norm())
        asym = max(asym, psi.exchange_asymmetry())
        if store_psi:
            psis.append(psi)
    meta = {"source": "2e", "dt": dt, "t_end": t_end, "sample_stride": sample_stride, "n_steps": n_steps}
    return ExactTrajectory(grid, np.array(times), orbitals, np.array(dens), np.array(curr),
                           np.array(energies), np.array(norms), asym, psis if store_psi else None, meta)


def dataset_from_trajectory(traj: ExactTrajectory) -> TrajectoryDataset:
    """Central differences of the orbital coefficients over adjacent snapshots.

    The first and last snapshots lack a two-sided stencil and are dropped.
    """
    if len(traj.orbitals) < 3:
        raise ValueError("need at least three snapshots for central differences")
    Q = np.stack([o.q for o in traj.orbitals])
    P = np.stack([o.p for o in traj.orbitals])
    h = traj.times[2:] - traj.times[:-2]
    q_dot = (Q[2:] - Q[:-2]) / h[:, None]
    p_dot = (P[2:] - P[:-2]) / h[:, None]
    meta = {**traj.metadata, "t_start": float(traj.times[1]), "t_stop": float(traj.times[-2])}
    return TrajectoryDataset(traj.grid, Q[1:-1], P[1:-1], q_dot, p_dot, traj.times[1:-1], meta)


def build_2e_dataset(grid: Grid, dt: float = DEFAULT_DT, t_end: float = DEFAULT_T_END,
                     sample_stride: int = DEFAULT_STRIDE) -> TrajectoryDataset:
    return dataset_from_trajectory(run_exact_trajectory(grid, dt, t_end, sample_stride))


def orbital_time_derivative(traj: ExactTrajectory, index: int) -> tuple[np.ndarray, np.ndarray]:
    """``(q_dot, p_dot)`` at snapshot ``index`` by central (one-sided at the ends) differences."""
    k = len(traj.orbitals)
    lo, hi = max(index - 1, 0), min(index + 1, k - 1)
    dt = traj.times[hi] - traj.times[lo]
    return ((traj.orbitals[hi].q - traj.orbitals[lo].q) / dt,
            (traj.orbitals[hi].p - traj.orbitals[lo].p) / dt)
