"""Propagating orbital coefficients under a learned energy functional."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dvr import Grid, StateCoefficients, density_from_coefficients
from .energynet import EnergyModel

#: Maps a time to the exact orbital coefficients at that time.
ReferenceProvider = Callable[[float], Sequence[StateCoefficients]]


class PropagationDivergedError(RuntimeError):
    def __init__(self, message: str, trajectory: "DensityTrajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class PropagationConfig:
    dt: float = 1e-3
    n_steps: int = 1000
    calibration_interval: Optional[int] = None
    record_stride: int = 1

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.calibration_interval is not None and self.calibration_interval < 1:
            raise ValueError("calibration_interval must be >= 1")


@dataclass
class DensityTrajectory:
    times: list[float] = field(default_factory=list)
    densities: list[np.ndarray] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    norms: list[list[float]] = field(default_factory=list)
    states: list[list[StateCoefficients]] = field(default_factory=list)

    def density_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.densities[i]


def vector_field(net: EnergyModel, state: StateCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """Hamilton's equations: ``q_dot = dE/dp``, ``p_dot = -dE/dq``."""
    if state.n_basis != net.n_basis:
        raise ValueError(f"state has {state.n_basis} coefficients, model expects {net.n_basis}")
    g = net.gradient(state.vector)[0]
    n = state.n_basis
    return g[n:], -g[:n]


def _field_rows(net: EnergyModel, U: np.ndarray) -> np.ndarray:
    g = net.gradient(U)
    n = U.shape[1] // 2
    return np.concatenate([g[:, n:], -g[:, :n]], axis=1)


def _rk4_rows(net: EnergyModel, U: np.ndarray, dt: float) -> np.ndarray:
    k1 = _field_rows(net, U)
    k2 = _field_rows(net, U + 0.5 * dt * k1)
    k3 = _field_rows(net, U + 0.5 * dt * k2)
    k4 = _field_rows(net, U + dt * k3)
    return U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(net: EnergyModel, state: StateCoefficients, dt: float) -> StateCoefficients:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.n_basis != net.n_basis:
        raise ValueError(f"state has {state.n_basis} coefficients, model expects {net.n_basis}")
    with np.errstate(over="ignore", invalid="ignore"):
        u = _rk4_rows(net, state.vector[None, :], dt)[0]
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite state after RK4 step")
    return StateCoefficients.from_vector(u, state.t + dt)


def density_mse(n_learned: np.ndarray, n_exact: np.ndarray) -> float:
    a = np.asarray(n_learned, dtype=np.float64)
    b = np.asarray(n_exact, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"density length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def propagate(net: EnergyModel, initial: Sequence[StateCoefficients], config: PropagationConfig,
              grid: Grid, reference: ReferenceProvider | None = None) -> DensityTrajectory:
    """RK4-propagate every orbital and record densities every ``record_stride`` steps.

    With a reference provider, the density MSE against it is recorded and, if
    ``calibration_interval`` is set, all orbitals are reset to the reference
    coefficients every that many steps.
    """
    if not initial:
        raise ValueError("need at least one orbital")
    for s in initial:
        if s.n_basis != grid.n_points or s.n_basis != net.n_basis:
            raise ValueError("orbital, grid, and model dimensions must agree")
    t0 = float(initial[0].t)
    U = np.stack([s.vector for s in initial])
    out = DensityTrajectory()

    def record(step: int, U: np.ndarray) -> None:
        t = t0 + step * config.dt
        states = [StateCoefficients.from_vector(u, t) for u in U]
        n = density_from_coefficients(states, grid)
        out.times.append(t)
        out.densities.append(n)
        out.norms.append([s.norm() for s in states])
        out.states.append(states)
        if reference is not None:
            out.mse.append(density_mse(n, density_from_coefficients(reference(t), grid)))

    record(0, U)
    for step in range(1, config.n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            U_next = _rk4_rows(net, U, config.dt)
            # a finite state whose density overflows is just as lost
            finite = np.all(np.isfinite(U_next)) and math.isfinite(float(np.sum(U_next * U_next)))
        if not finite:
            raise PropagationDivergedError(f"non-finite coefficients at step {step}", out)
        U = U_next
        if reference is not None and config.calibration_interval and step % config.calibration_interval == 0:
            U = np.stack([s.vector for s in reference(t0 + step * config.dt)])
        if step % config.record_stride == 0:
            record(step, U)
    return out


@dataclass
class SampledReference:
    """Reference provider backed by stored snapshots at known times."""

    times: np.ndarray
    states: Sequence[Sequence[StateCoefficients]]
    tolerance: float = 1e-9

    def __call__(self, t: float) -> Sequence[StateCoefficients]:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > self.tolerance * max(1.0, abs(t)):
            raise KeyError(f"no reference snapshot at t = {t}")
        return self.states[i]
