"""Fast oracle suite: closed-form derivatives, DVR spectrum, exact dynamics, potential identity.

Each check compares the package against an independent route (finite
differences, a dense eigensolver, the analytic harmonic-oscillator evolution)
and returns a :class:`CheckResult`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dvr import build_grid
from .dynamics import PropagationConfig, propagate, rk4_step
from .energynet import EnergyNet, QuadraticEnergy
from .ho import SUPERPOSITION_AMPLITUDES, ho_hamiltonian, superposition_state
from .potential import extract_ks_potential, fix_gauge


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


def _random_net(rng: np.random.Generator, n_basis: int, hidden: int, activation: str) -> EnergyNet:
    net = EnergyNet.initialize(n_basis, hidden, activation, seed=int(rng.integers(2**31)))
    # push pre-activations out of the linear regime so second derivatives matter
    return net.with_params({"W1": 3.0 * net.W1, "w3": 2.0 * net.w3})


def check_input_gradient(n_trials: int = 10, step: float = 1e-5, tol: float = 1e-6, seed: int = 11) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n_trials):
        net = _random_net(rng, 6, 12, ("tanh", "softplus")[trial % 2])
        u = rng.normal(size=12)
        g = net.gradient(u)[0]
        fd = np.empty_like(u)
        for k in range(u.size):
            e = np.zeros_like(u)
            e[k] = step
            fd[k] = (net.energy(u + e)[0] - net.energy(u - e)[0]) / (2 * step)
        worst = max(worst, _rel(g, fd))
    return CheckResult("input gradient vs central FD", worst < tol, f"max rel err {worst:.2e} (tol {tol:g})")


def check_hessian_diagonal(n_trials: int = 10, step: float = 1e-3, tol: float = 1e-4, seed: int = 12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n_trials):
        net = _random_net(rng, 6, 12, ("tanh", "softplus")[trial % 2])
        u = rng.normal(size=12)
        h = net.hessian_diagonal(u)[0]
        e0 = net.energy(u)[0]
        fd = np.empty_like(u)
        for k in range(u.size):
            e = np.zeros_like(u)
            e[k] = step
            fd[k] = (net.energy(u + e)[0] - 2 * e0 + net.energy(u - e)[0]) / step**2
        worst = max(worst, _rel(h, fd))
    return CheckResult("Hessian diagonal vs second-order FD", worst < tol, f"max rel err {worst:.2e} (tol {tol:g})")


def check_parameter_gradient(n_params: int = 20, step: float = 1e-5, tol: float = 1e-4, seed: int = 13) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_params):
        net = _random_net(rng, 5, 10, ("tanh", "softplus")[i % 2])
        U = rng.normal(size=(8, 10))
        G = rng.normal(size=(8, 10))
        _, grads = net.loss_and_gradient(U, G)
        names = [k for k in net.params() if k != "b3"]
        name = names[int(rng.integers(len(names)))]
        shape = net.params()[name].shape
        idx = tuple(int(rng.integers(s)) for s in shape)
        vals = []
        for sgn in (1.0, -1.0):
            p = {k: np.array(v, copy=True) for k, v in net.params().items()}
            p[name][idx] += sgn * step
            vals.append(net.with_params(p).loss_and_gradient(U, G)[0])
        fd = (vals[0] - vals[1]) / (2 * step)
        an = float(grads[name][idx])
        worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-8))
    return CheckResult("loss parameter gradient vs FD", worst < tol, f"max rel err {worst:.2e} over {n_params} params (tol {tol:g})")


def check_dvr_spectrum() -> CheckResult:
    grid = build_grid(-6.0, 6.0, 150)
    w = np.linalg.eigvalsh(ho_hamiltonian(grid))
    e0_err = abs(w[0] - 0.5)
    spacing_err = float(np.max(np.abs(np.diff(w[:15]) - 1.0)))
    ok = e0_err < 1e-6 and spacing_err < 1e-4
    return CheckResult("DVR harmonic spectrum", ok, f"|E0-0.5| = {e0_err:.1e} (tol 1e-6), max |dE-1| = {spacing_err:.1e} (tol 1e-4)")


def check_exact_dynamics() -> CheckResult:
    grid = build_grid(-6.0, 6.0, 150)
    hook = QuadraticEnergy(ho_hamiltonian(grid))
    state = superposition_state(SUPERPOSITION_AMPLITUDES, 0.0, grid)
    for _ in range(1000):
        state = rk4_step(hook, state, 1e-3)
    # analytic evolution uses the DVR eigenbasis, i.e. the same discrete Hamiltonian
    w, V = np.linalg.eigh(ho_hamiltonian(grid))
    c0 = superposition_state(SUPERPOSITION_AMPLITUDES, 0.0, grid).c
    exact = V @ (np.exp(-1j * w * 1.0) * (V.T @ c0))
    coef_err = float(np.max(np.abs(state.c - exact)))
    period = 4 * math.pi
    n_steps = int(round(period / 1e-3))
    cfg = PropagationConfig(dt=period / n_steps, n_steps=n_steps, record_stride=n_steps)
    traj = propagate(hook, [superposition_state(SUPERPOSITION_AMPLITUDES, 0.0, grid)], cfg, grid)
    dens_err = float(np.max(np.abs(traj.densities[-1] - traj.densities[0])))
    ok = coef_err < 1e-8 and dens_err < 1e-6
    return CheckResult("RK4 exact-dynamics oracle", ok, f"max coef err at t=1 {coef_err:.1e} (tol 1e-8), density return at 4pi {dens_err:.1e} (tol 1e-6)")


def check_potential_identity(lam: float = 0.37) -> CheckResult:
    grid = build_grid(-6.0, 6.0, 150)
    H = ho_hamiltonian(grid)
    state = superposition_state(SUPERPOSITION_AMPLITUDES, 0.0, grid)
    x = grid.points
    v = extract_ks_potential(QuadraticEnergy(H), state, grid)
    v_shift = extract_ks_potential(QuadraticEnergy(H, norm_shift=lam), state, grid)
    id_err = float(np.max(np.abs(v.values - 0.5 * x**2)))
    shift_err = float(np.max(np.abs(v_shift.values - v.values - lam)))
    g1 = fix_gauge(v, "point", anchor_x=0.0).values
    g2 = fix_gauge(v_shift, "point", anchor_x=0.0).values
    gauge_err = float(np.max(np.abs(g1 - g2)))
    # only rounding of (T_ii + v) - T_ii with T_ii ~ 250 remains
    tol = 1e-12
    ok = id_err < tol and shift_err < tol and gauge_err < tol
    return CheckResult("potential identity and gauge covariance", ok,
                       f"|V-x^2/2| {id_err:.1e}, shift err {shift_err:.1e}, gauge-fixed diff {gauge_err:.1e} (tol {tol:g})")


FAST_CHECKS = (
    check_input_gradient,
    check_hessian_diagonal,
    check_parameter_gradient,
    check_dvr_spectrum,
    check_exact_dynamics,
    check_potential_identity,
)


def run_all() -> list[CheckResult]:
    return [check() for check in FAST_CHECKS]
