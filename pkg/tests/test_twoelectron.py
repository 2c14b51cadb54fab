import math

import numpy as np
import pytest

from kshnn.dvr import build_grid, density_from_coefficients, derivative_matrix, kinetic_matrix
from kshnn.ho import ho_eigenstate
from kshnn.potential import PotentialProfile, fix_gauge, xc_potential
from kshnn.twoelectron import (DensityCurrentSnapshot, ExactPropagator, GridTooSmallError, Wavefunction2D,
                               build_2e_dataset, dataset_from_trajectory, default_grid, density_and_current,
                               exact_ks_potential, external_potential_2e, hartree_potential,
                               hydrogen_ground_state, initial_wavefunction, ks_orbital_from_density,
                               orbital_time_derivative, propagate_exact, propagate_exact_1d,
                               run_exact_trajectory, soft_coulomb)

GRID = default_grid()


@pytest.fixture(scope="module")
def psi0():
    return initial_wavefunction(GRID)


def test_soft_coulomb_values():
    assert soft_coulomb(0.0, 0.0) == 1.0
    assert soft_coulomb(0.0, math.sqrt(3)) == pytest.approx(0.5)
    assert soft_coulomb(2.0, -1.0) == soft_coulomb(-1.0, 2.0)
    assert isinstance(soft_coulomb(0.0, 1.0), float)


def test_external_potential_values():
    assert external_potential_2e(-10.0) == -1.0
    assert external_potential_2e(-10.0 + math.sqrt(3)) == pytest.approx(-0.5)
    far = external_potential_2e(np.array([-1e6, 1e6]))
    assert np.all(far < 0) and np.all(far > -1e-5)


def test_hydrogen_ground_energy():
    E0, phi = hydrogen_ground_state(GRID)
    assert E0 == pytest.approx(-0.6698, abs=1e-4)
    assert E0 == pytest.approx(-0.6697771382156331, abs=1e-10)
    assert np.sum(phi ** 2) * GRID.dx == pytest.approx(1.0, abs=1e-12)


def test_initial_state(psi0):
    assert psi0.norm() == pytest.approx(1.0, abs=1e-10)
    assert psi0.exchange_asymmetry() == 0.0
    snap = density_and_current(psi0)
    assert np.sum(snap.n) * GRID.dx == pytest.approx(2.0, abs=1e-8)
    # one electron carries the packet momentum
    assert np.sum(snap.j) * GRID.dx == pytest.approx(-1.5, rel=0.02)


def test_initial_state_needs_room():
    with pytest.raises(GridTooSmallError):
        initial_wavefunction(build_grid(-12, 12, 100))


def test_real_wavefunction_has_no_current(psi0):
    real = Wavefunction2D(np.abs(psi0.values), GRID)
    np.testing.assert_array_equal(density_and_current(real).j, 0.0)


def test_zero_steps_returns_input(psi0):
    out = propagate_exact(psi0, 5e-4, 0)
    assert len(out) == 1 and out[0] is psi0


def test_unitarity_and_symmetry_over_1000_steps(psi0):
    prop = ExactPropagator(GRID, 5e-4)
    states = list(prop.run(psi0, 1000, 250))
    assert [round(s.t, 10) for s in states] == [0.0, 0.125, 0.25, 0.375, 0.5]
    for s in states:
        assert abs(s.norm() - 1.0) < 1e-8
        assert s.exchange_asymmetry() < 1e-10
    e0, e1 = prop.energy(states[0]), prop.energy(states[-1])
    assert abs(e1 - e0) / abs(e0) < 1e-6


def test_separable_case_matches_1d_reference():
    grid = build_grid(-8, 8, 64)
    harmonic = lambda x: 0.5 * np.asarray(x) ** 2
    a = ho_eigenstate(0, 0, grid).c + 0.5 * ho_eigenstate(1, 0, grid).c
    b = ho_eigenstate(2, 0, grid).c * np.exp(0.3j * grid.points)
    psi = Wavefunction2D(np.outer(a, b), grid)
    prop = ExactPropagator(grid, 1e-3, v_ext=harmonic, interaction=None)
    out = list(prop.run(psi, 200, 200))[-1]
    ref = np.outer(propagate_exact_1d(a, grid, 1e-3, 200, harmonic), propagate_exact_1d(b, grid, 1e-3, 200, harmonic))
    assert np.max(np.abs(out.values - ref)) < 1e-8


def test_ks_orbital_reconstruction(psi0):
    snap = density_and_current(psi0)
    phi = ks_orbital_from_density(snap, GRID)
    np.testing.assert_allclose(2 * np.abs(phi.c) ** 2 / GRID.dx, snap.n, rtol=0, atol=1e-10)
    # current of the reconstructed orbital: 2 Im(phi* dphi/dx)
    f = phi.c / math.sqrt(GRID.dx)
    j = 2 * np.imag(np.conj(f) * (derivative_matrix(GRID) @ f))
    mask = snap.n > 1e-3
    rms = np.sqrt(np.mean((j[mask] - snap.j[mask]) ** 2)) / np.sqrt(np.mean(snap.j[mask] ** 2))
    assert rms < 0.01


def test_zero_current_gives_real_nonnegative_orbital(psi0):
    n = density_and_current(psi0).n
    phi = ks_orbital_from_density(DensityCurrentSnapshot(n, np.zeros_like(n)), GRID)
    assert np.all(phi.p == 0) and np.all(phi.q >= 0)


def test_ks_orbital_warns_on_vanishing_density():
    n = np.zeros(GRID.n_points)
    n[100] = 1.0
    with pytest.warns(RuntimeWarning):
        ks_orbital_from_density(DensityCurrentSnapshot(n, np.zeros_like(n)), GRID)


def test_hartree_potential():
    np.testing.assert_array_equal(hartree_potential(np.zeros(GRID.n_points), GRID).values, 0.0)
    n = np.zeros(GRID.n_points)
    n[57] = 1.0 / GRID.dx
    np.testing.assert_allclose(hartree_potential(n, GRID).values, soft_coulomb(GRID.points, GRID.points[57]),
                               rtol=1e-14)


def test_hartree_of_initial_density_matches_trapezoid(psi0):
    n = density_and_current(psi0).n
    x = GRID.points
    trap = np.array([np.trapezoid(n / np.sqrt((xi - x) ** 2 + 1), x) for xi in x])
    v = hartree_potential(n, GRID).values
    np.testing.assert_allclose(v, trap, atol=1e-12)
    assert v.max() == pytest.approx(0.8314488170000928, abs=1e-10)


def test_exact_inversion_recovers_harmonic_potential():
    grid = build_grid(-6, 6, 150)
    x = grid.points
    for n in (0, 2):
        s = ho_eigenstate(n, 0.3, grid)
        c_dot = -1j * (n + 0.5) * s.c
        v = exact_ks_potential(s, (math.sqrt(2) * c_dot.real, math.sqrt(2) * c_dot.imag), grid)
        mask = (np.abs(x) <= 4) & v.validity
        assert np.max(np.abs(v.values[mask] - 0.5 * x[mask] ** 2)) < 1e-3


def test_exact_inversion_of_stationary_state_is_diagonal_potential():
    E0, phi = hydrogen_ground_state(GRID)
    from kshnn.dvr import coefficients_from_samples
    s = coefficients_from_samples(phi, GRID)
    c_dot = -1j * E0 * s.c
    v = exact_ks_potential(s, (math.sqrt(2) * c_dot.real, math.sqrt(2) * c_dot.imag), GRID)
    assert v.validity.sum() > 50
    assert np.all(v.values[~v.validity] == 0.0)
    np.testing.assert_allclose(v.values[v.validity], external_potential_2e(GRID.points)[v.validity], atol=1e-8)


@pytest.fixture(scope="module")
def short_trajectory():
    return run_exact_trajectory(GRID, 5e-4, 10 * 5e-4, 1)


def test_dataset_stencil_bookkeeping(short_trajectory):
    # 10 steps give 11 snapshots; both ends lack a central difference
    assert len(short_trajectory.times) == 11
    ds = dataset_from_trajectory(short_trajectory)
    assert len(ds) == 9
    np.testing.assert_allclose(ds.t, short_trajectory.times[1:-1])


def test_dataset_self_consistency(short_trajectory):
    ds = dataset_from_trajectory(short_trajectory)
    for s in ds:
        n = density_from_coefficients([s.coeffs, s.coeffs], GRID)
        assert np.sum(n) * GRID.dx == pytest.approx(2.0, abs=1e-8)
    assert np.max(np.abs(ds.norm_rates())) < 1e-4
    assert np.max(np.abs(short_trajectory.norms - 1)) < 1e-10
    assert short_trajectory.max_asymmetry < 1e-10


def test_build_dataset_covers_interval():
    ds = build_2e_dataset(GRID, 5e-4, 0.05, 10)
    assert ds.t[0] == pytest.approx(5e-3) and ds.t[-1] == pytest.approx(0.045)
    assert ds.metadata["source"] == "2e"


def test_initial_xc_reference(short_trajectory):
    k = 1
    phi, n = short_trajectory.orbitals[k], short_trajectory.densities[k]
    ks = exact_ks_potential(phi, orbital_time_derivative(short_trajectory, k), GRID)
    xc = xc_potential(ks, PotentialProfile.from_function(GRID, external_potential_2e), hartree_potential(n, GRID))
    xc = fix_gauge(xc, "mean-over-region", density=n, threshold=1e-3)
    pinned = {-10: -1.3954625049649603, -5: -0.8225485452901733, 5: 1.1264100412411855, 10: 0.6722599712434147}
    for x0, val in pinned.items():
        i = GRID.nearest_index(x0)
        assert xc.validity[i]
        assert xc.values[i] == pytest.approx(val, abs=1e-8)
    assert not xc.validity[GRID.nearest_index(0.0)]


def test_orbital_time_derivative_one_sided_at_ends(short_trajectory):
    qd, _ = orbital_time_derivative(short_trajectory, 0)
    o = short_trajectory.orbitals
    np.testing.assert_allclose(qd, (o[1].q - o[0].q) / (short_trajectory.times[1] - short_trajectory.times[0]))


def test_kinetic_matrix_reused_in_energy(psi0):
    prop = ExactPropagator(GRID, 5e-4)
    np.testing.assert_array_equal(prop.T, kinetic_matrix(GRID))
    assert prop.energy(psi0) == pytest.approx(0.50537833, abs=1e-7)
