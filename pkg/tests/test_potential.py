import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kshnn.dvr import build_grid, kinetic_matrix
from kshnn.energynet import EnergyNet, QuadraticEnergy
from kshnn.ho import SUPERPOSITION_AMPLITUDES, ho_eigenstate, ho_hamiltonian, superposition_state
from kshnn.potential import (Gauge, GaugeError, PotentialProfile, extract_ks_potential, fix_gauge, network_energy,
                             xc_potential)

GRID = build_grid(-6, 6, 150)
ODD = build_grid(-6, 6, 151)  # has a node at x = 0
WIDE = build_grid(-11, 11, 275)


def test_quadratic_hook_recovers_harmonic_potential():
    state = superposition_state(SUPERPOSITION_AMPLITUDES, 0.3, GRID)
    v = extract_ks_potential(QuadraticEnergy(ho_hamiltonian(GRID)), state, GRID)
    assert np.max(np.abs(v.values - 0.5 * GRID.points ** 2)) < 1e-12
    assert np.all(v.validity)


@given(st.floats(-5, 5))
def test_diag_consistency_for_arbitrary_potential(a):
    H = kinetic_matrix(GRID) + np.diag(a * np.sin(GRID.points))
    v = extract_ks_potential(QuadraticEnergy(H), ho_eigenstate(1, 0.0, GRID), GRID)
    np.testing.assert_allclose(v.values, np.diag(H - kinetic_matrix(GRID)), rtol=0, atol=1e-12)


def test_constant_net_gives_minus_kinetic_diagonal():
    h = 4
    net = EnergyNet(np.zeros((h, 300)), np.zeros(h), np.zeros((h, h)), np.zeros(h), np.zeros(h), 0.0)
    v = extract_ks_potential(net, ho_eigenstate(0, 0, GRID), GRID)
    np.testing.assert_allclose(v.values, -math.pi ** 2 / (6 * GRID.dx ** 2), rtol=1e-15)


@given(st.floats(-10, 10))
def test_gauge_covariance(lam):
    H = ho_hamiltonian(GRID)
    s = superposition_state(SUPERPOSITION_AMPLITUDES, 0.0, GRID)
    v0 = extract_ks_potential(QuadraticEnergy(H), s, GRID)
    v1 = extract_ks_potential(QuadraticEnergy(H, norm_shift=lam), s, GRID)
    np.testing.assert_allclose(v1.values - v0.values, lam, rtol=0, atol=1e-11)
    g0 = fix_gauge(v0, "point", anchor_x=0.0)
    g1 = fix_gauge(v1, "point", anchor_x=0.0)
    np.testing.assert_allclose(g1.values, g0.values, rtol=0, atol=1e-11)


def test_point_gauge_on_harmonic_is_noop():
    v = PotentialProfile.from_function(ODD, lambda x: 0.5 * x ** 2)
    g = fix_gauge(v, "point", anchor_x=0.0)
    np.testing.assert_array_equal(g.values, v.values)
    assert g.gauge == Gauge("point", 0.0, 0.0)


@pytest.mark.parametrize("mode", ["point", "mean-over-region"])
def test_constant_profile_becomes_zero(mode):
    v = PotentialProfile(GRID, np.full(150, 3.5))
    g = fix_gauge(v, mode, anchor_x=1.0, density=np.ones(150))
    np.testing.assert_array_equal(g.values, 0.0)
    assert g.gauge.shift == 3.5


@pytest.mark.parametrize("mode", ["point", "mean-over-region", "none"])
def test_gauge_idempotent(mode):
    rng = np.random.default_rng(1)
    v = PotentialProfile(GRID, rng.normal(size=150))
    dens = rng.random(150)
    once = fix_gauge(v, mode, anchor_x=-2.0, density=dens, threshold=0.3)
    twice = fix_gauge(once, mode, anchor_x=-2.0, density=dens, threshold=0.3)
    np.testing.assert_allclose(twice.values, once.values, rtol=0, atol=1e-15)


def test_mean_gauge_uses_only_valid_dense_points():
    vals = np.arange(150.0)
    valid = np.ones(150, bool)
    valid[:10] = False
    dens = np.where(np.arange(150) < 100, 1.0, 0.0)
    g = fix_gauge(PotentialProfile(GRID, vals, valid), "mean-over-region", density=dens, threshold=0.5)
    assert g.gauge.shift == pytest.approx(np.mean(np.arange(10, 100)))
    np.testing.assert_array_equal(g.values[:10], vals[:10])  # invalid points untouched


def test_gauge_errors():
    v = PotentialProfile(GRID, np.zeros(150), np.zeros(150, bool))
    with pytest.raises(GaugeError):
        fix_gauge(v, "point")
    with pytest.raises(GaugeError):
        fix_gauge(v, "mean-over-region", density=np.ones(150))
    with pytest.raises(GaugeError):
        fix_gauge(PotentialProfile(GRID, np.zeros(150)), "mean-over-region")
    with pytest.raises(GaugeError):
        fix_gauge(PotentialProfile(GRID, np.zeros(150)), "median")


def test_profile_validation():
    with pytest.raises(ValueError):
        PotentialProfile(GRID, np.zeros(10))
    with pytest.raises(ValueError):
        PotentialProfile(GRID, np.full(150, np.nan), np.ones(150, bool))
    p = PotentialProfile(GRID, np.where(np.arange(150) < 5, np.inf, 0.0))
    assert not p.validity[:5].any() and p.validity[5:].all()


def test_hook_levels_are_exact():
    hook = QuadraticEnergy(ho_hamiltonian(WIDE))
    e = [network_energy(hook, ho_eigenstate(n, 0.0, WIDE)) for n in range(15)]
    np.testing.assert_allclose(np.array(e) - e[0], np.arange(15), atol=1e-9)
    over_time = [network_energy(hook, ho_eigenstate(3, t, WIDE)) for t in np.linspace(0, 4 * math.pi, 50)]
    assert np.std(over_time) < 1e-12


def test_xc_decomposition():
    rng = np.random.default_rng(2)
    v_ext = PotentialProfile(GRID, rng.normal(size=150))
    v_h = PotentialProfile(GRID, rng.normal(size=150))
    v = PotentialProfile(GRID, rng.normal(size=150), rng.random(150) > 0.3)
    xc = xc_potential(v, v_ext, v_h)
    np.testing.assert_array_equal(xc.validity, v.validity)
    np.testing.assert_allclose((xc.values + v_ext.values + v_h.values)[xc.validity], v.values[v.validity],
                               rtol=0, atol=1e-14)
    assert np.all(xc.values[~xc.validity] == 0.0)
    summed = PotentialProfile(GRID, v_ext.values + v_h.values)
    np.testing.assert_allclose(xc_potential(summed, v_ext, v_h).values, 0.0, atol=1e-15)


def test_xc_rejects_mixed_gauges_and_grids():
    a = fix_gauge(PotentialProfile(GRID, np.ones(150)), "point")
    b = fix_gauge(PotentialProfile(GRID, np.ones(150)), "mean-over-region", density=np.ones(150))
    with pytest.raises(GaugeError):
        xc_potential(a, b, PotentialProfile(GRID, np.zeros(150)))
    with pytest.raises(ValueError):
        xc_potential(a, PotentialProfile(ODD, np.zeros(151)), PotentialProfile(GRID, np.zeros(150)))
