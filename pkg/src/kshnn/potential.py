"""Kohn-Sham potentials from energy functionals, gauge fixing, and xc decomposition."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dvr import Grid, StateCoefficients, kinetic_matrix
from .energynet import EnergyModel, forward, input_hessian_diagonal


class GaugeError(ValueError):
    pass


@dataclass(frozen=True)
class Gauge:
    anchor_kind: str = "none"  # "none" | "point" | "mean-over-region"
    anchor_value: float = 0.0
    shift: float = 0.0  # total constant subtracted so far

    def to_dict(self) -> dict:
        return {"anchor_kind": self.anchor_kind, "anchor_value": self.anchor_value, "shift": self.shift}


@dataclass(frozen=True)
class PotentialProfile:
    grid: Grid
    values: np.ndarray
    validity: np.ndarray = None
    gauge: Gauge = field(default_factory=Gauge)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_points,):
            raise ValueError(f"potential has {v.shape} values for a {self.grid.n_points}-point grid")
        valid = np.isfinite(v) if self.validity is None else np.asarray(self.validity, dtype=bool)
        if valid.shape != v.shape:
            raise ValueError("validity mask must match the values")
        if not np.all(np.isfinite(v[valid])):
            raise ValueError("values must be finite wherever valid")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "validity", valid)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "PotentialProfile":
        return cls(grid, fn(grid.points))


def extract_ks_potential(net: EnergyModel, state: StateCoefficients, grid: Grid) -> PotentialProfile:
    """``V(x_i) = (d2E/dq_i^2 + d2E/dp_i^2)/2 - T_ii`` evaluated at ``state``."""
    if state.n_basis != grid.n_points:
        raise ValueError("state and grid dimensions differ")
    hqq, hpp = input_hessian_diagonal(net, state)
    return PotentialProfile(grid, 0.5 * (hqq + hpp) - np.diag(kinetic_matrix(grid)))


def fix_gauge(profile: PotentialProfile, mode: str, *, anchor_x: float = 0.0,
              density: Optional[np.ndarray] = None, threshold: float = 1e-3) -> PotentialProfile:
    """Remove the undetermined constant.

    ``point`` subtracts the value at the grid point nearest ``anchor_x``;
    ``mean-over-region`` subtracts the mean over valid points where
    ``density > threshold``.
    """
    grid = profile.grid
    if mode == "point":
        i = grid.nearest_index(anchor_x)
        if not profile.validity[i]:
            raise GaugeError(f"anchor point x = {grid.points[i]} is not valid")
        c, anchor = profile.values[i], float(anchor_x)
    elif mode == "mean-over-region":
        if density is None:
            raise GaugeError("mean-over-region gauge needs a density")
        region = (np.asarray(density) > threshold) & profile.validity
        if not np.any(region):
            raise GaugeError("gauge region is empty")
        c, anchor = float(np.mean(profile.values[region])), float(threshold)
    elif mode == "none":
        return profile
    else:
        raise GaugeError(f"unknown gauge mode {mode!r}")
    values = np.where(profile.validity, profile.values - c, profile.values)
    return replace(profile, values=values, gauge=Gauge(mode, anchor, profile.gauge.shift + float(c)))


def network_energy(net: EnergyModel, state: StateCoefficients) -> float:
    return forward(net, state)


def xc_potential(v_ks: PotentialProfile, v_ext: PotentialProfile, v_h: PotentialProfile) -> PotentialProfile:
    """Pointwise ``v_ks - v_ext - v_h`` with the combined validity mask."""
    if not (v_ks.grid == v_ext.grid == v_h.grid):
        raise ValueError("potentials live on different grids")
    kinds = {p.gauge.anchor_kind for p in (v_ks, v_ext, v_h) if p.gauge.anchor_kind != "none"}
    if len(kinds) > 1:
        raise GaugeError(f"incompatible gauges: {sorted(kinds)}")
    valid = v_ks.validity & v_ext.validity & v_h.validity
    diff = np.where(valid, v_ks.values - v_ext.values - v_h.values, 0.0)
    kind = kinds.pop() if kinds else "none"
    return PotentialProfile(v_ks.grid, diff, valid, Gauge(kind, v_ks.gauge.anchor_value))
