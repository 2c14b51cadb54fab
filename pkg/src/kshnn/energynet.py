"""Scalar energy-functional network with closed-form higher derivatives.

The network maps scaled coefficients ``u = [q; p]`` to an energy::

    z1 = W1 u + b1,  a1 = f(z1)
    z2 = W2 a1 + b2, a2 = f(z2)
    E  = w3 . a2 + b3

Hamilton's equations need ``dE/du``; training needs the derivative of a loss on
``dE/du`` with respect to the weights, and potential extraction needs the
diagonal of ``d2E/du2``. Depth is fixed at two hidden layers, so every one of
these is written out explicitly below and batched over rows of ``u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .dvr import StateCoefficients
from .trajectory import TrajectoryDataset, TrajectorySample

PARAM_NAMES = ("W1", "b1", "W2", "b2", "w3", "b3")


@dataclass(frozen=True)
class Activation:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]

    def all(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, first and second derivative in one pass."""
        if self.name == "tanh":
            a = np.tanh(z)
            d = 1.0 - a * a
            return a, d, -2.0 * a * d
        s = _logistic(z)
        return _softplus(z), s, s * (1.0 - s)


def _softplus(z):
    # log(1 + e^z) without overflow
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def _logistic(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _tanh_d1(z):
    a = np.tanh(z)
    return 1.0 - a * a


def _tanh_d2(z):
    a = np.tanh(z)
    return -2.0 * a * (1.0 - a * a)


def _logistic_d1(z):
    s = _logistic(z)
    return s * (1.0 - s)


ACTIVATIONS = {
    "tanh": Activation("tanh", np.tanh, _tanh_d1, _tanh_d2),
    "softplus": Activation("softplus", _softplus, _logistic, _logistic_d1),
}


def _as_rows(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != dim:
        raise ValueError(f"input dimension {u.shape[-1]} does not match the network's {dim}")
    return u.reshape(-1, dim)


@dataclass
class EnergyNet:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")
        for name in ("W1", "b1", "W2", "b2", "w3"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        self.b3 = float(self.b3)
        h, d = self.W1.shape
        if d % 2:
            raise ValueError("input dimension must be even (q and p halves)")
        if self.b1.shape != (h,) or self.W2.shape != (h, h) or self.b2.shape != (h,) or self.w3.shape != (h,):
            raise ValueError("inconsistent layer shapes")
        if not all(np.all(np.isfinite(v)) for v in self.params().values()):
            raise ValueError("network parameters must be finite")

    @classmethod
    def initialize(cls, n_basis: int, hidden: int = 400, activation: str = "tanh", seed: int = 0) -> "EnergyNet":
        """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` init from a PCG64 stream."""
        rng = np.random.Generator(np.random.PCG64(seed))
        d = 2 * n_basis
        k1, k2 = 1.0 / math.sqrt(d), 1.0 / math.sqrt(hidden)
        return cls(
            W1=rng.uniform(-k1, k1, (hidden, d)),
            b1=rng.uniform(-k1, k1, hidden),
            W2=rng.uniform(-k2, k2, (hidden, hidden)),
            b2=rng.uniform(-k2, k2, hidden),
            w3=rng.uniform(-k2, k2, hidden),
            b3=float(rng.uniform(-k2, k2)),
            activation=activation,
        )

    @property
    def n_basis(self) -> int:
        return self.W1.shape[1] // 2

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def act(self) -> Activation:
        return ACTIVATIONS[self.activation]

    def params(self) -> dict[str, np.ndarray]:
        return {
            "W1": self.W1, "b1": self.b1, "W2": self.W2,
            "b2": self.b2, "w3": self.w3, "b3": np.asarray(self.b3),
        }

    def with_params(self, params: dict[str, np.ndarray]) -> "EnergyNet":
        merged = {**self.params(), **params}
        return EnergyNet(**{k: np.array(merged[k], copy=True) for k in PARAM_NAMES[:-1]},
                         b3=float(merged["b3"]), activation=self.activation)

    def _layers(self, U: np.ndarray):
        act = self.act
        z1 = U @ self.W1.T + self.b1
        a1, d1, e1 = act.all(z1)
        z2 = a1 @ self.W2.T + self.b2
        a2, d2, e2 = act.all(z2)
        return a1, d1, e1, a2, d2, e2

    def energy(self, u: np.ndarray) -> np.ndarray:
        U = _as_rows(u, 2 * self.n_basis)
        act = self.act
        a1 = act.f(U @ self.W1.T + self.b1)
        return act.f(a1 @ self.W2.T + self.b2) @ self.w3 + self.b3

    def gradient(self, u: np.ndarray) -> np.ndarray:
        U = _as_rows(u, 2 * self.n_basis)
        act = self.act
        z1 = U @ self.W1.T + self.b1
        z2 = act.f(z1) @ self.W2.T + self.b2
        r1 = (act.df(z2) * self.w3) @ self.W2
        return (act.df(z1) * r1) @ self.W1

    def hessian_diagonal(self, u: np.ndarray) -> np.ndarray:
        """Exact ``d2E/du_k^2`` for every input coordinate ``k``.

        Forward-mode tangents for all unit directions at once: the Jacobian
        ``dz2/du = W2 diag(f'(z1)) W1`` carries every coordinate's tangent.
        """
        U = _as_rows(u, 2 * self.n_basis)
        _, d1, e1, _, d2, e2 = self._layers(U)
        r1 = (d2 * self.w3) @ self.W2
        out = (e1 * r1) @ (self.W1 * self.W1)
        c2 = e2 * self.w3
        for b in range(U.shape[0]):
            A = self.W2 @ (d1[b][:, None] * self.W1)
            out[b] += c2[b] @ (A * A)
        return out

    def loss_and_gradient(self, U: np.ndarray, G: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Hamilton loss against target input-gradients ``G`` and its weight gradient."""
        U = _as_rows(U, 2 * self.n_basis)
        B, n = U.shape[0], self.n_basis
        a1, d1, e1, a2, d2, e2 = self._layers(U)
        s2 = d2 * self.w3
        r1 = s2 @ self.W2
        s1 = d1 * r1
        res = s1 @ self.W1 - G
        loss = _mean_loss(res, n)

        dg = (2.0 / (n * B)) * res
        dW1 = s1.T @ dg
        ds1 = dg @ self.W1.T
        dr1 = d1 * ds1
        dz1 = e1 * r1 * ds1
        dW2 = s2.T @ dr1
        ds2 = dr1 @ self.W2.T
        dw3 = np.sum(d2 * ds2, axis=0)
        dz2 = e2 * self.w3 * ds2
        dW2 += dz2.T @ a1
        db2 = np.sum(dz2, axis=0)
        dz1 += d1 * (dz2 @ self.W2)
        dW1 += dz1.T @ U
        db1 = np.sum(dz1, axis=0)
        grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2, "w3": dw3, "b3": np.asarray(0.0)}
        return loss, grads


@dataclass
class QuadraticEnergy:
    """Exact functional ``E = (q^T H q + p^T H p)/2`` for a fixed Hamiltonian matrix.

    Test hook standing in for a trained network. ``norm_shift`` adds
    ``lambda * sum(q^2 + p^2) / 2`` (a pure gauge term) and ``offset`` a constant.
    """

    H: np.ndarray
    norm_shift: float = 0.0
    offset: float = 0.0
    activation: str = field(default="quadratic", init=False)

    @property
    def n_basis(self) -> int:
        return self.H.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def with_params(self, params: dict[str, np.ndarray]) -> "QuadraticEnergy":
        return self

    def _split(self, u):
        U = _as_rows(u, 2 * self.n_basis)
        return U[:, : self.n_basis], U[:, self.n_basis:]

    def energy(self, u: np.ndarray) -> np.ndarray:
        Q, P = self._split(u)
        quad = np.sum(Q * (Q @ self.H), axis=1) + np.sum(P * (P @ self.H), axis=1)
        norm = np.sum(Q * Q, axis=1) + np.sum(P * P, axis=1)
        return 0.5 * quad + 0.5 * self.norm_shift * norm + self.offset

    def gradient(self, u: np.ndarray) -> np.ndarray:
        Q, P = self._split(u)
        return np.concatenate([Q @ self.H, P @ self.H], axis=1) + self.norm_shift * np.concatenate([Q, P], axis=1)

    def hessian_diagonal(self, u: np.ndarray) -> np.ndarray:
        Q, _ = self._split(u)
        diag = np.tile(np.diag(self.H), 2) + self.norm_shift
        return np.broadcast_to(diag, (Q.shape[0], diag.size)).copy()

    def loss_and_gradient(self, U: np.ndarray, G: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        return _mean_loss(self.gradient(U) - G, self.n_basis), {}


EnergyModel = Union[EnergyNet, QuadraticEnergy]
Batch = Union[TrajectoryDataset, Sequence[TrajectorySample]]


def _mean_loss(res: np.ndarray, n: int) -> float:
    # exactly rounded sum keeps the mean independent of sample order
    with np.errstate(over="ignore"):  # overflow surfaces as inf and is caught by the trainer
        per_sample = np.sum(res * res, axis=1) / n
    return math.fsum(per_sample.tolist()) / res.shape[0]


def _batch_arrays(batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, TrajectoryDataset):
        return batch.inputs(), batch.gradient_targets()
    if len(batch) == 0:
        raise ValueError("empty batch")
    U = np.stack([s.coeffs.vector for s in batch])
    G = np.stack([np.concatenate([-s.p_dot, s.q_dot]) for s in batch])
    return U, G


def _check_state(model: EnergyModel, state: StateCoefficients) -> np.ndarray:
    if state.n_basis != model.n_basis:
        raise ValueError(f"state has {state.n_basis} coefficients, model expects {model.n_basis}")
    return state.vector


def forward(net: EnergyModel, state: StateCoefficients) -> float:
    return float(net.energy(_check_state(net, state))[0])


def input_gradient(net: EnergyModel, state: StateCoefficients) -> tuple[np.ndarray, np.ndarray]:
    g = net.gradient(_check_state(net, state))[0]
    n = net.n_basis
    return g[:n], g[n:]


def input_hessian_diagonal(net: EnergyModel, state: StateCoefficients) -> tuple[np.ndarray, np.ndarray]:
    h = net.hessian_diagonal(_check_state(net, state))[0]
    n = net.n_basis
    return h[:n], h[n:]


@dataclass(frozen=True)
class HamiltonResidual:
    dq_residual: np.ndarray
    dp_residual: np.ndarray


def hamilton_residual(net: EnergyModel, sample: TrajectorySample) -> HamiltonResidual:
    dEdq, dEdp = input_gradient(net, sample.coeffs)
    return HamiltonResidual(sample.q_dot - dEdp, sample.p_dot + dEdq)


def hamilton_loss(net: EnergyModel, batch: Batch) -> float:
    """Mean over the batch of ``sum_i (|q_dot - dE/dp|^2 + |p_dot + dE/dq|^2) / n``."""
    U, G = _batch_arrays(batch)
    if U.shape[0] == 0:
        raise ValueError("empty batch")
    return _mean_loss(net.gradient(U) - G, net.n_basis)


def loss_parameter_gradient(net: EnergyModel, batch: Batch) -> dict[str, np.ndarray]:
    U, G = _batch_arrays(batch)
    if U.shape[0] == 0:
        raise ValueError("empty batch")
    return net.loss_and_gradient(U, G)[1]
