"""Adam training of energy networks against the Hamilton loss."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, asdict
from typing import Callable, Optional

import numpy as np

from .energynet import ACTIVATIONS, EnergyModel, EnergyNet
from .trajectory import TrajectoryDataset


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or parameters become non-finite.

    ``history`` holds the epochs completed before divergence.
    """

    def __init__(self, message: str, history: list[tuple[int, float]]):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 2000
    target_loss: Optional[float] = None
    seed: int = 0
    activation: str = "softplus"
    hidden: int = 400

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()},
                   {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}, 0)


def adam_step(net: EnergyModel, grad: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig) -> tuple[EnergyModel, AdamState]:
    """One bias-corrected Adam update; returns new network and state objects."""
    params = net.params()
    if set(grad) != set(params) or set(state.first_moment) != set(params):
        raise ValueError("gradient/state keys do not match the network parameters")
    b1, b2 = config.beta1, config.beta2
    t = state.step_count + 1
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grad[k], dtype=np.float64)
        if g.shape != p.shape or state.first_moment[k].shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {k}")
        m = b1 * state.first_moment[k] + (1.0 - b1) * g
        v = b2 * state.second_moment[k] + (1.0 - b2) * (g * g)
        new_params[k] = p - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
        m_new[k], v_new[k] = m, v
    return net.with_params(new_params), AdamState(m_new, v_new, t)


@dataclass
class TrainResult:
    net: EnergyModel
    history: list[tuple[int, float]]
    adam_state: AdamState
    wall_time: float = 0.0
    stopped_on_target: bool = False


def train(dataset: TrajectoryDataset, config: TrainConfig, net: EnergyModel | None = None,
          adam_state: AdamState | None = None,
          progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Mini-batch Adam on the Hamilton loss.

    Samples are shuffled each epoch with a PCG64 generator seeded from
    ``config.seed``. The recorded epoch loss is the batch-size weighted mean of
    the mini-batch losses seen during that epoch; training stops after
    ``max_epochs`` or once that value drops below ``target_loss``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if net is None:
        net = EnergyNet.initialize(dataset.n_basis, config.hidden, config.activation, config.seed)
    if net.n_basis != dataset.n_basis:
        raise ValueError(f"network expects {net.n_basis} coefficients, dataset has {dataset.n_basis}")
    state = adam_state or AdamState.zeros_like(net.params())
    rng = np.random.Generator(np.random.PCG64(config.seed))
    U_all = dataset.inputs()
    G_all = dataset.gradient_targets()
    N = len(dataset)
    history: list[tuple[int, float]] = []
    t0 = time.perf_counter()
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(N)
        weighted = []
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = net.loss_and_gradient(U_all[idx], G_all[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", history)
            weighted.append(loss * len(idx))
            if grads:
                try:
                    net, state = adam_step(net, grads, state, config)
                except ValueError as exc:  # non-finite parameters are rejected by the net
                    raise TrainingDivergedError(f"epoch {epoch}: {exc}", history) from exc
        epoch_loss = math.fsum(weighted) / N
        history.append((epoch, epoch_loss))
        if progress is not None:
            progress({"epoch": epoch, "loss": epoch_loss, "wall_time": time.perf_counter() - t0})
        if config.target_loss is not None and epoch_loss < config.target_loss:
            stopped = True
            break
    return TrainResult(net, history, state, time.perf_counter() - t0, stopped)
