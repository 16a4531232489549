"""Sampling the turbine power surface and fitting the MLP surrogate to it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .hydro import TurbineConfig, available_power, mech_power
from .mlp import MlpNetwork, TrainConfig, TrainResult, init_network, mlp_train, predict


@dataclass(frozen=True)
class AnnSettings:
    hidden: tuple = (16, 16)
    flow_min: float = 0.8
    flow_max: float = 2.5
    omega_min: float = 0.5
    omega_max: float = 14.0
    grid_points: int = 41
    noise_fraction: float = 0.01  # sigma as a fraction of rated power
    rated_flow_m_per_s: float = 1.5
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if not (0 < self.flow_min < self.flow_max and 0 <= self.omega_min < self.omega_max):
            raise DomainError("training ranges must be non-degenerate")
        if self.grid_points < 2:
            raise DomainError("grid_points must be >= 2")
        if self.noise_fraction < 0:
            raise DomainError("noise_fraction must be >= 0")
        if any(int(h) < 1 for h in self.hidden):
            raise DomainError("hidden layer sizes must be positive")


def rated_power(turbine: TurbineConfig, flow_speed: float) -> float:
    """Maximum mechanical power at ``flow_speed`` (ideal MPP)."""
    return turbine.cp_model.peak[1] * available_power(turbine, flow_speed)


def power_grid(turbine: TurbineConfig, settings: AnnSettings, points: int | None = None, offset: float = 0.0):
    """Mechanical power on a regular (U, omega) grid, flattened.

    ``offset`` shifts every node by that fraction of a cell, which gives a
    held-out grid that shares no node with the training grid.
    """
    n = settings.grid_points if points is None else points
    du = (settings.flow_max - settings.flow_min) / (n - 1)
    dw = (settings.omega_max - settings.omega_min) / (n - 1)
    u = settings.flow_min + du * (np.arange(n) + offset)
    w = settings.omega_min + dw * (np.arange(n) + offset)
    if offset:
        u, w = u[:-1], w[:-1]
    uu, ww = np.meshgrid(u, w, indexing="ij")
    p = np.array([mech_power(turbine, a, b) for a, b in zip(uu.ravel(), ww.ravel())])
    return uu.ravel(), ww.ravel(), p


def training_set(turbine: TurbineConfig, settings: AnnSettings):
    u, w, p = power_grid(turbine, settings)
    sigma = settings.noise_fraction * rated_power(turbine, settings.rated_flow_m_per_s)
    if sigma > 0:
        p = p + np.random.default_rng(settings.train.seed).normal(0.0, sigma, p.size)
    return u, w, p


def train_surrogate(turbine: TurbineConfig, settings: AnnSettings = AnnSettings()) -> TrainResult:
    """Deterministic for fixed settings: data noise and weights both follow ``train.seed``."""
    u, w, p = training_set(turbine, settings)
    sizes = (2,) + tuple(int(h) for h in settings.hidden) + (1,)
    net = init_network(sizes, seed=settings.train.seed)
    if settings.train.epochs == 0:
        # keep the untrained weights but give them the dataset normalisation
        net.input_min = np.array([u.min(), w.min()])
        net.input_max = np.array([u.max(), w.max()])
        net.output_min, net.output_max = float(p.min()), float(max(p.max(), p.min() + 1.0))
        rmse = float(np.sqrt(np.mean((predict(net, u, w) - p) ** 2)))
        return TrainResult(net, [], rmse)
    return mlp_train(net, u, w, p, settings.train)


def held_out_rmse(net: MlpNetwork, turbine: TurbineConfig, settings: AnnSettings) -> tuple[float, float]:
    """``(rmse_W, max_power_W)`` on the half-cell-offset grid, noise free."""
    u, w, p = power_grid(turbine, settings, offset=0.5)
    err = predict(net, u, w) - p
    return float(np.sqrt(np.mean(err**2))), float(p.max())
