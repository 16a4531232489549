"""Global-best particle swarm optimiser (maximisation) with a seeded, replayable generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DomainError, TidalError


class ObjectiveError(TidalError):
    """An objective evaluation failed; ``position`` is the point that triggered it."""

    def __init__(self, message: str, position):
        super().__init__(f"{message} at position {list(np.ravel(position))}")
        self.position = np.array(position, dtype=float)


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 20
    iterations: int = 100
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1:
            raise DomainError("need at least one particle")
        if self.iterations < 0:
            raise DomainError("iterations must be non-negative")


@dataclass(frozen=True, eq=False)
class Swarm:
    """Immutable swarm snapshot; ``rng_state`` lets every step replay exactly."""

    positions: np.ndarray  # (particles, dims)
    velocities: np.ndarray
    best_positions: np.ndarray
    best_fitness: np.ndarray  # -inf until first evaluation
    global_best: np.ndarray
    global_fitness: float
    lower: np.ndarray
    upper: np.ndarray
    inertia: float
    cognitive: float
    social: float
    rng_state: dict

    @property
    def dims(self) -> int:
        return self.positions.shape[1]


def _bounds(bounds) -> tuple[np.ndarray, np.ndarray]:
    b = np.atleast_2d(np.asarray(bounds, dtype=float))
    if b.shape[1] != 2:
        raise DomainError("bounds must be a sequence of (low, high) pairs")
    lo, hi = b[:, 0].copy(), b[:, 1].copy()
    if not (np.all(np.isfinite(b)) and np.all(hi > lo)):
        raise DomainError("each bound needs finite low < high")
    return lo, hi


def init_swarm(bounds, config: PsoConfig = PsoConfig(), positions=None) -> Swarm:
    """Uniform random positions (or the given ones) with zero initial velocity."""
    lo, hi = _bounds(bounds)
    rng = np.random.default_rng(config.seed)
    if positions is None:
        x = lo + rng.random((config.particles, lo.size)) * (hi - lo)
    else:
        x = np.clip(np.array(positions, dtype=float).reshape(-1, lo.size), lo, hi)
    n = x.shape[0]
    return Swarm(
        positions=x,
        velocities=np.zeros_like(x),
        best_positions=x.copy(),
        best_fitness=np.full(n, -np.inf),
        global_best=x[0].copy(),
        global_fitness=-math.inf,
        lower=lo,
        upper=hi,
        inertia=config.inertia,
        cognitive=config.cognitive,
        social=config.social,
        rng_state=rng.bit_generator.state,
    )


def pso_record(swarm: Swarm, fitness) -> Swarm:
    """Fold fitness values of the current positions into p_best and g_best.

    Only strict improvements replace a record, and g_best is the first
    particle (lowest index) holding the maximum, so ties keep the earlier one.
    """
    f = np.asarray(fitness, dtype=float).reshape(-1)
    if f.size != swarm.positions.shape[0]:
        raise DomainError("one fitness value per particle is required")
    improved = f > swarm.best_fitness
    best_f = np.where(improved, f, swarm.best_fitness)
    best_x = np.where(improved[:, None], swarm.positions, swarm.best_positions)
    k = int(np.argmax(best_f))
    g_x, g_f = swarm.global_best, swarm.global_fitness
    if best_f[k] > g_f:
        g_x, g_f = best_x[k].copy(), float(best_f[k])
    return replace(swarm, best_positions=best_x, best_fitness=best_f, global_best=g_x, global_fitness=g_f)


def pso_move(swarm: Swarm) -> Swarm:
    """Canonical velocity/position update; clamped dimensions lose their velocity."""
    rng = np.random.default_rng()
    rng.bit_generator.state = swarm.rng_state
    shape = swarm.positions.shape
    r1 = rng.random(shape)
    r2 = rng.random(shape)
    x = swarm.positions
    v = (
        swarm.inertia * swarm.velocities
        + swarm.cognitive * r1 * (swarm.best_positions - x)
        + swarm.social * r2 * (swarm.global_best - x)
    )
    x_new = x + v
    clamped = (x_new < swarm.lower) | (x_new > swarm.upper)
    x_new = np.clip(x_new, swarm.lower, swarm.upper)
    v = np.where(clamped, 0.0, v)
    return replace(swarm, positions=x_new, velocities=v, rng_state=rng.bit_generator.state)


def evaluate(objective: Callable, positions: np.ndarray) -> np.ndarray:
    out = np.empty(positions.shape[0])
    for i, x in enumerate(positions):
        arg = float(x[0]) if x.size == 1 else x.copy()
        try:
            value = float(objective(arg))
        except ObjectiveError:
            raise
        except Exception as exc:
            raise ObjectiveError(f"objective raised {type(exc).__name__}: {exc}", x) from exc
        if math.isnan(value):
            raise ObjectiveError("objective returned NaN", x)
        out[i] = value
    return out


def pso_step(swarm: Swarm, fitness_of: Callable) -> Swarm:
    """Move every particle once, then evaluate and record the new positions."""
    moved = pso_move(swarm)
    return pso_record(moved, evaluate(fitness_of, moved.positions))


def swarm_radius(swarm: Swarm) -> float:
    """Largest distance from any particle to the global best."""
    return float(np.max(np.linalg.norm(swarm.positions - swarm.global_best, axis=1)))


def pso_optimize(objective: Callable, bounds, config: PsoConfig = PsoConfig(), positions=None):
    """Returns ``(best_position, best_fitness, trace)``.

    The trace holds g_best fitness after the initial evaluation and after each
    iteration; ``iterations = 1`` evaluates the initial swarm only.
    """
    if config.iterations < 1:
        raise DomainError("pso_optimize needs iterations >= 1")
    swarm = init_swarm(bounds, config, positions)
    swarm = pso_record(swarm, evaluate(objective, swarm.positions))
    trace = [swarm.global_fitness]
    for _ in range(config.iterations - 1):
        swarm = pso_step(swarm, objective)
        trace.append(swarm.global_fitness)
    best = swarm.global_best
    return (float(best[0]) if best.size == 1 else best.copy()), swarm.global_fitness, trace
