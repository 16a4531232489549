"""Seeded PSO benchmark suite: success rate and iterations-to-tolerance per problem."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .hydro import SurrogateCp, cp_of_lambda
from .pso import PsoConfig, evaluate, init_swarm, pso_record, pso_step


@dataclass(frozen=True)
class Problem:
    name: str
    objective: Callable  # maximised
    bounds: tuple
    solution: tuple
    tolerance: float  # on the distance of g_best from the solution


def sphere(x) -> float:
    return -float(np.sum(np.square(x)))


def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return -float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * math.pi * x)))


_CP = SurrogateCp()


def cp_shape(lam: float) -> float:
    return cp_of_lambda(_CP, lam)


PROBLEMS = (
    Problem("sphere-2d", sphere, ((-5.0, 5.0), (-5.0, 5.0)), (0.0, 0.0), 1e-3),
    Problem("rastrigin-2d", rastrigin, ((-5.12, 5.12), (-5.12, 5.12)), (0.0, 0.0), 1e-3),
    Problem("cp-argmax-1d", cp_shape, ((0.0, 4.0),), (_CP.lambda_opt,), 1e-2),
)


@dataclass(frozen=True)
class BenchRow:
    problem: str
    seeds: int
    successes: int
    median_iterations: float  # over successful seeds; nan if none
    worst_error: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.seeds if self.seeds else 0.0


def run_problem(problem: Problem, config: PsoConfig, seed: int) -> tuple[bool, int, float]:
    """``(success, iterations_to_tolerance, final_error)`` for one seed.

    The initial evaluation counts as iteration 1, matching ``pso_optimize``.
    """
    if config.iterations < 1:
        return False, 0, math.inf
    target = np.array(problem.solution)
    swarm = init_swarm(problem.bounds, replace(config, seed=seed))
    swarm = pso_record(swarm, evaluate(problem.objective, swarm.positions))
    hit = 0
    err = float(np.linalg.norm(swarm.global_best - target))
    if err < problem.tolerance:
        hit = 1
    for it in range(2, config.iterations + 1):
        swarm = pso_step(swarm, problem.objective)
        err = float(np.linalg.norm(swarm.global_best - target))
        if not hit and err < problem.tolerance:
            hit = it
    return err < problem.tolerance, hit, err


def pso_bench(config: PsoConfig = PsoConfig(), seeds: int = 20, problems=PROBLEMS) -> list[BenchRow]:
    rows = []
    for problem in problems:
        results = [run_problem(problem, config, s) for s in range(seeds)]
        wins = [r for r in results if r[0]]
        med = float(np.median([r[1] for r in wins])) if wins else math.nan
        worst = max((r[2] for r in results), default=math.nan)
        rows.append(BenchRow(problem.name, seeds, len(wins), med, worst))
    return rows


def format_bench(rows: list[BenchRow]) -> str:
    lines = [f"{'problem':<14} {'success':>8} {'median iters':>13} {'worst error':>12}"]
    for r in rows:
        med = "-" if math.isnan(r.median_iterations) else f"{r.median_iterations:g}"
        lines.append(f"{r.problem:<14} {100 * r.success_rate:>7.0f}% {med:>13} {r.worst_error:>12.3g}")
    return "\n".join(lines) + "\n"
