"""Two-input Mamdani inference with triangular membership functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

LABELS = ("NB", "NS", "ZE", "PS", "PB")


@dataclass(frozen=True)
class Triangle:
    left: float
    peak: float
    right: float

    def __post_init__(self):
        if not (self.left < self.peak < self.right):
            raise DomainError("triangle vertices must satisfy left < peak < right")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        up = (x - self.left) / (self.peak - self.left)
        down = (self.right - x) / (self.right - self.peak)
        return np.clip(np.minimum(up, down), 0.0, 1.0)


def uniform_partition(n: int = 5, lo: float = -1.0, hi: float = 1.0) -> tuple[Triangle, ...]:
    """Evenly spaced triangles whose end sets peak exactly at the universe edges."""
    centers = np.linspace(lo, hi, n)
    step = centers[1] - centers[0]
    return tuple(Triangle(float(c - step), float(c), float(c + step)) for c in centers)


def perturb_observe_table() -> tuple[tuple[int, ...], ...]:
    """Hill-climbing rules indexed ``[dP label][d_omega label]`` -> output label.

    Keep moving the way that raised power, reverse otherwise; step size grows
    with the size of the power change.  No speed change means no new evidence,
    so the output is zero there.
    """
    rows = []
    for i in range(5):
        row = []
        for j in range(5):
            mag = abs(i - 2)
            sign = int(np.sign(i - 2) * np.sign(j - 2))
            row.append(2 + sign * mag)
        rows.append(tuple(row))
    return tuple(rows)


@dataclass(frozen=True, eq=False)
class FuzzySystem:
    input1_sets: tuple[Triangle, ...] = field(default_factory=uniform_partition)
    input2_sets: tuple[Triangle, ...] = field(default_factory=uniform_partition)
    output_sets: tuple[Triangle, ...] = field(default_factory=uniform_partition)
    rules: tuple[tuple[int, ...], ...] = field(default_factory=perturb_observe_table)
    resolution: int = 201

    def __post_init__(self):
        n1, n2, no = len(self.input1_sets), len(self.input2_sets), len(self.output_sets)
        if len(self.rules) != n1 or any(len(r) != n2 for r in self.rules):
            raise DomainError(f"rule table must be {n1}x{n2} and total")
        if any(not (0 <= k < no) for r in self.rules for k in r):
            raise DomainError("rule table refers to an unknown output label")
        grid = np.linspace(-1.0, 1.0, self.resolution)
        for sets in (self.input1_sets, self.input2_sets, self.output_sets):
            cover = np.sum([m(grid) for m in sets], axis=0)
            if np.any(cover <= 0):
                raise DomainError("membership functions must cover [-1, 1]")
        object.__setattr__(self, "_grid", grid)
        object.__setattr__(self, "_out_mf", np.vstack([m(grid) for m in self.output_sets]))


def fuzzy_infer(system: FuzzySystem, input_1: float, input_2: float) -> float:
    """min activation, max aggregation, centroid over the discretised output universe."""
    x1 = min(max(float(input_1), -1.0), 1.0)
    x2 = min(max(float(input_2), -1.0), 1.0)
    mu1 = [float(m(x1)) for m in system.input1_sets]
    mu2 = [float(m(x2)) for m in system.input2_sets]
    strength = np.zeros(len(system.output_sets))
    for i, a in enumerate(mu1):
        if a == 0.0:
            continue
        for j, b in enumerate(mu2):
            if b == 0.0:
                continue
            k = system.rules[i][j]
            strength[k] = max(strength[k], min(a, b))
    aggregate = np.max(np.minimum(system._out_mf, strength[:, None]), axis=0)
    area = aggregate.sum()
    if area <= 0.0:
        raise DomainError("aggregated fuzzy output is empty")
    return float(np.dot(aggregate, system._grid) / area)
