"""MPPT strategies mapping plant measurements to a rotor speed reference.

All four share one entry point, :func:`mppt_update`, which is called once per
control period with fresh :class:`Measurements` and returns the new speed
reference together with the controller's next (immutable) state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import ControllerFault, DomainError
from .fuzzy import FuzzySystem, fuzzy_infer
from .mlp import MlpNetwork, predict
from .pmsg import VectorGains
from .pso import PsoConfig, Swarm, init_swarm, pso_move, pso_optimize, pso_record, swarm_radius


def tsr_omega_ref(lambda_opt: float, flow_speed: float, radius: float) -> float:
    if not (flow_speed > 0 and radius > 0):
        raise DomainError("flow speed and radius must be positive")
    return lambda_opt * flow_speed / radius


@dataclass(frozen=True)
class Measurements:
    time_s: float
    flow_speed_m_per_s: float
    omega_rad_per_s: float
    electrical_power_W: float
    mech_power_W: float = 0.0

    def __post_init__(self):
        values = (self.time_s, self.flow_speed_m_per_s, self.omega_rad_per_s, self.electrical_power_W, self.mech_power_W)
        if not all(math.isfinite(v) for v in values):
            raise ControllerFault(f"non-finite measurement {values}")


# -- variants ----------------------------------------------------------------------


@dataclass(frozen=True)
class Tsr:
    lambda_opt: float = 2.18
    radius_m: float = 0.455


@dataclass(frozen=True, eq=False)
class AnnFuzzy:
    network: MlpNetwork
    rated_power_W: float
    fuzzy_system: FuzzySystem = field(default_factory=FuzzySystem)
    step_limit: float = 0.15  # rad/s per control period
    output_gain: float = 0.15  # rad/s per period at full-scale fuzzy output
    dp_fraction: float = 0.05  # of rated power, maps to a normalised input of 1
    domega_fraction: float = 0.02  # of omega_hi

    def __post_init__(self):
        if not (self.rated_power_W > 0 and self.step_limit > 0 and self.output_gain > 0):
            raise DomainError("rated power, step limit and output gain must be positive")


@dataclass(frozen=True)
class PsoOnline:
    swarm_config: PsoConfig = PsoConfig()
    dwell_s: float = 0.05
    restart_threshold: float = 0.10
    hold_radius_fraction: float = 0.01

    def __post_init__(self):
        if not self.dwell_s > 0:
            raise DomainError("dwell_s must be positive")
        if not self.restart_threshold > 0:
            raise DomainError("restart_threshold must be positive")


@dataclass(frozen=True, eq=False)
class AnnPso:
    network: MlpNetwork
    swarm_config: PsoConfig = PsoConfig(particles=20, iterations=60)
    period_s: float = 0.1

    def __post_init__(self):
        if not self.period_s > 0:
            raise DomainError("period_s must be positive")


Variant = Union[Tsr, AnnFuzzy, PsoOnline, AnnPso]

KINDS = {Tsr: "tsr", AnnFuzzy: "ann_fuzzy", PsoOnline: "pso", AnnPso: "ann_pso"}


@dataclass(frozen=True, eq=False)
class ControllerSpec:
    variant: Variant
    omega_lo: float = 0.5
    omega_hi: float = 14.0
    label: str = ""
    # per-controller speed/current loop tuning; None uses the scenario default
    drive: Optional[VectorGains] = None

    def __post_init__(self):
        if not (0 <= self.omega_lo < self.omega_hi):
            raise DomainError("omega bounds must satisfy 0 <= omega_lo < omega_hi")
        if type(self.variant) not in KINDS:
            raise DomainError(f"unknown controller variant {type(self.variant).__name__}")
        if not self.label:
            object.__setattr__(self, "label", KINDS[type(self.variant)])

    @property
    def kind(self) -> str:
        return KINDS[type(self.variant)]

    def clamp(self, omega: float) -> float:
        return min(max(omega, self.omega_lo), self.omega_hi)


# -- state ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TsrState:
    last_time: float = -math.inf


@dataclass(frozen=True)
class FuzzyState:
    last_time: float = -math.inf
    omega_ref: float = math.nan
    prev_omega: float = math.nan
    prev_power: float = math.nan


@dataclass(frozen=True, eq=False)
class OnlinePsoState:
    swarm: Swarm
    last_time: float = -math.inf
    index: int = 0
    dwell_start: float = math.nan
    fitness: tuple = ()
    sample_sum: float = 0.0
    sample_count: int = 0
    holding: bool = False
    restarts: int = 0
    # running mean of power while holding, compared against g_best fitness
    hold_start: float = math.nan
    hold_sum: float = 0.0
    hold_count: int = 0


@dataclass(frozen=True)
class AnnPsoState:
    last_time: float = -math.inf
    last_run: float = -math.inf
    omega_ref: float = math.nan


ControllerState = Union[TsrState, FuzzyState, OnlinePsoState, AnnPsoState]


def _fresh_swarm(spec: ControllerSpec, variant: PsoOnline, restarts: int) -> Swarm:
    cfg = replace(variant.swarm_config, seed=variant.swarm_config.seed + restarts)
    return init_swarm([(spec.omega_lo, spec.omega_hi)], cfg)


def initial_state(spec: ControllerSpec) -> ControllerState:
    v = spec.variant
    if isinstance(v, Tsr):
        return TsrState()
    if isinstance(v, AnnFuzzy):
        return FuzzyState()
    if isinstance(v, PsoOnline):
        return OnlinePsoState(swarm=_fresh_swarm(spec, v, 0))
    return AnnPsoState()


# -- update --------------------------------------------------------------------------


def _check_time(state, meas: Measurements) -> None:
    if not meas.time_s > state.last_time:
        raise ControllerFault(f"measurement time {meas.time_s} does not advance past {state.last_time}")


def _update_fuzzy(spec, v: AnnFuzzy, state: FuzzyState, meas):
    p_hat = float(predict(v.network, meas.flow_speed_m_per_s, meas.omega_rad_per_s))
    if math.isnan(state.omega_ref):
        # no history yet: nudge upward from the measured speed to create the first delta
        ref = spec.clamp(meas.omega_rad_per_s + v.step_limit)
    else:
        dp = (p_hat - state.prev_power) / (v.dp_fraction * v.rated_power_W)
        dw = (meas.omega_rad_per_s - state.prev_omega) / (v.domega_fraction * spec.omega_hi)
        step = v.output_gain * fuzzy_infer(v.fuzzy_system, dp, dw)
        step = min(max(step, -v.step_limit), v.step_limit)
        ref = spec.clamp(state.omega_ref + step)
    return ref, FuzzyState(meas.time_s, ref, meas.omega_rad_per_s, p_hat)


def _update_online_pso(spec, v: PsoOnline, state: OnlinePsoState, meas):
    t = meas.time_s
    p = meas.electrical_power_W
    if state.holding:
        g_fit = state.swarm.global_fitness
        hold_start = state.hold_start if not math.isnan(state.hold_start) else t
        s, n = state.hold_sum + p, state.hold_count + 1
        if t - hold_start >= v.dwell_s:
            mean = s / n
            drifted = abs(mean - g_fit) > v.restart_threshold * max(abs(g_fit), 1e-9)
            if drifted:
                restarts = state.restarts + 1
                fresh = OnlinePsoState(swarm=_fresh_swarm(spec, v, restarts), last_time=t, restarts=restarts)
                return _update_online_pso(spec, v, replace(fresh, last_time=-math.inf), meas)
            hold_start, s, n = t, 0.0, 0
        ref = spec.clamp(float(state.swarm.global_best[0]))
        return ref, replace(state, last_time=t, hold_start=hold_start, hold_sum=s, hold_count=n)

    dwell_start = state.dwell_start if not math.isnan(state.dwell_start) else t
    s, n = state.sample_sum, state.sample_count
    swarm, index, fitness = state.swarm, state.index, state.fitness
    holding = False
    if t - dwell_start >= v.dwell_s - 1e-12:
        # close this particle's dwell; an empty second half falls back to the current sample
        fitness = fitness + ((s / n) if n else p,)
        index += 1
        dwell_start, s, n = t, 0.0, 0
        if index == swarm.positions.shape[0]:
            swarm = pso_record(swarm, np.array(fitness))
            index, fitness = 0, ()
            if swarm_radius(swarm) < v.hold_radius_fraction * (spec.omega_hi - spec.omega_lo):
                holding = True
            else:
                swarm = pso_move(swarm)
    elif t - dwell_start >= 0.5 * v.dwell_s - 1e-12:
        s, n = s + p, n + 1
    new_state = replace(
        state,
        swarm=swarm,
        last_time=t,
        index=index,
        dwell_start=dwell_start,
        fitness=fitness,
        sample_sum=s,
        sample_count=n,
        holding=holding,
        hold_start=math.nan,
        hold_sum=0.0,
        hold_count=0,
    )
    target = swarm.global_best[0] if holding else swarm.positions[index, 0]
    return spec.clamp(float(target)), new_state


def _update_ann_pso(spec, v: AnnPso, state: AnnPsoState, meas):
    t = meas.time_s
    if not math.isnan(state.omega_ref) and t - state.last_run < v.period_s - 1e-12:
        return state.omega_ref, replace(state, last_time=t)
    u = meas.flow_speed_m_per_s
    net = v.network

    def objective(omega):
        return float(predict(net, u, omega))

    best, _, _ = pso_optimize(objective, [(spec.omega_lo, spec.omega_hi)], v.swarm_config)
    ref = spec.clamp(float(best))
    return ref, AnnPsoState(t, t, ref)


def mppt_update(spec: ControllerSpec, state: ControllerState, meas: Measurements):
    """One control period: returns ``(omega_ref, new_state)`` with omega_ref inside the bounds."""
    _check_time(state, meas)
    v = spec.variant
    if isinstance(v, Tsr):
        ref = spec.clamp(tsr_omega_ref(v.lambda_opt, meas.flow_speed_m_per_s, v.radius_m))
        return ref, TsrState(meas.time_s)
    if isinstance(v, AnnFuzzy):
        return _update_fuzzy(spec, v, state, meas)
    if isinstance(v, PsoOnline):
        return _update_online_pso(spec, v, state, meas)
    return _update_ann_pso(spec, v, state, meas)
