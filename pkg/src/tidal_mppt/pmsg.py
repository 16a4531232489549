"""PMSG in the rotor dq frame, cascaded PI vector control, PWM rectifier and DC link.

Motor sign convention throughout: a generating machine has negative ``i_q``,
negative electromagnetic torque and negative stator power.  The single sign
flip happens in :func:`converter_dc_power`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError, SimulationFault

TWO_PI_3 = 2.0 * math.pi / 3.0
SQRT3 = math.sqrt(3.0)
# linear modulation limit with min-max zero-sequence injection
DUTY_LIMIT = 2.0 / SQRT3


@dataclass(frozen=True)
class MachineParams:
    stator_resistance_ohm: float = 0.5
    d_inductance_H: float = 0.01
    q_inductance_H: float = 0.01
    magnet_flux_Wb: float = 1.0
    pole_pairs: int = 16

    def __post_init__(self):
        if self.stator_resistance_ohm < 0:
            raise DomainError("stator resistance must be >= 0")
        if not (self.d_inductance_H > 0 and self.q_inductance_H > 0):
            raise DomainError("inductances must be positive")
        if not self.magnet_flux_Wb > 0:
            raise DomainError("magnet flux must be positive")
        if int(self.pole_pairs) != self.pole_pairs or self.pole_pairs < 1:
            raise DomainError("pole_pairs must be a positive integer")


@dataclass(frozen=True)
class ElectricalState:
    i_d_A: float = 0.0
    i_q_A: float = 0.0
    v_dc_V: float = 50.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.i_d_A, self.i_q_A, self.v_dc_V)):
            raise DomainError("electrical state must be finite")
        if self.v_dc_V < 0:
            raise DomainError("DC-bus voltage must be >= 0")


@dataclass(frozen=True)
class DcLinkParams:
    capacitance_F: float = 2.2e-3
    load_resistance_ohm: float = 130.0
    v_floor_V: float = 1.0
    converter_efficiency: float = 1.0

    def __post_init__(self):
        if not (self.capacitance_F > 0 and self.load_resistance_ohm > 0):
            raise DomainError("DC-link capacitance and load resistance must be positive")
        if not (0 < self.converter_efficiency <= 1):
            raise DomainError("converter efficiency must lie in (0, 1]")
        if self.v_floor_V <= 0:
            raise DomainError("DC floor voltage must be positive")


# -- transforms ----------------------------------------------------------------


def park_transform(abc, theta_e: float) -> tuple[float, float, float]:
    """Amplitude-invariant abc -> dq0."""
    a, b, c = abc
    ca, cb, cc = math.cos(theta_e), math.cos(theta_e - TWO_PI_3), math.cos(theta_e + TWO_PI_3)
    sa, sb, sc = math.sin(theta_e), math.sin(theta_e - TWO_PI_3), math.sin(theta_e + TWO_PI_3)
    d = (2.0 / 3.0) * (a * ca + b * cb + c * cc)
    q = -(2.0 / 3.0) * (a * sa + b * sb + c * sc)
    return d, q, (a + b + c) / 3.0


def inverse_park(dq0, theta_e: float) -> tuple[float, float, float]:
    d, q, z = dq0
    return (
        d * math.cos(theta_e) - q * math.sin(theta_e) + z,
        d * math.cos(theta_e - TWO_PI_3) - q * math.sin(theta_e - TWO_PI_3) + z,
        d * math.cos(theta_e + TWO_PI_3) - q * math.sin(theta_e + TWO_PI_3) + z,
    )


# -- machine -------------------------------------------------------------------


def electromagnetic_torque(params: MachineParams, i_d: float, i_q: float) -> float:
    return 1.5 * params.pole_pairs * (
        params.magnet_flux_Wb * i_q + (params.d_inductance_H - params.q_inductance_H) * i_d * i_q
    )


def pmsg_derivative(params: MachineParams, state: ElectricalState, v_d: float, v_q: float, omega_mech: float):
    return current_derivative(params, state.i_d_A, state.i_q_A, v_d, v_q, omega_mech)


def current_derivative(params, i_d, i_q, v_d, v_q, omega_mech):
    w_e = params.pole_pairs * omega_mech
    rs, ld, lq = params.stator_resistance_ohm, params.d_inductance_H, params.q_inductance_H
    did = (v_d - rs * i_d + w_e * lq * i_q) / ld
    diq = (v_q - rs * i_q - w_e * ld * i_d - w_e * params.magnet_flux_Wb) / lq
    return did, diq


def stator_power(v_d: float, v_q: float, i_d: float, i_q: float) -> float:
    """Power flowing into the stator terminals (motor convention)."""
    return 1.5 * (v_d * i_d + v_q * i_q)


def copper_loss(params: MachineParams, i_d: float, i_q: float) -> float:
    return 1.5 * params.stator_resistance_ohm * (i_d * i_d + i_q * i_q)


def converter_dc_power(dc: DcLinkParams, p_stator: float) -> float:
    """Power delivered to the DC bus; generation (p_stator < 0) becomes positive."""
    p = -p_stator
    eta = dc.converter_efficiency
    return p * eta if p >= 0 else p / eta


def dc_link_derivative(params: DcLinkParams, v_dc: float, p_in: float) -> float:
    if v_dc <= params.v_floor_V:
        raise SimulationFault("DC bus fell to its floor voltage", float("nan"), {"v_dc": v_dc, "p_in": p_in})
    return (p_in / v_dc - v_dc / params.load_resistance_ohm) / params.capacitance_F


# -- PI ------------------------------------------------------------------------


@dataclass(frozen=True)
class PiState:
    kp: float
    ki: float
    integral: float = 0.0
    output_min: float = -math.inf
    output_max: float = math.inf
    anti_windup: bool = True

    def __post_init__(self):
        if not self.output_min < self.output_max:
            raise DomainError("PI output_min must be below output_max")


def pi_step(state: PiState, error: float, dt: float, limits=None) -> tuple[float, PiState]:
    """Advance one sample; returns ``(output, new_state)``.

    ``limits`` overrides the stored output bounds for this call (used for
    voltage limits that follow the DC bus).  With anti-windup the integral is
    held whenever integrating would push a saturated output further out.
    """
    if not dt > 0:
        raise DomainError("PI sample time must be positive")
    lo, hi = limits if limits is not None else (state.output_min, state.output_max)
    candidate = state.integral + error * dt
    raw = state.kp * error + state.ki * candidate
    out = min(max(raw, lo), hi)
    integral = candidate
    if state.anti_windup and out != raw and (raw - out) * error > 0:
        integral = state.integral
    return out, replace(state, integral=integral)


# -- vector control --------------------------------------------------------------


@dataclass(frozen=True)
class VectorGains:
    speed_kp: float = 40.0
    speed_ki: float = 160.0
    i_max: float = 40.0
    # regenerative-only by default: the resistive DC load cannot source motoring power
    iq_motoring_max: float = 0.0
    d_kp: float = 10.0
    d_ki: float = 500.0
    q_kp: float = 10.0
    q_ki: float = 500.0
    speed_anti_windup: bool = True

    def __post_init__(self):
        if self.i_max < 0 or self.iq_motoring_max < 0:
            raise DomainError("current limits must be >= 0")

    @classmethod
    def for_machine(cls, params: MachineParams, tau_current_s: float = 1e-3, **speed) -> "VectorGains":
        """Current loops placed at ``1/tau`` by pole-zero cancellation (kp = L/tau, ki = R/tau)."""
        r = params.stator_resistance_ohm
        return cls(
            d_kp=params.d_inductance_H / tau_current_s,
            d_ki=r / tau_current_s,
            q_kp=params.q_inductance_H / tau_current_s,
            q_ki=r / tau_current_s,
            **speed,
        )


@dataclass(frozen=True)
class VectorState:
    speed: PiState
    d: PiState
    q: PiState

    @classmethod
    def initial(cls, gains: VectorGains) -> "VectorState":
        return cls(
            speed=PiState(gains.speed_kp, gains.speed_ki, anti_windup=gains.speed_anti_windup),
            d=PiState(gains.d_kp, gains.d_ki),
            q=PiState(gains.q_kp, gains.q_ki),
        )


@dataclass(frozen=True)
class VectorCommand:
    v_d: float
    v_q: float
    i_q_ref: float
    saturated: bool


def vector_control_step(
    gains: VectorGains,
    state: VectorState,
    omega_ref: float,
    omega: float,
    i_d: float,
    i_q: float,
    omega_e: float,
    params: MachineParams,
    v_dc: float,
    dt: float,
) -> tuple[VectorCommand, VectorState]:
    """Speed PI -> i_q reference; d/q current PIs with decoupling feedforward.

    The voltage vector is limited to the circle inscribed in the modulation
    hexagon, radius ``v_dc / sqrt(3)``.
    """
    iq_lo = -gains.i_max
    iq_hi = min(gains.iq_motoring_max, gains.i_max)
    if iq_lo == iq_hi:
        i_q_ref, speed = 0.0, state.speed
    else:
        i_q_ref, speed = pi_step(state.speed, omega_ref - omega, dt, limits=(iq_lo, iq_hi))

    v_lim = max(v_dc, 0.0) / SQRT3
    ff_d = -omega_e * params.q_inductance_H * i_q
    ff_q = omega_e * params.d_inductance_H * i_d + omega_e * params.magnet_flux_Wb
    lim = (-v_lim, v_lim) if v_lim > 0 else (-1e-12, 1e-12)
    u_d, d_state = pi_step(state.d, 0.0 - i_d, dt, limits=lim)
    u_q, q_state = pi_step(state.q, i_q_ref - i_q, dt, limits=lim)
    v_d, v_q = ff_d + u_d, ff_q + u_q
    mag = math.hypot(v_d, v_q)
    saturated = mag > v_lim
    if saturated:
        scale = v_lim / mag if mag > 0 else 0.0
        v_d, v_q = v_d * scale, v_q * scale
        d_state, q_state = state.d, state.q
    return VectorCommand(v_d, v_q, i_q_ref, saturated), VectorState(speed, d_state, q_state)


# -- rectifier -------------------------------------------------------------------


def duty_from_voltage(v_d: float, v_q: float, v_dc: float) -> tuple[float, float, bool]:
    """Normalised dq duty (``v = duty * v_dc / 2``) clamped to the linear region."""
    if v_dc <= 0:
        return 0.0, 0.0, True
    dd, dq = 2.0 * v_d / v_dc, 2.0 * v_q / v_dc
    mag = math.hypot(dd, dq)
    if mag > DUTY_LIMIT * (1.0 + 1e-12):
        s = DUTY_LIMIT / mag
        return dd * s, dq * s, True
    return dd, dq, False


def carrier(phase: float) -> float:
    """Symmetric triangle in [-1, 1]; -1 at phase 0, +1 at phase 0.5."""
    ph = phase % 1.0
    return 4.0 * ph - 1.0 if ph < 0.5 else 3.0 - 4.0 * ph


def abc_duties(duty_d: float, duty_q: float, theta_e: float) -> tuple[float, float, float]:
    """Phase duty references with min-max zero-sequence injection."""
    a, b, c = inverse_park((duty_d, duty_q, 0.0), theta_e)
    zs = -0.5 * (max(a, b, c) + min(a, b, c))
    return a + zs, b + zs, c + zs


def leg_states(duty_abc, carrier_value: float) -> tuple[int, int, int]:
    return tuple(1 if d >= carrier_value else -1 for d in duty_abc)


def phase_voltages(legs, v_dc: float) -> tuple[float, float, float]:
    """Line-to-neutral voltages of a three-leg bridge with ``+-v_dc/2`` leg outputs."""
    half = 0.5 * v_dc
    va, vb, vc = (s * half for s in legs)
    m = (va + vb + vc) / 3.0
    return va - m, vb - m, vc - m


def rectifier_voltage(mode: str, duty_dq, v_dc: float, theta_e: float = 0.0, carrier_phase: float = 0.0):
    """Applied stator voltages ``(v_d, v_q, overflow)`` for the given duty command.

    ``averaged`` returns the switching-cycle mean; ``switching`` returns the
    instantaneous bridge output for the carrier phase (fraction of a period).
    """
    dd, dq = duty_dq
    mag = math.hypot(dd, dq)
    overflow = mag > DUTY_LIMIT * (1.0 + 1e-12)
    if overflow:
        dd, dq = dd * DUTY_LIMIT / mag, dq * DUTY_LIMIT / mag
    if mode == "averaged":
        return 0.5 * dd * v_dc, 0.5 * dq * v_dc, overflow
    if mode == "switching":
        legs = leg_states(abc_duties(dd, dq, theta_e), carrier(carrier_phase))
        vd, vq, _ = park_transform(phase_voltages(legs, v_dc), theta_e)
        return vd, vq, overflow
    raise DomainError(f"unknown rectifier mode {mode!r}")
