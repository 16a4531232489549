"""Fixed-step closed-loop simulation of turbine, generator, rectifier and MPPT controller."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import __version__
from .controllers import ControllerSpec, Measurements, initial_state, mppt_update
from .errors import ConfigError, SimulationFault
from .hydro import TurbineConfig, instantaneous_torque, tip_speed_ratio
from .pmsg import (
    DcLinkParams,
    MachineParams,
    VectorGains,
    VectorState,
    carrier,
    abc_duties,
    duty_from_voltage,
    inverse_park,
    leg_states,
    phase_voltages,
    vector_control_step,
)

# -- flow profiles ---------------------------------------------------------------


@dataclass(frozen=True)
class ConstantFlow:
    speed: float = 1.5

    def __post_init__(self):
        if not self.speed > 0:
            raise ConfigError("flow speed must be positive")


@dataclass(frozen=True)
class StepFlow:
    t_step: float
    before: float
    after: float

    def __post_init__(self):
        if not (self.before > 0 and self.after > 0):
            raise ConfigError("flow speeds must be positive")


@dataclass(frozen=True)
class RampFlow:
    t0: float
    t1: float
    u0: float
    u1: float

    def __post_init__(self):
        if not (self.u0 > 0 and self.u1 > 0):
            raise ConfigError("flow speeds must be positive")
        if not self.t1 > self.t0:
            raise ConfigError("ramp needs t1 > t0")


@dataclass(frozen=True, eq=False)
class TableFlow:
    times: tuple
    speeds: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        u = np.asarray(self.speeds, dtype=float)
        if t.ndim != 1 or t.size < 1 or t.shape != u.shape:
            raise ConfigError("flow table needs equally long, non-empty time and speed lists")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("flow table times must be strictly increasing")
        if np.any(u <= 0):
            raise ConfigError("flow speeds must be positive")
        object.__setattr__(self, "times", tuple(t.tolist()))
        object.__setattr__(self, "speeds", tuple(u.tolist()))


FlowProfile = Union[ConstantFlow, StepFlow, RampFlow, TableFlow]


def flow_at(profile: FlowProfile, t: float) -> float:
    if isinstance(profile, ConstantFlow):
        return profile.speed
    if isinstance(profile, StepFlow):
        return profile.after if t >= profile.t_step else profile.before
    if isinstance(profile, RampFlow):
        if t <= profile.t0:
            return profile.u0
        if t >= profile.t1:
            return profile.u1
        f = (t - profile.t0) / (profile.t1 - profile.t0)
        return profile.u0 + f * (profile.u1 - profile.u0)
    return float(np.interp(t, profile.times, profile.speeds))


def max_flow(profile: FlowProfile) -> float:
    if isinstance(profile, ConstantFlow):
        return profile.speed
    if isinstance(profile, StepFlow):
        return max(profile.before, profile.after)
    if isinstance(profile, RampFlow):
        return max(profile.u0, profile.u1)
    return max(profile.speeds)


# -- scenario ----------------------------------------------------------------------


@dataclass(frozen=True)
class InitialConditions:
    theta_rad: float = 0.0
    omega_rad_per_s: float = 2.0
    i_d_A: float = 0.0
    i_q_A: float = 0.0
    v_dc_V: float = 50.0


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    turbine: TurbineConfig = field(default_factory=TurbineConfig)
    machine: MachineParams = field(default_factory=MachineParams)
    dclink: DcLinkParams = field(default_factory=DcLinkParams)
    # None runs the rotor alone: converter open, electrical states frozen
    controller: Optional[ControllerSpec] = None
    drive: Optional[VectorGains] = None
    flow: FlowProfile = field(default_factory=ConstantFlow)
    duration_s: float = 2.5
    sim_dt_s: float = 1e-4
    control_period_s: float = 1e-2
    current_loop_period_s: float = 2e-4
    rectifier_mode: str = "averaged"
    switching_frequency_hz: float = 5000.0
    initial: InitialConditions = field(default_factory=InitialConditions)
    record_decimation: int = 10
    seed: int = 0
    omega_abort: float = 100.0

    def __post_init__(self):
        dt = self.sim_dt_s
        if not dt > 0:
            raise ConfigError("sim_dt_s must be positive")
        if not (dt <= self.current_loop_period_s <= self.control_period_s <= self.duration_s):
            raise ConfigError(
                "periods must satisfy sim_dt <= current_loop_period <= control_period <= duration "
                f"(got {dt}, {self.current_loop_period_s}, {self.control_period_s}, {self.duration_s})"
            )
        for name in ("current_loop_period_s", "control_period_s", "duration_s"):
            ratio = getattr(self, name) / dt
            if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
                raise ConfigError(f"{name} must be an integer multiple of sim_dt_s")
        if int(self.record_decimation) != self.record_decimation or self.record_decimation < 1:
            raise ConfigError("record_decimation must be an integer >= 1")
        if self.rectifier_mode not in ("averaged", "switching"):
            raise ConfigError(f"rectifier_mode must be 'averaged' or 'switching', not {self.rectifier_mode!r}")
        if not self.switching_frequency_hz > 0:
            raise ConfigError("switching_frequency_hz must be positive")
        if self.initial.v_dc_V <= self.dclink.v_floor_V:
            raise ConfigError("initial DC voltage must exceed the floor voltage")

    @property
    def gains(self) -> VectorGains:
        if self.controller is not None and self.controller.drive is not None:
            return self.controller.drive
        if self.drive is not None:
            return self.drive
        return VectorGains.for_machine(self.machine)


def _canonical(obj):
    """JSON-like structure with exact float text, for hashing configurations."""
    if dataclasses.is_dataclass(obj):
        return [type(obj).__name__] + [[f.name, _canonical(getattr(obj, f.name))] for f in dataclasses.fields(obj)]
    if isinstance(obj, np.ndarray):
        return [repr(float(v)) for v in obj.ravel()] + [list(obj.shape)]
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, dict):
        return [[k, _canonical(obj[k])] for k in sorted(obj)]
    if isinstance(obj, float):
        return repr(obj)
    if hasattr(obj, "__dict__") and not isinstance(obj, type):
        return [type(obj).__name__, _canonical(vars(obj))]
    return repr(obj)


def config_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(repr(_canonical(config)).encode()).hexdigest()[:16]


# -- result ------------------------------------------------------------------------

COLUMNS = (
    "t", "U", "theta", "omega", "lambda", "T_mec", "T_em", "i_d", "i_q",
    "v_a", "v_b", "v_c", "v_dc", "P_mech", "P_dc", "omega_ref",
)


@dataclass(eq=False)
class SimResult:
    columns: dict
    metadata: dict

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def sample_period_s(self) -> float:
        return self.metadata["sample_period_s"]

    def to_csv(self, path=None) -> str:
        """CSV text with ``#`` metadata comments; also written to ``path`` if given."""
        buf = io.StringIO()
        for key in ("version", "config_hash", "seed", "controller", "sample_period_s"):
            buf.write(f"# {key}: {self.metadata.get(key)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        data = np.column_stack([self.columns[c] for c in COLUMNS])
        for row in data:
            w.writerow([f"{v:.10g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def read_csv(path) -> SimResult:
    meta, rows, header = {}, [], None
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif header is None:
                header = next(csv.reader([line]))
            elif line.strip():
                rows.append([float(x) for x in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    cols = {name: data[:, i] for i, name in enumerate(header)}
    if "sample_period_s" in meta:
        meta["sample_period_s"] = float(meta["sample_period_s"])
    return SimResult(cols, meta)


# -- engine --------------------------------------------------------------------------


def _fault(message, t, y):
    names = ("theta", "omega", "i_d", "i_q", "v_dc")
    return SimulationFault(message, t, {n: float(v) for n, v in zip(names, y[:5])})


def run_scenario(config: ScenarioConfig) -> SimResult:
    """Integrate the closed loop with classical RK4 and zero-order-held control outputs."""
    wall_start = time.perf_counter()
    tc, mp, dc = config.turbine, config.machine, config.dclink
    spec = config.controller
    gains = config.gains
    J, fr = tc.rotor.inertia_kgm2, tc.rotor.friction_Nms_per_rad
    radius = tc.geometry.radius_m
    p = mp.pole_pairs
    rs, ld, lq, phi = mp.stator_resistance_ohm, mp.d_inductance_H, mp.q_inductance_H, mp.magnet_flux_Wb
    cap, r_load, v_floor, eta = dc.capacitance_F, dc.load_resistance_ohm, dc.v_floor_V, dc.converter_efficiency
    k_t = 1.5 * p
    profile = config.flow
    electrical = spec is not None
    switching = config.rectifier_mode == "switching"
    f_sw = config.switching_frequency_hz
    two_pi = 2.0 * math.pi

    dt = config.sim_dt_s
    n_steps = int(round(config.duration_s / dt))
    n_cur = int(round(config.current_loop_period_s / dt))
    n_ctl = int(round(config.control_period_s / dt))
    dec = int(config.record_decimation)
    dt_cur = n_cur * dt

    # held controller outputs
    duty = (0.0, 0.0)

    def applied_voltage(theta, v_dc, t):
        if not electrical:
            return 0.0, 0.0
        if switching:
            th_e = (p * theta) % two_pi
            legs = leg_states(abc_duties(duty[0], duty[1], th_e), carrier(t * f_sw))
            va, vb, vc = phase_voltages(legs, v_dc)
            c, s = math.cos(th_e), math.sin(th_e)
            cb, sb = math.cos(th_e - 2.0943951023931953), math.sin(th_e - 2.0943951023931953)
            cc, sc = math.cos(th_e + 2.0943951023931953), math.sin(th_e + 2.0943951023931953)
            vd = (2.0 / 3.0) * (va * c + vb * cb + vc * cc)
            vq = -(2.0 / 3.0) * (va * s + vb * sb + vc * sc)
            return vd, vq
        return 0.5 * duty[0] * v_dc, 0.5 * duty[1] * v_dc

    def deriv(t, y):
        theta, omega, i_d, i_q, v_dc = y[0], y[1], y[2], y[3], y[4]
        u = flow_at(profile, t)
        t_mec = instantaneous_torque(tc, u, theta, omega)
        if electrical:
            t_em = k_t * (phi * i_q + (ld - lq) * i_d * i_q)
            v_d, v_q = applied_voltage(theta, v_dc, t)
            w_e = p * omega
            did = (v_d - rs * i_d + w_e * lq * i_q) / ld
            diq = (v_q - rs * i_q - w_e * ld * i_d - w_e * phi) / lq
            p_gen = -1.5 * (v_d * i_d + v_q * i_q)
            p_in = p_gen * eta if p_gen >= 0 else p_gen / eta
            if v_dc <= v_floor:
                raise _fault("DC bus fell to its floor voltage", t, y)
            p_load = v_dc * v_dc / r_load
            dv = (p_in / v_dc - v_dc / r_load) / cap
            p_cu = 1.5 * rs * (i_d * i_d + i_q * i_q)
        else:
            t_em = did = diq = dv = p_gen = p_in = p_load = p_cu = 0.0
        domega = (t_mec + t_em - fr * omega) / J
        return (
            omega, domega, did, diq, dv,
            t_mec * omega,  # mechanical input energy
            fr * omega * omega,  # friction loss
            p_cu,
            p_load,
            p_gen - p_in,  # converter loss
        )

    ic = config.initial
    y = [ic.theta_rad % two_pi, ic.omega_rad_per_s, ic.i_d_A, ic.i_q_A, ic.v_dc_V, 0.0, 0.0, 0.0, 0.0, 0.0]
    nvar = len(y)
    if not electrical:
        y[2] = y[3] = 0.0

    ctl_state = initial_state(spec) if electrical else None
    vec_state = VectorState.initial(gains)
    omega_ref = ic.omega_rad_per_s
    v_cmd = (0.0, 0.0)

    n_rec = n_steps // dec + 1
    rec = {c: np.empty(n_rec) for c in COLUMNS}
    ri = 0
    t = 0.0
    for k in range(n_steps + 1):
        t = k * dt
        theta, omega, i_d, i_q, v_dc = y[0], y[1], y[2], y[3], y[4]
        if electrical and k < n_steps:
            if k % n_ctl == 0:
                u_meas = flow_at(profile, t)
                t_mec_now = instantaneous_torque(tc, u_meas, theta, omega)
                meas = Measurements(t, u_meas, omega, v_dc * v_dc / r_load, t_mec_now * omega)
                omega_ref, ctl_state = mppt_update(spec, ctl_state, meas)
            if k % n_cur == 0:
                cmd, vec_state = vector_control_step(
                    gains, vec_state, omega_ref, omega, i_d, i_q, p * omega, mp, v_dc, dt_cur
                )
                v_cmd = (cmd.v_d, cmd.v_q)
                dd, dq, _ = duty_from_voltage(cmd.v_d, cmd.v_q, v_dc)
                duty = (dd, dq)
        if k % dec == 0:
            u = flow_at(profile, t)
            t_mec = instantaneous_torque(tc, u, theta, omega)
            t_em = k_t * (phi * i_q + (ld - lq) * i_d * i_q)
            if electrical:
                vd_a, vq_a = applied_voltage(theta, v_dc, t)
            else:
                vd_a = vq_a = 0.0
            va, vb, vc = inverse_park((vd_a, vq_a, 0.0), (p * theta) % two_pi)
            if switching:
                legs = leg_states(abc_duties(duty[0], duty[1], (p * theta) % two_pi), carrier(t * f_sw))
                va, vb, vc = phase_voltages(legs, v_dc)
            rec["t"][ri] = t
            rec["U"][ri] = u
            rec["theta"][ri] = theta
            rec["omega"][ri] = omega
            rec["lambda"][ri] = tip_speed_ratio(omega, radius, u)
            rec["T_mec"][ri] = t_mec
            rec["T_em"][ri] = t_em
            rec["i_d"][ri] = i_d
            rec["i_q"][ri] = i_q
            rec["v_a"][ri] = va
            rec["v_b"][ri] = vb
            rec["v_c"][ri] = vc
            rec["v_dc"][ri] = v_dc
            rec["P_mech"][ri] = t_mec * omega
            rec["P_dc"][ri] = v_dc * v_dc / r_load
            rec["omega_ref"][ri] = omega_ref if electrical else math.nan
            ri += 1
        if k == n_steps:
            break

        k1 = deriv(t, y)
        y2 = [y[i] + 0.5 * dt * k1[i] for i in range(nvar)]
        k2 = deriv(t + 0.5 * dt, y2)
        y3 = [y[i] + 0.5 * dt * k2[i] for i in range(nvar)]
        k3 = deriv(t + 0.5 * dt, y3)
        y4 = [y[i] + dt * k3[i] for i in range(nvar)]
        k4 = deriv(t + dt, y4)
        y = [y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(nvar)]
        y[0] %= two_pi
        if not all(math.isfinite(v) for v in y[:5]):
            raise _fault("state became non-finite", t + dt, y)
        if abs(y[1]) > config.omega_abort:
            raise _fault(f"rotor speed exceeded {config.omega_abort} rad/s", t + dt, y)
        if electrical and y[4] <= v_floor:
            raise _fault("DC bus fell to its floor voltage", t + dt, y)

    e_mech, e_fric, e_cu, e_load, e_conv = y[5], y[6], y[7], y[8], y[9]
    w0, w1 = ic.omega_rad_per_s, y[1]
    stored = 0.5 * J * (w1 * w1 - w0 * w0)
    if electrical:
        stored += 0.75 * (ld * (y[2] ** 2 - ic.i_d_A**2) + lq * (y[3] ** 2 - ic.i_q_A**2))
        stored += 0.5 * cap * (y[4] ** 2 - ic.v_dc_V**2)
    residual = e_mech - e_load - e_cu - e_fric - e_conv - stored
    audit = {
        "mechanical_in_J": e_mech,
        "load_out_J": e_load,
        "copper_loss_J": e_cu,
        "friction_loss_J": e_fric,
        "converter_loss_J": e_conv,
        "stored_change_J": stored,
        "residual_J": residual,
        "relative_residual": abs(residual) / abs(e_mech) if e_mech else math.inf,
    }
    cp_max = tc.cp_model.peak[1]
    meta = {
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "controller": spec.label if spec is not None else "none",
        "sample_period_s": dt * dec,
        "duration_s": n_steps * dt,
        "pole_pairs": p,
        "mpp_power_coefficient": 0.5 * tc.fluid.density_kg_per_m3 * tc.geometry.swept_area_m2 * cp_max,
        "energy_audit": audit,
        "wall_time_s": time.perf_counter() - wall_start,
        "last_voltage_command": v_cmd,
    }
    return SimResult(rec, meta)
