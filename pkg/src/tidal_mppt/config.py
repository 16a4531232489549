"""TOML scenario files: schema validation, dotted overrides and object construction.

Controller entries are validated eagerly but built lazily, because the ANN
variants may need a surrogate network trained on the configured turbine.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli

from .controllers import AnnFuzzy, AnnPso, ControllerSpec, PsoOnline, Tsr
from .dmst import build_dmst_table
from .errors import ConfigError, TidalError
from .fuzzy import LABELS, FuzzySystem, Triangle
from .hydro import (
    FluidProps,
    RotorParams,
    SurrogateCp,
    TurbineConfig,
    TurbineGeometry,
    default_polar,
    load_polar,
    read_cp_table,
)
from .metrics import AnalysisWindow, MetricWindows
from .mlp import MlpNetwork, TrainConfig, init_network, load_network
from .pmsg import DcLinkParams, MachineParams, VectorGains
from .pso import PsoConfig
from .sim import ConstantFlow, InitialConditions, RampFlow, ScenarioConfig, StepFlow, TableFlow
from .surrogate import AnnSettings, rated_power, train_surrogate

_NUM = (int, float)

SCHEMA: dict[str, dict[str, tuple]] = {
    "turbine": {
        "radius_m": _NUM, "height_m": _NUM, "chord_m": _NUM, "wedge_angle_rad": _NUM, "blade_count": (int,),
        "inertia_kgm2": _NUM, "friction_Nms_per_rad": _NUM, "density_kg_per_m3": _NUM,
        "ripple_ratio": _NUM, "omega_min": _NUM, "static_torque_Nm": _NUM, "rated_flow_m_per_s": _NUM,
        "cp_model": (str,), "cp_max": _NUM, "lambda_opt": _NUM, "lambda_cut": _NUM,
        "cp_table": (str,), "ripple_table": (str,), "polar": (str,),
        "dmst_flow_m_per_s": _NUM, "dmst_tube_count": (int,), "dmst_lambda_max": _NUM, "dmst_lambda_step": _NUM,
    },
    "machine": {
        "stator_resistance_ohm": _NUM, "d_inductance_H": _NUM, "q_inductance_H": _NUM,
        "magnet_flux_Wb": _NUM, "pole_pairs": (int,),
    },
    "dclink": {"capacitance_F": _NUM, "load_resistance_ohm": _NUM, "v_floor_V": _NUM, "converter_efficiency": _NUM},
    "drive": {
        "speed_kp": _NUM, "speed_ki": _NUM, "i_max": _NUM, "iq_motoring_max": _NUM, "speed_anti_windup": (bool,),
        "current_tau_s": _NUM, "d_kp": _NUM, "d_ki": _NUM, "q_kp": _NUM, "q_ki": _NUM,
    },
    "controller": {
        "kind": (str,), "label": (str,), "omega_lo": _NUM, "omega_hi": _NUM, "drive": (dict,),
        # tsr
        "lambda_opt": _NUM,
        # ann variants
        "network": (str,),
        # ann_fuzzy
        "rated_power_W": _NUM, "step_limit": _NUM, "output_gain": _NUM, "dp_fraction": _NUM,
        "domega_fraction": _NUM, "rules": (list,), "membership_peaks": (list,),
        # pso and ann_pso
        "particles": (int,), "iterations": (int,), "inertia": _NUM, "cognitive": _NUM, "social": _NUM,
        "seed": (int,), "dwell_s": _NUM, "restart_threshold": _NUM, "hold_radius_fraction": _NUM, "period_s": _NUM,
    },
    "flow": {"kind": (str,), "speed": _NUM, "t_step": _NUM, "before": _NUM, "after": _NUM,
             "t0": _NUM, "t1": _NUM, "u0": _NUM, "u1": _NUM, "times": (list,), "speeds": (list,)},
    "sim": {
        "duration_s": _NUM, "sim_dt_s": _NUM, "control_period_s": _NUM, "current_loop_period_s": _NUM,
        "rectifier_mode": (str,), "switching_frequency_hz": _NUM, "record_decimation": (int,), "seed": (int,),
        "omega_abort": _NUM, "initial_theta_rad": _NUM, "initial_omega_rad_per_s": _NUM, "initial_i_d_A": _NUM,
        "initial_i_q_A": _NUM, "initial_v_dc_V": _NUM,
    },
    "metrics": {
        "extrema_t_start_s": _NUM, "regulation_t_start_s": _NUM, "efficiency_t_start_s": _NUM,
        "harmonics_t_start_s": _NUM, "t_end_s": _NUM, "response_band": _NUM,
    },
    "ann": {
        "hidden": (list,), "flow_min": _NUM, "flow_max": _NUM, "omega_min": _NUM, "omega_max": _NUM,
        "grid_points": (int,), "noise_fraction": _NUM, "learning_rate": _NUM, "epochs": (int,),
        "batch_size": (int,), "seed": (int,), "lr_decay": _NUM,
    },
}
TOP_LEVEL = set(SCHEMA) | {"controllers"}
CONTROLLER_KINDS = ("tsr", "ann_fuzzy", "pso", "ann_pso")


# -- raw document handling ---------------------------------------------------------


def parse_toml(text: str, source: str = "<string>") -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_value(text: str) -> Any:
    """A TOML literal (number, bool, array, quoted string) or else the bare text."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``section.key=value`` in place; numeric segments index arrays."""
    key, sep, value = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    parts = key.split(".")
    node: Any = raw
    for i, part in enumerate(parts[:-1]):
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise ConfigError(f"override {key!r}: no array element {part!r}")
            node = node[int(part)]
        else:
            if i == 0 and part not in TOP_LEVEL:
                raise ConfigError(f"override {key!r}: unknown section {part!r}")
            node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"override {key!r}: {part!r} is not a table")
    if isinstance(node, list):
        raise ConfigError(f"override {key!r} must name a key inside an array element")
    node[parts[-1]] = parse_value(value.strip())


def _check_keys(section: str, table: Any, allowed: dict) -> None:
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    for key, value in table.items():
        if key not in allowed:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        types = allowed[key]
        ok = isinstance(value, types) and not (bool in types) ^ isinstance(value, bool)
        if not ok:
            names = "/".join(t.__name__ for t in types)
            raise ConfigError(f"[{section}] {key} = {value!r} must be {names}")
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"[{section}] {key} must be finite")


def validate_document(raw: dict) -> None:
    for section, table in raw.items():
        if section not in TOP_LEVEL:
            raise ConfigError(f"unknown section [{section}]")
        if section == "controllers":
            if not isinstance(table, list) or not all(isinstance(e, dict) for e in table):
                raise ConfigError("[[controllers]] must be an array of tables")
            for i, entry in enumerate(table):
                _check_controller_keys(f"controllers.{i}", entry)
        elif section == "controller":
            _check_controller_keys("controller", table)
        else:
            _check_keys(section, table, SCHEMA[section])
    if "controller" in raw and "controllers" in raw:
        raise ConfigError("use either [controller] or [[controllers]], not both")


def _check_controller_keys(name: str, entry: dict) -> None:
    _check_keys(name, entry, SCHEMA["controller"])
    if "drive" in entry:
        _check_keys(f"{name}.drive", entry["drive"], SCHEMA["drive"])
    kind = entry.get("kind")
    if kind not in CONTROLLER_KINDS:
        raise ConfigError(f"[{name}] kind must be one of {', '.join(CONTROLLER_KINDS)} (got {kind!r})")


# -- object construction -----------------------------------------------------------


def _build(section: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (TidalError, ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _pick(table: dict, *keys) -> dict:
    return {k: table[k] for k in keys if k in table}


def _resolve_path(base: Optional[Path], value: str) -> Path:
    path = Path(value)
    if not path.is_absolute() and base is not None:
        path = base / path
    return path


def _turbine(t: dict, base: Optional[Path]) -> TurbineConfig:
    geometry = _build("turbine", TurbineGeometry,
                      **_pick(t, "radius_m", "height_m", "chord_m", "wedge_angle_rad", "blade_count"))
    rotor = _build("turbine", RotorParams, **_pick(t, "inertia_kgm2", "friction_Nms_per_rad"))
    fluid = _build("turbine", FluidProps, **_pick(t, "density_kg_per_m3"))
    kind = t.get("cp_model", "surrogate")
    if kind == "surrogate":
        cp = _build("turbine", SurrogateCp, **_pick(t, "cp_max", "lambda_opt", "lambda_cut"))
    elif kind == "table":
        if "cp_table" not in t:
            raise ConfigError("[turbine] cp_model = 'table' needs cp_table")
        ripple = _resolve_path(base, t["ripple_table"]) if "ripple_table" in t else None
        try:
            cp = read_cp_table(_resolve_path(base, t["cp_table"]), ripple)
        except (OSError, TidalError, ValueError) as exc:
            raise ConfigError(f"[turbine] cp_table: {exc}") from exc
    elif kind == "dmst":
        try:
            polar = load_polar(_resolve_path(base, t["polar"])) if "polar" in t else default_polar()
        except (OSError, TidalError, ValueError) as exc:
            raise ConfigError(f"[turbine] polar: {exc}") from exc
        step = float(t.get("dmst_lambda_step", 0.1))
        top = float(t.get("dmst_lambda_max", 4.0))
        if not (step > 0 and top > step):
            raise ConfigError("[turbine] DMST lambda grid needs 0 < dmst_lambda_step < dmst_lambda_max")
        grid = np.round(np.arange(step, top + 0.5 * step, step), 10)
        cp = _build("turbine", build_dmst_table, geom=geometry, polar=polar, fluid=fluid,
                    flow_speed=float(t.get("dmst_flow_m_per_s", 1.5)), lambda_grid=grid,
                    tube_count=int(t.get("dmst_tube_count", 36)))
    else:
        raise ConfigError(f"[turbine] cp_model must be surrogate, table or dmst (got {kind!r})")
    return _build("turbine", TurbineConfig, geometry=geometry, rotor=rotor, fluid=fluid, cp_model=cp,
                  **_pick(t, "ripple_ratio", "omega_min", "static_torque_Nm"))


def _drive(section: str, table: dict, machine: MachineParams) -> VectorGains:
    speed = _pick(table, "speed_kp", "speed_ki", "i_max", "iq_motoring_max", "speed_anti_windup")
    gains = _build(section, VectorGains.for_machine, params=machine,
                   tau_current_s=float(table.get("current_tau_s", 1e-3)), **speed)
    explicit = _pick(table, "d_kp", "d_ki", "q_kp", "q_ki")
    return _build(section, replace, obj=gains, **explicit) if explicit else gains


def _flow(f: dict):
    kind = f.get("kind", "constant")
    if kind == "constant":
        return _build("flow", ConstantFlow, **_pick(f, "speed"))
    if kind == "step":
        return _build("flow", StepFlow, **_pick(f, "t_step", "before", "after"))
    if kind == "ramp":
        return _build("flow", RampFlow, **_pick(f, "t0", "t1", "u0", "u1"))
    if kind == "table":
        return _build("flow", TableFlow, times=tuple(f.get("times", ())), speeds=tuple(f.get("speeds", ())))
    raise ConfigError(f"[flow] kind must be constant, step, ramp or table (got {kind!r})")


def _windows(m: dict) -> MetricWindows:
    end = m.get("t_end_s")

    def win(key, default):
        return _build("metrics", AnalysisWindow, t_start_s=float(m.get(key, default)), t_end_s=end)

    band = float(m.get("response_band", 0.05))
    if not 0 < band < 1:
        raise ConfigError("[metrics] response_band must lie in (0, 1)")
    return MetricWindows(win("extrema_t_start_s", 1.0), win("regulation_t_start_s", 0.25),
                         win("efficiency_t_start_s", 0.25), win("harmonics_t_start_s", 1.0), band)


def _ann(a: dict, rated_flow: float, seed: int) -> AnnSettings:
    train = _build("ann", TrainConfig, seed=int(a.get("seed", seed)),
                   **_pick(a, "learning_rate", "epochs", "batch_size", "lr_decay"))
    if train.epochs < 0:
        raise ConfigError("[ann] epochs must be >= 0")
    hidden = tuple(a.get("hidden", (16, 16)))
    if not all(isinstance(h, int) for h in hidden):
        raise ConfigError("[ann] hidden must be a list of integers")
    return _build("ann", AnnSettings, hidden=hidden, rated_flow_m_per_s=rated_flow, train=train,
                  **_pick(a, "flow_min", "flow_max", "omega_min", "omega_max", "grid_points", "noise_fraction"))


def _fuzzy_system(name: str, entry: dict) -> FuzzySystem:
    kwargs = {}
    if "rules" in entry:
        try:
            kwargs["rules"] = tuple(tuple(LABELS.index(label) for label in row) for row in entry["rules"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}] rules must be rows of labels from {LABELS}") from exc
    if "membership_peaks" in entry:
        peaks = entry["membership_peaks"]
        if len(peaks) != len(LABELS) or not all(isinstance(p, _NUM) for p in peaks):
            raise ConfigError(f"[{name}] membership_peaks needs {len(LABELS)} numbers")
        p = [float(x) for x in peaks]
        if p[0] != -1.0 or p[-1] != 1.0 or any(b <= a for a, b in zip(p, p[1:])):
            raise ConfigError(f"[{name}] membership_peaks must increase from -1 to 1")
        # neighbouring peaks as feet; the end sets mirror their inner foot
        feet = [2 * p[0] - p[1]] + p + [2 * p[-1] - p[-2]]
        sets = tuple(_build(name, Triangle, left=feet[i], peak=feet[i + 1], right=feet[i + 2]) for i in range(len(p)))
        kwargs.update(input1_sets=sets, input2_sets=sets, output_sets=sets)
    return _build(name, FuzzySystem, **kwargs)


# -- experiment --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControllerEntry:
    name: str
    table: dict
    drive: Optional[VectorGains]


@dataclass(frozen=True, eq=False)
class Experiment:
    """A validated configuration: base scenario, controller entries and report windows."""

    scenario: ScenarioConfig
    entries: tuple
    windows: MetricWindows
    ann: AnnSettings
    base_dir: Optional[Path] = None
    raw: dict = field(default_factory=dict)

    @property
    def rated_power_W(self) -> float:
        return rated_power(self.scenario.turbine, self.ann.rated_flow_m_per_s)

    def network_for(self, entry: ControllerEntry) -> MlpNetwork:
        if "network" in entry.table:
            path = _resolve_path(self.base_dir, entry.table["network"])
            try:
                return load_network(path)
            except (OSError, TidalError, ValueError) as exc:
                raise ConfigError(f"[{entry.name}] network {str(path)!r}: {exc}") from exc
        return trained_network(self.scenario.turbine, self.ann)

    def controller(self, entry: ControllerEntry, network: Optional[MlpNetwork] = None) -> ControllerSpec:
        """Build one controller; ANN variants load or train their network unless one is given."""
        if entry.table["kind"] in ("ann_fuzzy", "ann_pso") and network is None:
            network = self.network_for(entry)
        return _controller(entry, self, network)

    def controllers(self) -> list[ControllerSpec]:
        return [self.controller(e) for e in self.entries]

    def scenario_for(self, spec: Optional[ControllerSpec]) -> ScenarioConfig:
        return replace(self.scenario, controller=spec)


_NETWORK_CACHE: dict = {}


def trained_network(turbine: TurbineConfig, settings: AnnSettings) -> MlpNetwork:
    """Train once per (turbine, settings) in this process; training is deterministic."""
    from .sim import _canonical

    key = repr(_canonical((turbine, settings)))
    if key not in _NETWORK_CACHE:
        _NETWORK_CACHE[key] = train_surrogate(turbine, settings).network
    return _NETWORK_CACHE[key]


def _controller(entry: ControllerEntry, exp: Experiment, network: Optional[MlpNetwork]) -> ControllerSpec:
    c, name = entry.table, entry.name
    kind = c["kind"]
    seed = int(c.get("seed", exp.scenario.seed))
    turbine = exp.scenario.turbine
    if kind == "tsr":
        default_opt = turbine.cp_model.peak[0]
        variant = _build(name, Tsr, lambda_opt=float(c.get("lambda_opt", default_opt)),
                         radius_m=turbine.geometry.radius_m)
    elif kind == "ann_fuzzy":
        variant = _build(name, AnnFuzzy, network=network, fuzzy_system=_fuzzy_system(name, c),
                         rated_power_W=float(c.get("rated_power_W", exp.rated_power_W)),
                         **_pick(c, "step_limit", "output_gain", "dp_fraction", "domega_fraction"))
    elif kind == "pso":
        swarm = _build(name, PsoConfig, seed=seed, **_pick(c, "particles", "iterations", "inertia", "cognitive", "social"))
        variant = _build(name, PsoOnline, swarm_config=swarm,
                         **_pick(c, "dwell_s", "restart_threshold", "hold_radius_fraction"))
    else:
        swarm = _build(name, PsoConfig, seed=seed,
                       **{"particles": 20, "iterations": 60, **_pick(c, "particles", "iterations", "inertia",
                                                                     "cognitive", "social")})
        if swarm.iterations < 1:
            raise ConfigError(f"[{name}] iterations must be >= 1")
        variant = _build(name, AnnPso, network=network, swarm_config=swarm, **_pick(c, "period_s"))
    return _build(name, ControllerSpec, variant=variant, drive=entry.drive, label=c.get("label", ""),
                  **_pick(c, "omega_lo", "omega_hi"))


def build_experiment(raw: dict, base_dir: Optional[Path] = None) -> Experiment:
    validate_document(raw)
    t = raw.get("turbine", {})
    turbine = _turbine(t, base_dir)
    machine = _build("machine", MachineParams, **raw.get("machine", {}))
    dclink = _build("dclink", DcLinkParams, **raw.get("dclink", {}))
    drive_table = raw.get("drive", {})
    drive = _drive("drive", drive_table, machine)
    s = raw.get("sim", {})
    initial = _build("sim", InitialConditions, **{
        field_name: s[key] for key, field_name in (
            ("initial_theta_rad", "theta_rad"), ("initial_omega_rad_per_s", "omega_rad_per_s"),
            ("initial_i_d_A", "i_d_A"), ("initial_i_q_A", "i_q_A"), ("initial_v_dc_V", "v_dc_V"),
        ) if key in s
    })
    sim_keys = _pick(s, "duration_s", "sim_dt_s", "control_period_s", "current_loop_period_s", "rectifier_mode",
                     "switching_frequency_hz", "record_decimation", "seed", "omega_abort")
    scenario = _build("sim", ScenarioConfig, turbine=turbine, machine=machine, dclink=dclink, drive=drive,
                      flow=_flow(raw.get("flow", {})), initial=initial, **sim_keys)
    rated_flow = float(t.get("rated_flow_m_per_s", 1.5))
    if not rated_flow > 0:
        raise ConfigError("[turbine] rated_flow_m_per_s must be positive")
    ann = _ann(raw.get("ann", {}), rated_flow, scenario.seed)

    tables = raw["controllers"] if "controllers" in raw else ([raw["controller"]] if "controller" in raw else [])
    names = [f"controllers.{i}" for i in range(len(tables))] if "controllers" in raw else ["controller"]
    entries = []
    for name, table in zip(names, tables):
        drive_c = _drive(f"{name}.drive", {**drive_table, **table["drive"]}, machine) if "drive" in table else None
        entries.append(ControllerEntry(name, table, drive_c))
    exp = Experiment(scenario, tuple(entries), _windows(raw.get("metrics", {})), ann, base_dir, raw)
    # catch parameter errors before any expensive training or simulation
    placeholder = init_network()
    for entry in entries:
        _controller(entry, exp, placeholder)
    return exp


def load_experiment(path=None, overrides=(), seed: Optional[int] = None, select: Optional[int] = None) -> Experiment:
    """Read a TOML file (bundled defaults when ``path`` is None) and apply overrides.

    ``seed`` sets the simulation seed and every derived seed (training and swarms).
    ``select`` keeps only that ``[[controllers]]`` entry, as a ``[controller]``
    table, before overrides apply, so ``controller.kind=...`` edits it.
    """
    if path is None:
        text = default_config_text()
        base = None
        source = "paper.toml"
    else:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {str(path)!r}: {exc}") from exc
        base = path.parent
        source = str(path)
    raw = parse_toml(text, source)
    raw = copy.deepcopy(raw)
    if select is not None and "controllers" in raw:
        entries = raw.pop("controllers")
        if not isinstance(entries, list) or not 0 <= select < len(entries):
            raise ConfigError(f"no controller entry number {select}")
        raw["controller"] = entries[select]
    kind_before = raw.get("controller", {}).get("kind") if isinstance(raw.get("controller"), dict) else None
    for item in overrides:
        apply_override(raw, item)
    selected = raw.get("controller")
    if select is not None and isinstance(selected, dict) and selected.get("kind") != kind_before:
        # a relabelled kind should not keep the replaced controller's name
        if not any(item.split("=", 1)[0].strip() == "controller.label" for item in overrides):
            selected.pop("label", None)
    if seed is not None:
        raw.setdefault("sim", {})["seed"] = int(seed)
        raw.setdefault("ann", {})["seed"] = int(seed)
        for entry in raw.get("controllers", []) + ([raw["controller"]] if "controller" in raw else []):
            if isinstance(entry, dict):
                entry["seed"] = int(seed)
    return build_experiment(raw, base)


def default_config_text() -> str:
    return resources.files("tidal_mppt").joinpath("data/paper.toml").read_text()
