"""Vertical-axis turbine hydrodynamics: Cp(lambda), pulsating torque, rotor dynamics."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Union

import numpy as np

from .errors import DomainError, InvalidPolarError

BETZ_LIMIT = 16.0 / 27.0


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class TurbineGeometry:
    radius_m: float = 0.455
    height_m: float = 0.824
    chord_m: float = 0.156
    wedge_angle_rad: float = 0.0
    blade_count: int = 3

    def __post_init__(self):
        if not (self.radius_m > 0 and self.height_m > 0 and self.chord_m > 0):
            raise DomainError("radius, height and chord must be positive")
        if int(self.blade_count) != self.blade_count or self.blade_count < 2:
            raise DomainError("blade_count must be an integer >= 2")

    @property
    def swept_area_m2(self) -> float:
        # cross-flow rectangle of a straight-bladed rotor
        return 2.0 * self.radius_m * self.height_m

    @property
    def solidity(self) -> float:
        return self.blade_count * self.chord_m / self.radius_m


@dataclass(frozen=True)
class RotorParams:
    inertia_kgm2: float = 1.5
    friction_Nms_per_rad: float = 0.025

    def __post_init__(self):
        if not self.inertia_kgm2 > 0:
            raise DomainError("rotor inertia must be positive")
        if self.friction_Nms_per_rad < 0:
            raise DomainError("friction coefficient must be non-negative")


@dataclass(frozen=True)
class FluidProps:
    density_kg_per_m3: float = 1000.0

    def __post_init__(self):
        if not self.density_kg_per_m3 > 0:
            raise DomainError("fluid density must be positive")


@dataclass(frozen=True)
class SurrogateCp:
    """Smooth bell curve ``cp_max * x**2 * exp(2 * (1 - x))`` with ``x = lambda / lambda_opt``."""

    cp_max: float = 0.55
    lambda_opt: float = 2.18
    lambda_cut: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.cp_max <= BETZ_LIMIT):
            raise DomainError(f"cp_max must lie in (0, {BETZ_LIMIT:.3f}]")
        if not self.lambda_opt > 0:
            raise DomainError("lambda_opt must be positive")
        if self.lambda_cut is not None and not self.lambda_cut > self.lambda_opt:
            raise DomainError("lambda_cut must exceed lambda_opt")

    @property
    def peak(self) -> tuple[float, float]:
        return self.lambda_opt, self.cp_max


@dataclass(frozen=True, eq=False)
class TableCp:
    """Tabulated Cp(lambda), optionally with normalised azimuthal torque profiles.

    ``ripple`` has shape ``(len(lambda_grid), len(theta_grid_rad))`` and each row
    averages to one over a revolution.
    """

    lambda_grid: np.ndarray
    cp_values: np.ndarray
    theta_grid_rad: Optional[np.ndarray] = None
    ripple: Optional[np.ndarray] = None

    def __post_init__(self):
        lam = np.asarray(self.lambda_grid, dtype=float)
        cp = np.asarray(self.cp_values, dtype=float)
        object.__setattr__(self, "lambda_grid", lam)
        object.__setattr__(self, "cp_values", cp)
        if lam.ndim != 1 or lam.size < 2 or lam.shape != cp.shape:
            raise DomainError("lambda_grid and cp_values must be 1-D of equal length >= 2")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(cp))):
            raise DomainError("Cp table contains non-finite values")
        if lam[0] < 0 or np.any(np.diff(lam) <= 0):
            raise DomainError("lambda_grid must be non-negative and strictly increasing")
        if np.any(cp < 0) or np.any(cp > 1.0):
            raise DomainError("Cp table values must lie in [0, 1]")
        if lam[0] == 0 and cp[0] != 0:
            raise DomainError("Cp(0) must be zero")
        if not is_unimodal(cp):
            raise DomainError("Cp table must have a single maximum")
        if self.ripple is not None:
            theta = np.asarray(self.theta_grid_rad, dtype=float)
            rip = np.asarray(self.ripple, dtype=float)
            if rip.shape != (lam.size, theta.size):
                raise DomainError("ripple shape must be (n_lambda, n_theta)")
            if theta.size < 2 or np.any(np.diff(theta) <= 0) or theta[0] < 0 or theta[-1] >= 2 * math.pi:
                raise DomainError("theta grid must be strictly increasing within [0, 2pi)")
            object.__setattr__(self, "theta_grid_rad", theta)
            object.__setattr__(self, "ripple", rip)
        # plain lists make the scalar lookups in the time-stepping loop cheap
        object.__setattr__(self, "_lam_list", lam.tolist())
        object.__setattr__(self, "_cp_list", cp.tolist())

    @property
    def cp_max(self) -> float:
        return float(self.cp_values.max())

    @property
    def peak(self) -> tuple[float, float]:
        k = int(np.argmax(self.cp_values))
        return float(self.lambda_grid[k]), float(self.cp_values[k])

    def ripple_at(self, theta: float, lam: float) -> float:
        if self.ripple is None:
            return 1.0
        lam_list = self._lam_list
        if lam <= lam_list[0]:
            rows = [(0, 1.0)]
        elif lam >= lam_list[-1]:
            rows = [(len(lam_list) - 1, 1.0)]
        else:
            j = bisect.bisect_right(lam_list, lam) - 1
            f = (lam - lam_list[j]) / (lam_list[j + 1] - lam_list[j])
            rows = [(j, 1.0 - f), (j + 1, f)]
        th = self.theta_grid_rad
        period = 2.0 * math.pi
        theta = theta % period
        out = 0.0
        for row, wgt in rows:
            out += wgt * float(np.interp(theta, th, self.ripple[row], period=period))
        return out


CpModel = Union[SurrogateCp, TableCp]


def is_unimodal(values) -> bool:
    """True when values rise (weakly) to one maximum and then fall (weakly)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return True
    d = np.diff(v)
    k = int(np.argmax(v))
    return bool(np.all(d[:k] >= 0) and np.all(d[k:] <= 0))


@dataclass(frozen=True, eq=False)
class FoilPolar:
    alpha_grid_rad: np.ndarray
    cl_values: np.ndarray
    cd_values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha_grid_rad, dtype=float)
        cl = np.asarray(self.cl_values, dtype=float)
        cd = np.asarray(self.cd_values, dtype=float)
        if not (a.ndim == 1 and a.shape == cl.shape == cd.shape and a.size >= 2):
            raise InvalidPolarError("polar columns must be 1-D and of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(cl)) and np.all(np.isfinite(cd))):
            raise InvalidPolarError("polar contains non-finite values")
        if np.any(np.diff(a) <= 0):
            raise InvalidPolarError("polar angle grid must be strictly increasing")
        if a[0] > -math.pi + 1e-9 or a[-1] < math.pi - 1e-9:
            raise InvalidPolarError("polar must span at least [-180, 180] degrees")
        if np.any(cd < 0):
            raise InvalidPolarError("drag coefficients must be non-negative")
        object.__setattr__(self, "alpha_grid_rad", a)
        object.__setattr__(self, "cl_values", cl)
        object.__setattr__(self, "cd_values", cd)

    def coefficients(self, alpha_rad: float) -> tuple[float, float]:
        a = self.alpha_grid_rad
        if not (a[0] <= alpha_rad <= a[-1]):
            raise InvalidPolarError(f"angle of attack {math.degrees(alpha_rad):.3f} deg outside polar grid")
        return (
            float(np.interp(alpha_rad, a, self.cl_values)),
            float(np.interp(alpha_rad, a, self.cd_values)),
        )


def load_polar(path) -> FoilPolar:
    """Read a three-column ``alpha_deg cl cd`` text file; ``#`` starts a comment line."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidPolarError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise InvalidPolarError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise InvalidPolarError(f"{path}: no data rows")
    arr = np.array(rows)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise InvalidPolarError(f"{path}: alpha column must be monotone increasing")
    return FoilPolar(np.radians(arr[:, 0]), arr[:, 1], arr[:, 2])


def default_polar() -> FoilPolar:
    """Bundled symmetric-section polar (NACA 0015-like, Re about 1e5)."""
    ref = resources.files("tidal_mppt") / "data" / "naca0015_re1e5.dat"
    with resources.as_file(ref) as p:
        return load_polar(p)


@dataclass(frozen=True)
class RotorState:
    azimuth_rad: float = 0.0
    omega_rad_per_s: float = 0.0

    def __post_init__(self):
        if not _finite(self.azimuth_rad, self.omega_rad_per_s):
            raise DomainError("rotor state must be finite")
        object.__setattr__(self, "azimuth_rad", self.azimuth_rad % (2.0 * math.pi))


@dataclass(frozen=True)
class TurbineConfig:
    geometry: TurbineGeometry = field(default_factory=TurbineGeometry)
    rotor: RotorParams = field(default_factory=RotorParams)
    fluid: FluidProps = field(default_factory=FluidProps)
    cp_model: CpModel = field(default_factory=SurrogateCp)
    ripple_ratio: float = 0.6264
    omega_min: float = 0.5
    static_torque_Nm: float = 20.0

    def __post_init__(self):
        if not (0 <= self.ripple_ratio < 2):
            raise DomainError("ripple_ratio must lie in [0, 2)")
        if not self.omega_min > 0:
            raise DomainError("omega_min must be positive")


def tip_speed_ratio(omega: float, radius: float, flow_speed: float) -> float:
    if not _finite(omega, radius, flow_speed):
        raise DomainError("non-finite input to tip_speed_ratio")
    if flow_speed <= 0:
        raise DomainError(f"flow speed must be positive, got {flow_speed}")
    return omega * radius / flow_speed


def cp_of_lambda(model: CpModel, lam: float) -> float:
    if not math.isfinite(lam) or lam < 0:
        raise DomainError(f"tip-speed ratio must be finite and >= 0, got {lam}")
    if isinstance(model, SurrogateCp):
        if model.lambda_cut is not None and lam >= model.lambda_cut:
            return 0.0
        x = lam / model.lambda_opt
        return model.cp_max * x * x * math.exp(2.0 * (1.0 - x))
    grid = model._lam_list
    if lam < grid[0] or lam > grid[-1]:
        return 0.0
    j = bisect.bisect_right(grid, lam) - 1
    if j >= len(grid) - 1:
        return model._cp_list[-1]
    cps = model._cp_list
    f = (lam - grid[j]) / (grid[j + 1] - grid[j])
    return cps[j] + f * (cps[j + 1] - cps[j])


def available_power(config: TurbineConfig, flow_speed: float) -> float:
    """Power of the flow through the swept area, before any Cp factor."""
    return 0.5 * config.fluid.density_kg_per_m3 * config.geometry.swept_area_m2 * flow_speed**3


def mech_power(config: TurbineConfig, flow_speed: float, omega: float) -> float:
    lam = tip_speed_ratio(max(omega, 0.0), config.geometry.radius_m, flow_speed)
    return available_power(config, flow_speed) * cp_of_lambda(config.cp_model, lam)


def mean_torque(config: TurbineConfig, flow_speed: float, omega: float) -> float:
    """Ripple-free torque with the standstill ramp below ``omega_min``."""
    if not _finite(flow_speed, omega):
        raise DomainError("non-finite input to mean_torque")
    if flow_speed <= 0:
        raise DomainError(f"flow speed must be positive, got {flow_speed}")
    w_min = config.omega_min
    if omega >= w_min:
        return mech_power(config, flow_speed, omega) / omega
    t_min = mech_power(config, flow_speed, w_min) / w_min
    if omega <= 0:
        return config.static_torque_Nm
    t0 = config.static_torque_Nm
    return t0 + (t_min - t0) * omega / w_min


def torque_ripple(config: TurbineConfig, theta: float, lam: float) -> float:
    model = config.cp_model
    if isinstance(model, TableCp) and model.ripple is not None:
        return model.ripple_at(theta, lam)
    return 1.0 + 0.5 * config.ripple_ratio * math.cos(config.geometry.blade_count * theta)


def mech_torque(config: TurbineConfig, flow_speed: float, state: RotorState) -> float:
    omega = state.omega_rad_per_s
    t_mean = mean_torque(config, flow_speed, omega)
    lam = max(omega, 0.0) * config.geometry.radius_m / flow_speed
    return t_mean * torque_ripple(config, state.azimuth_rad, lam)


def instantaneous_torque(config: TurbineConfig, flow_speed: float, theta: float, omega: float) -> float:
    """Same as :func:`mech_torque` without building a :class:`RotorState` (hot loop)."""
    t_mean = mean_torque(config, flow_speed, omega)
    lam = max(omega, 0.0) * config.geometry.radius_m / flow_speed
    return t_mean * torque_ripple(config, theta, lam)


def rotor_acceleration(params: RotorParams, t_mech: float, t_em: float, omega: float) -> float:
    """One-mass drivetrain; ``t_em`` is the braking torque the generator applies."""
    if not _finite(t_mech, t_em, omega):
        raise DomainError("non-finite input to rotor_acceleration")
    return (t_mech - t_em - params.friction_Nms_per_rad * omega) / params.inertia_kgm2


# -- Cp table CSV exchange ----------------------------------------------------


def write_cp_table(model: TableCp, path, ripple_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "cp"])
        for lam, cp in zip(model.lambda_grid, model.cp_values):
            w.writerow([repr(float(lam)), repr(float(cp))])
    if ripple_path is not None and model.ripple is not None:
        with open(ripple_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "theta_deg", "torque_norm"])
            for i, lam in enumerate(model.lambda_grid):
                for k, th in enumerate(model.theta_grid_rad):
                    w.writerow([repr(float(lam)), repr(math.degrees(th)), repr(float(model.ripple[i, k]))])


def read_cp_table(path, ripple_path=None) -> TableCp:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["lambda", "cp"]:
        raise DomainError(f"{path}: expected header 'lambda,cp'")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    lam, cp = data[:, 0], data[:, 1]
    if ripple_path is None:
        return TableCp(lam, cp)
    with open(ripple_path, newline="") as fh:
        rrows = list(csv.reader(fh))
    if [c.strip() for c in rrows[0]] != ["lambda", "theta_deg", "torque_norm"]:
        raise DomainError(f"{ripple_path}: expected header 'lambda,theta_deg,torque_norm'")
    rdata = np.array([[float(x) for x in r] for r in rrows[1:] if r], dtype=float)
    thetas = np.unique(rdata[:, 1])
    ripple = rdata[:, 2].reshape(lam.size, thetas.size)
    return TableCp(lam, cp, np.radians(thetas), ripple)
