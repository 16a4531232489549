"""Double multiple stream tube performance model for a straight-bladed rotor.

Azimuth convention: ``theta = 0`` at the top of the rotor with the blade moving
into the flow; ``0 < theta < pi`` is the upstream half, ``pi < theta < 2 pi``
the downstream half.  A tube at lateral position ``r cos(theta)`` is crossed
upstream at ``theta`` and downstream at ``2 pi - theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError
from .hydro import FluidProps, FoilPolar, TableCp, TurbineGeometry


@dataclass(frozen=True)
class InductionSolver:
    relaxation: float = 0.3
    tolerance: float = 1e-5
    max_iter: int = 200
    a_max: float = 0.49  # Glauert momentum theory is only valid for a < 0.5
    # heavily loaded tubes of high-solidity rotors make the damped map nearly
    # neutral (slope ~ 1); a bracketing solve finishes those
    bracket_fallback: bool = True


@dataclass(frozen=True)
class _PlateResult:
    induction: float
    local_speed: float
    blade_torque: float  # N*m on one blade


def _blade_loads(geom, polar, theta, omega_r, v_local):
    """Relative speed squared and tangential/streamwise force coefficients."""
    w_c = omega_r + v_local * math.cos(theta)
    w_n = v_local * math.sin(theta)
    w2 = w_c * w_c + w_n * w_n
    alpha = math.atan2(w_n, w_c) + geom.wedge_angle_rad
    alpha = (alpha + math.pi) % (2.0 * math.pi) - math.pi
    cl, cd = polar.coefficients(alpha)
    sa, ca = math.sin(alpha), math.cos(alpha)
    c_t = cl * sa - cd * ca
    c_n = cl * ca + cd * sa
    c_x = c_n * math.sin(theta) - c_t * math.cos(theta)
    return w2, c_t, c_x


def _bracket_induction(geom, polar, theta, omega_r, v_in, sigma, width, a_max):
    def residual(a):
        w2, _, c_x = _blade_loads(geom, polar, theta, omega_r, v_in * (1.0 - a))
        return 4.0 * a * (1.0 - a) - sigma * w2 * c_x / (v_in * v_in * width)

    lo, hi = residual(0.0), residual(a_max)
    if lo >= 0.0:
        return 0.0
    if hi <= 0.0:
        return a_max
    return brentq(residual, 0.0, a_max, xtol=1e-12)


def _solve_plate(geom, polar, fluid, theta, omega_r, v_in, lam, solver) -> _PlateResult:
    sigma = geom.blade_count * geom.chord_m / (2.0 * math.pi * geom.radius_m)
    width = abs(math.sin(theta))
    a = 0.0
    for _ in range(solver.max_iter):
        v_local = v_in * (1.0 - a)
        w2, c_t, c_x = _blade_loads(geom, polar, theta, omega_r, v_local)
        thrust = sigma * w2 * c_x / (v_in * v_in * width)
        # 4a(1-a) = thrust rearranged as a = thrust / (4(1-a)); contractive
        # even near thrust ~ 1 where the closed-form root is singular
        target = min(max(thrust / (4.0 * (1.0 - a)), 0.0), solver.a_max)
        step = solver.relaxation * (target - a)
        a += step
        if abs(step) < solver.tolerance:
            break
    else:
        if not solver.bracket_fallback:
            raise ConvergenceError(
                f"induction iteration did not converge (lambda={lam:.4f}, theta={math.degrees(theta):.2f} deg)",
                lam=lam,
                theta=theta,
            )
        a = _bracket_induction(geom, polar, theta, omega_r, v_in, sigma, width, solver.a_max)
    v_local = v_in * (1.0 - a)
    w2, c_t, _ = _blade_loads(geom, polar, theta, omega_r, v_local)
    torque = 0.5 * fluid.density_kg_per_m3 * w2 * geom.chord_m * geom.height_m * geom.radius_m * c_t
    return _PlateResult(a, v_local, torque)


def dmst_point(geom, polar, fluid, flow_speed, lam, tube_count, solver=InductionSolver()):
    """Cp and per-blade torque samples for one tip-speed ratio.

    Returns ``(cp, theta_grid, blade_torque)`` with the azimuth grid sorted on
    ``[0, 2 pi)``.
    """
    n = tube_count
    dtheta = math.pi / n
    omega_r = lam * flow_speed
    theta_up = [(i + 0.5) * dtheta for i in range(n)]
    torque_up, torque_dn = [], []
    for th in theta_up:
        up = _solve_plate(geom, polar, fluid, th, omega_r, flow_speed, lam, solver)
        wake = flow_speed * (1.0 - 2.0 * up.induction)
        th_dn = 2.0 * math.pi - th
        if wake <= 1e-9:
            torque_dn.append(0.0)
        else:
            dn = _solve_plate(geom, polar, fluid, th_dn, omega_r, wake, lam, solver)
            torque_dn.append(dn.blade_torque)
        torque_up.append(up.blade_torque)
    theta = np.array(theta_up + [2.0 * math.pi - t for t in reversed(theta_up)])
    blade_torque = np.array(torque_up + list(reversed(torque_dn)))
    mean_rotor_torque = geom.blade_count * blade_torque.mean()
    omega = omega_r / geom.radius_m
    p_avail = 0.5 * fluid.density_kg_per_m3 * geom.swept_area_m2 * flow_speed**3
    cp = mean_rotor_torque * omega / p_avail
    return cp, theta, blade_torque


def rotor_torque_profile(theta: np.ndarray, blade_torque: np.ndarray, blade_count: int) -> np.ndarray:
    """Sum of equally spaced blades, sampled at each grid azimuth of blade one."""
    period = 2.0 * math.pi
    total = np.zeros_like(blade_torque)
    for b in range(blade_count):
        shifted = (theta + b * period / blade_count) % period
        total += np.interp(shifted, theta, blade_torque, period=period)
    return total


def build_dmst_table(
    geom: TurbineGeometry,
    polar: FoilPolar,
    fluid: FluidProps,
    flow_speed: float,
    lambda_grid,
    tube_count: int = 36,
    solver: InductionSolver = InductionSolver(),
) -> TableCp:
    if not flow_speed > 0:
        raise DomainError("flow speed must be positive")
    if tube_count < 8 or tube_count % 2:
        raise DomainError("tube_count must be even and >= 8")
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.ndim != 1 or lam.size < 2 or lam[0] <= 0 or np.any(np.diff(lam) <= 0):
        raise DomainError("lambda_grid must be strictly increasing within (0, lambda_max]")

    cps, ripples = [], []
    theta = None
    for value in lam:
        cp, theta, blade = dmst_point(geom, polar, fluid, flow_speed, float(value), tube_count, solver)
        total = rotor_torque_profile(theta, blade, geom.blade_count)
        mean = total.mean()
        if cp <= 0.0 or mean <= 0.0:
            cps.append(0.0)
            ripples.append(np.ones_like(total))
        else:
            cps.append(cp)
            ripples.append(total / mean)
    lam_full = np.concatenate(([0.0], lam))
    cp_full = np.concatenate(([0.0], cps))
    ripple = np.vstack([np.ones_like(theta)] + ripples)
    return TableCp(lam_full, cp_full, theta, ripple)
