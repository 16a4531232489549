from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tidal_mppt.errors import DomainError, InvalidPolarError
from tidal_mppt.hydro import (
    FoilPolar,
    RotorParams,
    RotorState,
    SurrogateCp,
    TableCp,
    TurbineConfig,
    TurbineGeometry,
    available_power,
    cp_of_lambda,
    default_polar,
    instantaneous_torque,
    is_unimodal,
    load_polar,
    mean_torque,
    mech_power,
    mech_torque,
    read_cp_table,
    rotor_acceleration,
    tip_speed_ratio,
    torque_ripple,
    write_cp_table,
)

# frozen from hand arithmetic: 0.5 * 1000 * (2 * 0.455 * 0.824) * 0.55 * 1.5**3
P_MPP_AT_1_5 = 695.94525
OMEGA_OPT_AT_1_5 = 2.18 * 1.5 / 0.455


def test_swept_area_is_diameter_times_height():
    assert TurbineGeometry().swept_area_m2 == pytest.approx(0.74984, abs=1e-12)


def test_surrogate_peak_is_exact():
    model = SurrogateCp()
    assert cp_of_lambda(model, 2.18) == pytest.approx(0.55, abs=1e-12)
    assert model.peak == (2.18, 0.55)


def test_surrogate_zero_at_standstill():
    assert cp_of_lambda(SurrogateCp(), 0.0) == 0.0


@given(st.floats(min_value=0.0, max_value=20.0, allow_nan=False))
def test_surrogate_bounded_by_cp_max(lam):
    cp = cp_of_lambda(SurrogateCp(), lam)
    assert 0.0 <= cp <= 0.55 + 1e-15


@given(st.floats(min_value=0.01, max_value=2.17), st.floats(min_value=0.0, max_value=1.0))
def test_surrogate_rises_then_falls(lam, frac):
    model = SurrogateCp()
    upper = lam + frac * (2.18 - lam)
    assert cp_of_lambda(model, lam) <= cp_of_lambda(model, upper) + 1e-15
    mirror_lo, mirror_hi = 2.18 + (2.18 - upper), 2.18 + (2.18 - lam)
    assert cp_of_lambda(model, mirror_hi) <= cp_of_lambda(model, mirror_lo) + 1e-15


def test_surrogate_cut_in_tail_goes_to_zero():
    model = SurrogateCp(lambda_cut=4.0)
    assert cp_of_lambda(model, 4.0) == 0.0
    assert cp_of_lambda(model, 5.0) == 0.0
    assert 0.0 < cp_of_lambda(model, 3.0)


@pytest.mark.parametrize("kwargs", [dict(cp_max=0.6), dict(cp_max=0.0), dict(lambda_opt=-1.0), dict(lambda_cut=2.0)])
def test_surrogate_rejects_invalid_parameters(kwargs):
    with pytest.raises(DomainError):
        SurrogateCp(**kwargs)


def test_power_anchor_at_rated_flow():
    cfg = TurbineConfig()
    assert mech_power(cfg, 1.5, OMEGA_OPT_AT_1_5) == pytest.approx(P_MPP_AT_1_5, rel=1e-12)
    assert 0.55 * available_power(cfg, 1.5) == pytest.approx(P_MPP_AT_1_5, rel=1e-12)


def test_tip_speed_ratio_definition():
    assert tip_speed_ratio(7.1868, 0.455, 1.5) == pytest.approx(7.1868 * 0.455 / 1.5)
    with pytest.raises(DomainError):
        tip_speed_ratio(1.0, 0.455, 0.0)


@given(st.floats(min_value=0.5, max_value=3.0), st.floats(min_value=0.5, max_value=20.0))
def test_mean_torque_times_speed_is_power(u, omega):
    cfg = TurbineConfig()
    assert mean_torque(cfg, u, omega) * omega == pytest.approx(mech_power(cfg, u, omega), rel=1e-12)


def test_standstill_torque_ramp_is_continuous():
    cfg = TurbineConfig()
    assert mean_torque(cfg, 1.5, 0.0) == cfg.static_torque_Nm
    below = mean_torque(cfg, 1.5, cfg.omega_min * (1 - 1e-9))
    at = mean_torque(cfg, 1.5, cfg.omega_min)
    assert below == pytest.approx(at, rel=1e-6)


def test_mean_torque_rejects_bad_flow():
    with pytest.raises(DomainError):
        mean_torque(TurbineConfig(), 0.0, 5.0)
    with pytest.raises(DomainError):
        mean_torque(TurbineConfig(), 1.5, math.nan)


def test_ripple_ratio_matches_peak_to_mean():
    cfg = TurbineConfig()
    # three blades: extremes at theta = 0 and pi/3
    hi = torque_ripple(cfg, 0.0, 2.18)
    lo = torque_ripple(cfg, math.pi / 3, 2.18)
    assert hi - lo == pytest.approx(cfg.ripple_ratio, abs=1e-12)
    assert hi == pytest.approx(1.3132, abs=1e-12)


def test_ripple_averages_to_one_over_revolution():
    cfg = TurbineConfig()
    theta = np.linspace(0, 2 * math.pi, 3600, endpoint=False)
    mean = np.mean([torque_ripple(cfg, th, 2.0) for th in theta])
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_instantaneous_torque_matches_state_form():
    cfg = TurbineConfig()
    for th, w in [(0.1, 3.0), (2.0, 7.0), (5.5, 0.2)]:
        assert instantaneous_torque(cfg, 1.5, th, w) == mech_torque(cfg, 1.5, RotorState(th, w))


def test_rotor_acceleration_balance():
    p = RotorParams()
    assert rotor_acceleration(p, 100.0, 90.0, 4.0) == pytest.approx((100 - 90 - 0.025 * 4) / 1.5)


def test_table_interpolates_and_clamps():
    t = TableCp(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 0.2, 0.4, 0.1]))
    assert cp_of_lambda(t, 1.5) == pytest.approx(0.3)
    assert cp_of_lambda(t, 5.0) == 0.0
    with pytest.raises(DomainError):
        cp_of_lambda(t, -1.0)
    assert t.peak == (2.0, 0.4)


@pytest.mark.parametrize(
    "lam,cp",
    [
        ([0.0, 1.0, 1.0], [0.0, 0.1, 0.2]),
        ([0.0, 1.0, 2.0], [0.0, 0.3, math.nan]),
        ([0.0, 1.0, 2.0, 3.0], [0.0, 0.3, 0.1, 0.3]),
        ([0.0, 1.0], [0.1, 0.2]),
        ([0.0, 1.0], [0.0]),
    ],
)
def test_table_rejects_invalid_data(lam, cp):
    with pytest.raises(DomainError):
        TableCp(np.array(lam), np.array(cp))


def test_unimodality_detector():
    assert is_unimodal([0, 1, 2, 2, 1, 0])
    assert not is_unimodal([0, 2, 1, 2, 0])


def test_cp_table_round_trip(tmp_path):
    theta = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    rip = np.ones((3, 8)) + 0.1 * np.cos(3 * theta)
    t = TableCp(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.3, 0.2]), theta, rip)
    write_cp_table(t, tmp_path / "cp.csv", tmp_path / "rip.csv")
    back = read_cp_table(tmp_path / "cp.csv", tmp_path / "rip.csv")
    np.testing.assert_array_equal(back.lambda_grid, t.lambda_grid)
    np.testing.assert_array_equal(back.cp_values, t.cp_values)
    np.testing.assert_allclose(back.theta_grid_rad, theta, rtol=1e-14)
    np.testing.assert_array_equal(back.ripple, rip)


def test_default_polar_spans_full_circle():
    polar = default_polar()
    assert polar.alpha_grid_rad[0] <= -math.pi + 1e-9
    assert polar.alpha_grid_rad[-1] >= math.pi - 1e-9
    assert np.all(polar.cd_values >= 0)


def test_polar_file_must_be_monotone(tmp_path):
    path = tmp_path / "bad.dat"
    path.write_text("# alpha cl cd\n-180 0 0.1\n10 1.0 0.02\n5 0.5 0.01\n180 0 0.1\n")
    with pytest.raises(InvalidPolarError):
        load_polar(path)


def test_polar_rejects_negative_drag():
    a = np.linspace(-math.pi, math.pi, 5)
    with pytest.raises(InvalidPolarError):
        FoilPolar(a, np.zeros(5), np.array([0.1, 0.1, -0.01, 0.1, 0.1]))


def test_polar_lookup_outside_grid_is_an_error():
    a = np.linspace(-math.pi, math.pi, 5)
    polar = FoilPolar(a, np.zeros(5), np.full(5, 0.1))
    with pytest.raises(InvalidPolarError):
        polar.coefficients(4.0)
