from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tidal_mppt.controllers import ControllerSpec, Tsr
from tidal_mppt.errors import ConfigError, SimulationFault
from tidal_mppt.hydro import FluidProps, RotorParams, TurbineConfig
from tidal_mppt.sim import (
    ConstantFlow,
    InitialConditions,
    RampFlow,
    ScenarioConfig,
    StepFlow,
    TableFlow,
    flow_at,
    max_flow,
    read_csv,
    run_scenario,
)

times = st.floats(min_value=-10.0, max_value=100.0, allow_nan=False)


@given(times)
def test_ramp_stays_between_endpoints(t):
    ramp = RampFlow(1.0, 3.0, 1.0, 2.0)
    assert 1.0 <= flow_at(ramp, t) <= 2.0


@given(times, times)
def test_increasing_ramp_is_monotone(a, b):
    ramp = RampFlow(1.0, 3.0, 1.0, 2.0)
    lo, hi = sorted((a, b))
    assert flow_at(ramp, lo) <= flow_at(ramp, hi)


@given(times)
def test_table_flow_is_bounded_by_its_samples(t):
    table = TableFlow((0.0, 1.0, 2.0), (1.2, 2.0, 1.5))
    assert 1.2 <= flow_at(table, t) <= max_flow(table) == 2.0


def test_step_flow_switches_at_step_time():
    s = StepFlow(1.0, 1.5, 2.0)
    assert flow_at(s, 0.999) == 1.5 and flow_at(s, 1.0) == 2.0


@pytest.mark.parametrize(
    "make",
    [
        lambda: ConstantFlow(0.0),
        lambda: StepFlow(1.0, -1.0, 1.0),
        lambda: RampFlow(2.0, 1.0, 1.0, 2.0),
        lambda: TableFlow((0.0, 0.0), (1.0, 1.0)),
        lambda: TableFlow((0.0, 1.0), (1.0, -1.0)),
    ],
)
def test_invalid_flow_profiles(make):
    with pytest.raises(ConfigError):
        make()


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(control_period_s=5e-5),
        dict(current_loop_period_s=1.5e-4),
        dict(duration_s=0.001, control_period_s=0.01),
        dict(rectifier_mode="ideal"),
        dict(record_decimation=0),
        dict(initial=InitialConditions(v_dc_V=0.5)),
    ],
)
def test_invalid_scenarios(kwargs):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kwargs)


def _decay(dt):
    # negligible fluid torque leaves pure friction decay: omega' = -omega
    turbine = TurbineConfig(rotor=RotorParams(1.0, 1.0), fluid=FluidProps(1e-12))
    cfg = ScenarioConfig(turbine=turbine, duration_s=1.0, sim_dt_s=dt, current_loop_period_s=dt,
                         control_period_s=dt, record_decimation=1, initial=InitialConditions(omega_rad_per_s=10.0))
    res = run_scenario(cfg)
    return abs(res["omega"][-1] - 10.0 * math.exp(-1.0))


def test_integrator_is_fourth_order():
    errors = [_decay(dt) for dt in (0.2, 0.1, 0.05)]
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 3.5


def _tsr_scenario(**kwargs):
    return ScenarioConfig(controller=ControllerSpec(Tsr()), **kwargs)


@pytest.fixture(scope="module")
def short_run():
    return run_scenario(_tsr_scenario(duration_s=0.5))


def test_energy_balance_closes(short_run):
    assert short_run.metadata["energy_audit"]["relative_residual"] < 0.01


def test_energy_balance_closes_with_switching_bridge():
    res = run_scenario(_tsr_scenario(duration_s=0.05, rectifier_mode="switching", sim_dt_s=1e-5,
                                     current_loop_period_s=2e-4))
    assert res.metadata["energy_audit"]["relative_residual"] < 0.01


def test_lambda_column_is_tip_speed_ratio(short_run):
    np.testing.assert_allclose(short_run["lambda"], short_run["omega"] * 0.455 / short_run["U"], rtol=1e-12)


def test_runs_are_deterministic(short_run):
    again = run_scenario(_tsr_scenario(duration_s=0.5))
    assert again.to_csv() == short_run.to_csv()


def test_csv_round_trip(short_run, tmp_path):
    short_run.to_csv(tmp_path / "ts.csv")
    back = read_csv(tmp_path / "ts.csv")
    assert back.metadata["config_hash"] == short_run.metadata["config_hash"]
    for name in ("t", "omega", "v_dc", "v_a"):
        np.testing.assert_allclose(back[name], short_run[name], rtol=1e-9, atol=1e-12)


def test_config_hash_tracks_parameters(short_run):
    other = run_scenario(_tsr_scenario(duration_s=0.5, seed=1))
    assert other.metadata["config_hash"] != short_run.metadata["config_hash"]


def test_overspeed_aborts_with_state():
    with pytest.raises(SimulationFault) as info:
        run_scenario(ScenarioConfig(duration_s=5.0, omega_abort=5.0))
    assert info.value.state["omega"] > 5.0 and info.value.time_s < 5.0


def test_controller_output_is_held_between_control_ticks():
    res = run_scenario(_tsr_scenario(duration_s=0.05, flow=StepFlow(0.015, 1.5, 2.0), record_decimation=1))
    t, ref = res["t"], res["omega_ref"]
    old, new = 2.18 * 1.5 / 0.455, 2.18 * 2.0 / 0.455
    assert np.all(ref[t < 0.02 - 1e-9] == pytest.approx(old))
    assert np.all(ref[(t >= 0.02 - 1e-9) & (t < 0.05 - 1e-9)] == pytest.approx(new))
