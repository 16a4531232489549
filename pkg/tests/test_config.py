from __future__ import annotations

import pytest

from tidal_mppt.config import apply_override, default_config_text, load_experiment, parse_toml, parse_value
from tidal_mppt.controllers import AnnFuzzy, PsoOnline, Tsr
from tidal_mppt.errors import ConfigError
from tidal_mppt.hydro import TableCp
from tidal_mppt.mlp import init_network, save_network
from tidal_mppt.sim import StepFlow


def _write(tmp_path, text, name="s.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_bundled_scenario_has_four_labelled_controllers():
    exp = load_experiment()
    labels = [e.table["label"] for e in exp.entries]
    assert labels == ["MPPT TSR", "MPPT ANN-Fuzzy", "MPPT PSO", "MPPT ANN-PSO"]
    assert exp.scenario.duration_s == 2.5 and exp.scenario.machine.pole_pairs == 16
    assert exp.rated_power_W == pytest.approx(695.94525, rel=1e-9)
    assert "[[controllers]]" in default_config_text()


def test_empty_document_uses_defaults(tmp_path):
    exp = load_experiment(_write(tmp_path, ""))
    assert exp.entries == () and exp.scenario.controller is None


def test_unknown_key_names_its_section(tmp_path):
    with pytest.raises(ConfigError, match="turbine.*radius"):
        load_experiment(_write(tmp_path, "[turbine]\nradius = 0.5\n"))


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match="gearbox"):
        load_experiment(_write(tmp_path, "[gearbox]\nratio = 2\n"))


@pytest.mark.parametrize("text", ["[sim]\nduration_s = \"long\"\n", "[drive]\nspeed_anti_windup = 1\n",
                                  "[machine]\npole_pairs = 16.5\n", "[sim]\nduration_s = nan\n"])
def test_wrong_types_are_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, text))


def test_syntax_error_reports_location(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        load_experiment(_write(tmp_path, "[sim\nduration_s = 1\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "absent.toml")


def test_controller_and_controllers_are_exclusive(tmp_path):
    text = "[controller]\nkind = \"tsr\"\n[[controllers]]\nkind = \"tsr\"\n"
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, text))


def test_unknown_controller_kind(tmp_path):
    with pytest.raises(ConfigError, match="kind"):
        load_experiment(_write(tmp_path, "[controller]\nkind = \"mpc\"\n"))


def test_physical_validation_surfaces_as_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "[turbine]\ninertia_kgm2 = -1.0\n"))
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "[sim]\ncontrol_period_s = 0.00005\n"))


def test_parse_value_literals():
    assert parse_value("1.5") == 1.5 and parse_value("3") == 3 and parse_value("true") is True
    assert parse_value("[1, 2]") == [1, 2] and parse_value("switching") == "switching"


def test_overrides_edit_nested_tables_and_arrays():
    raw = parse_toml("[[controllers]]\nkind = \"tsr\"\n")
    apply_override(raw, "sim.duration_s=1.0")
    apply_override(raw, "controllers.0.label=fast")
    assert raw["sim"]["duration_s"] == 1.0 and raw["controllers"][0]["label"] == "fast"
    for bad in ("sim.duration_s", "nowhere.x=1", "controllers.5.kind=tsr", "controllers.0=1"):
        with pytest.raises(ConfigError):
            apply_override(raw, bad)


def test_override_reaches_the_scenario():
    exp = load_experiment(overrides=["sim.duration_s=1.0", "flow.kind=\"step\"", "flow.t_step=0.5",
                                     "flow.before=1.5", "flow.after=2.0"])
    assert exp.scenario.duration_s == 1.0
    assert exp.scenario.flow == StepFlow(0.5, 1.5, 2.0)


def test_select_then_override_kind_drops_stale_label():
    exp = load_experiment(select=2, overrides=["controller.kind=\"tsr\""])
    spec = exp.controller(exp.entries[0])
    assert isinstance(spec.variant, Tsr) and spec.label == "tsr"
    # the selected entry keeps its own drive tuning
    assert spec.drive.speed_kp == 0.2


def test_select_keeps_label_without_kind_change():
    exp = load_experiment(select=2)
    spec = exp.controller(exp.entries[0])
    assert isinstance(spec.variant, PsoOnline) and spec.label == "MPPT PSO"
    with pytest.raises(ConfigError):
        load_experiment(select=9)


def test_seed_reaches_every_generator():
    exp = load_experiment(seed=42)
    assert exp.scenario.seed == 42 and exp.ann.train.seed == 42
    assert all(e.table["seed"] == 42 for e in exp.entries)
    pso = exp.controller(exp.entries[2])
    assert pso.variant.swarm_config.seed == 42


def test_network_path_is_relative_to_the_config(tmp_path):
    net = init_network(seed=3)
    (tmp_path / "nets").mkdir()
    save_network(net, tmp_path / "nets" / "n.txt")
    text = "[controller]\nkind = \"ann_fuzzy\"\nnetwork = \"nets/n.txt\"\n"
    exp = load_experiment(_write(tmp_path, text))
    spec = exp.controller(exp.entries[0])
    assert isinstance(spec.variant, AnnFuzzy)
    assert [w.tolist() for w in spec.variant.network.weights] == [w.tolist() for w in net.weights]


def test_missing_network_file_is_a_config_error(tmp_path):
    exp = load_experiment(_write(tmp_path, "[controller]\nkind = \"ann_pso\"\nnetwork = \"none.txt\"\n"))
    with pytest.raises(ConfigError, match="none.txt"):
        exp.controller(exp.entries[0])


def test_cp_table_file(tmp_path):
    (tmp_path / "cp.csv").write_text("lambda,cp\n0,0\n1,0.2\n2,0.45\n3,0.1\n")
    exp = load_experiment(_write(tmp_path, "[turbine]\ncp_model = \"table\"\ncp_table = \"cp.csv\"\n"))
    model = exp.scenario.turbine.cp_model
    assert isinstance(model, TableCp) and model.peak == (2.0, 0.45)
