from __future__ import annotations

import csv

import pytest

from tidal_mppt.cli import main

FAST = ["--set", "sim.duration_s=1.0", "--set", "metrics.extrema_t_start_s=0.3",
        "--set", "metrics.harmonics_t_start_s=0.3"]
SMALL_ANN = ["--set", "ann.grid_points=9", "--set", "ann.epochs=30", "--set", "ann.hidden=[4]"]


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_cp_curve_peak_row(tmp_path):
    assert main(["cp-curve", "--out", str(tmp_path), "--quiet"]) == 0
    rows = _rows(tmp_path / "cp_curve.csv")
    assert rows[0] == ["lambda", "cp"] and len(rows) == 402
    best = max(rows[1:], key=lambda r: float(r[1]))
    assert float(best[0]) == pytest.approx(2.18) and float(best[1]) == pytest.approx(0.55, abs=1e-9)
    assert (tmp_path / "cp_curve.svg").read_text().startswith("<?xml")


@pytest.mark.parametrize("rng", [["2", "1", "0.1"], ["0", "1", "0"], ["0", "0.05", "0.1"]])
def test_cp_curve_rejects_degenerate_ranges(tmp_path, rng):
    out = tmp_path / "o"
    assert main(["cp-curve", "--out", str(out), "--lambda-range", *rng]) == 2
    assert not out.exists()


def test_run_writes_outputs(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), *FAST]) == 0
    for name in ("timeseries.csv", "metrics.txt", "v_abc.svg", "v_dc.svg"):
        assert (tmp_path / name).stat().st_size > 0
    text = (tmp_path / "metrics.txt").read_text()
    assert "MPPT TSR" in text and "energy audit" in text and "unavailable" not in text
    assert "MPPT TSR" in capsys.readouterr().out


def test_run_selects_a_controller(tmp_path):
    assert main(["run", "--out", str(tmp_path), "--controller", "2", "--quiet", *FAST]) == 0
    assert "MPPT PSO" in (tmp_path / "metrics.txt").read_text()


def test_invalid_periods_exit_2_without_files(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--out", str(out), "--set", "sim.control_period_s=0.00005"]) == 2
    assert not out.exists()
    assert "configuration error" in capsys.readouterr().err


def test_simulation_fault_exits_1(tmp_path, capsys):
    code = main(["run", "--out", str(tmp_path / "o"), "--set", "sim.omega_abort=3.0", *FAST])
    assert code == 1
    assert "simulation fault at t =" in capsys.readouterr().err


def test_compare_isolates_a_failing_entry(tmp_path):
    cfg = tmp_path / "two.toml"
    cfg.write_text(
        "[sim]\nduration_s = 2.0\n"
        "[[controllers]]\nkind = \"tsr\"\nlabel = \"normal\"\n"
        "[[controllers]]\nkind = \"tsr\"\nlabel = \"stalled\"\nlambda_opt = 0.01\n"
    )
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path), "--workers", "1", "--quiet"]) == 1
    rows = {r[0]: r for r in _rows(tmp_path / "comparison.csv")[1:]}
    assert rows["normal"][1] == "ok" and rows["stalled"][1] == "failed"
    assert "stalled:" in (tmp_path / "comparison.txt").read_text()


def test_identical_entries_give_identical_rows(tmp_path):
    cfg = tmp_path / "twins.toml"
    entry = "[[controllers]]\nkind = \"tsr\"\nlabel = \"{}\"\n"
    cfg.write_text("[sim]\nduration_s = 2.0\n" + entry.format("a") + entry.format("b"))
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path), "--workers", "2", "--quiet"]) == 0
    a, b = _rows(tmp_path / "comparison.csv")[1:]
    assert a[1:] == b[1:]


def test_compare_needs_two_entries(tmp_path):
    assert main(["compare", "--out", str(tmp_path), "--set", "sim.duration_s=0.3", "--quiet",
                 "--config", str(_single(tmp_path))]) == 2


def _single(tmp_path):
    cfg = tmp_path / "one.toml"
    cfg.write_text("[controller]\nkind = \"tsr\"\n")
    return cfg


def test_train_ann_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train-ann", "--out", str(a), "--quiet", *SMALL_ANN]) == 0
    assert main(["train-ann", "--out", str(b), "--quiet", *SMALL_ANN]) == 0
    assert (a / "network.txt").read_bytes() == (b / "network.txt").read_bytes()
    assert len(_rows(a / "training_loss.csv")) == 31
    assert "held-out RMSE" in (a / "training_summary.txt").read_text()


def test_train_ann_with_zero_epochs_writes_untrained_network(tmp_path, caplog):
    assert main(["train-ann", "--out", str(tmp_path), *SMALL_ANN, "--set", "ann.epochs=0"]) == 0
    assert (tmp_path / "network.txt").exists()
    assert _rows(tmp_path / "training_loss.csv") == [["epoch", "loss"]]
    assert "untrained" in caplog.text


def test_pso_bench_zero_iterations_reports_failures(capsys):
    assert main(["pso-bench", "--iterations", "0", "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    assert "sphere-2d" in out


def test_pso_bench_writes_csv_when_asked(tmp_path):
    assert main(["pso-bench", "--iterations", "30", "--seeds", "2", "--out", str(tmp_path)]) == 0
    assert _rows(tmp_path / "pso_bench.csv")[0][0] == "problem"


def test_pso_bench_rejects_negative_iterations():
    assert main(["pso-bench", "--iterations", "-1"]) == 2


def test_unknown_override_section(tmp_path):
    assert main(["run", "--out", str(tmp_path / "o"), "--set", "gearbox.ratio=3"]) == 2


def test_cp_curve_from_dmst_model_is_unimodal(tmp_path):
    cfg = tmp_path / "dmst.toml"
    cfg.write_text("[turbine]\ncp_model = \"dmst\"\n")
    assert main(["cp-curve", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    cp = [float(r[1]) for r in _rows(tmp_path / "cp_curve.csv")[1:]]
    k = cp.index(max(cp))
    assert all(a <= b for a, b in zip(cp[:k], cp[1:k + 1]))
    assert all(a >= b for a, b in zip(cp[k:], cp[k + 1:]))
    assert 0.40 <= max(cp) <= 0.60


def test_dmst_table_command(tmp_path, capsys):
    assert main(["dmst-table", "--out", str(tmp_path), "--set", "turbine.dmst_lambda_step=0.5"]) == 0
    assert "DMST peak Cp" in capsys.readouterr().out
    assert _rows(tmp_path / "dmst_cp.csv")[0] == ["lambda", "cp"]
    assert (tmp_path / "dmst_ripple.csv").exists() and (tmp_path / "dmst_cp.svg").exists()


def test_run_with_controller_kind_override(tmp_path, default_network):
    # no network path is configured, so the surrogate is trained (cached per process)
    assert main(["run", "--out", str(tmp_path), "--quiet", "--overrides", "controller.kind=ann_pso", *FAST]) == 0
    assert "ann_pso" in (tmp_path / "metrics.txt").read_text()
