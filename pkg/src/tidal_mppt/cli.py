"""Command-line entry point.

Exit codes: 0 success, 1 simulation or training fault, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bench import format_bench, pso_bench
from .config import Experiment, _resolve_path, load_experiment
from .dmst import build_dmst_table
from .errors import ConfigError, DivergenceError, MetricsError, SimulationFault, TidalError
from .hydro import cp_of_lambda, default_polar, load_polar, write_cp_table
from .metrics import compare_report, report_csv, report_for, report_table
from .mlp import save_network
from .pso import PsoConfig
from .sim import run_scenario
from .surrogate import held_out_rmse, train_surrogate
from .svg import write_plot

log = logging.getLogger("tidal_mppt")

EXIT_OK, EXIT_FAULT, EXIT_CONFIG = 0, 1, 2


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment(args, select=None) -> Experiment:
    return load_experiment(args.config, args.set, args.seed, select=select)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- subcommands ---------------------------------------------------------------------


def cmd_cp_curve(args) -> int:
    lo, hi, step = args.lambda_range
    if not (step > 0 and hi > lo >= 0):
        raise ConfigError(f"lambda range needs 0 <= min < max and step > 0 (got {lo}, {hi}, {step})")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if n < 2:
        raise ConfigError("lambda range must contain at least two points")
    exp = _experiment(args)
    model = exp.scenario.turbine.cp_model
    lam = np.round(lo + step * np.arange(n), 10)
    cp = [cp_of_lambda(model, float(x)) for x in lam]
    out = _out_dir(args)
    _write_csv(out / "cp_curve.csv", ["lambda", "cp"], [[f"{a:.10g}", f"{b:.10g}"] for a, b in zip(lam, cp)])
    k = int(np.argmax(cp))
    write_plot(out / "cp_curve.svg", [("Cp", lam, cp)], "Power coefficient", "tip-speed ratio", "Cp",
               annotations=[(lam[k], cp[k], f"peak ({lam[k]:.2f}, {cp[k]:.3f})")])
    log.info("Cp peak %.4f at lambda %.2f", cp[k], lam[k])
    return EXIT_OK


def cmd_dmst_table(args) -> int:
    exp = _experiment(args)
    t = exp.raw.get("turbine", {})
    step = float(t.get("dmst_lambda_step", 0.1))
    top = float(t.get("dmst_lambda_max", 4.0))
    grid = np.round(np.arange(step, top + 0.5 * step, step), 10)
    turbine = exp.scenario.turbine
    polar = load_polar(_resolve_path(exp.base_dir, t["polar"])) if "polar" in t else default_polar()
    table = build_dmst_table(turbine.geometry, polar, turbine.fluid,
                             float(t.get("dmst_flow_m_per_s", 1.5)), grid, int(t.get("dmst_tube_count", 36)))
    out = _out_dir(args)
    write_cp_table(table, out / "dmst_cp.csv", out / "dmst_ripple.csv")
    lam_pk, cp_pk = table.peak
    write_plot(out / "dmst_cp.svg", [("DMST Cp", table.lambda_grid, table.cp_values)], "DMST power coefficient",
               "tip-speed ratio", "Cp", annotations=[(lam_pk, cp_pk, f"peak ({lam_pk:.2f}, {cp_pk:.3f})")])
    print(f"DMST peak Cp = {cp_pk:.4f} at lambda = {lam_pk:.2f}")
    return EXIT_OK


def cmd_train_ann(args) -> int:
    exp = _experiment(args)
    settings = exp.ann
    if settings.train.epochs == 0:
        log.warning("epochs = 0: writing the untrained network")
    out = _out_dir(args)
    try:
        result = train_surrogate(exp.scenario.turbine, settings)
    except DivergenceError as exc:
        print(f"training diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_FAULT
    save_network(result.network, out / "network.txt")
    _write_csv(out / "training_loss.csv", ["epoch", "loss"],
               [[i + 1, f"{v:.10g}"] for i, v in enumerate(result.loss_history)])
    rmse, p_max = held_out_rmse(result.network, exp.scenario.turbine, settings)
    summary = (
        f"training RMSE (noisy grid): {result.rmse_W:.4f} W\n"
        f"held-out RMSE (noise free, half-cell offset grid): {rmse:.4f} W\n"
        f"held-out maximum power: {p_max:.4f} W\n"
        f"held-out RMSE fraction of maximum power: {100 * rmse / p_max:.4f} %\n"
    )
    (out / "training_summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK


def cmd_run(args) -> int:
    exp = _experiment(args, select=args.controller)
    entry = exp.entries[0] if exp.entries else None
    spec = exp.controller(entry) if entry is not None else None
    scenario = exp.scenario_for(spec)
    try:
        result = run_scenario(scenario)
    except SimulationFault as exc:
        state = ", ".join(f"{k}={v:.6g}" for k, v in exc.state.items())
        print(f"simulation fault at t = {exc.time_s:.6f} s: {exc}\nstate: {state}", file=sys.stderr)
        return EXIT_FAULT
    out = _out_dir(args)
    result.to_csv(out / "timeseries.csv")
    label = spec.label if spec is not None else "rotor only"
    try:
        text = report_table([report_for(label, result, exp.windows)])
    except MetricsError as exc:
        text = f"metrics unavailable: {exc}\n"
    audit = result.metadata.get("energy_audit", {})
    if audit:
        text += f"energy audit relative residual: {audit.get('relative_residual', float('nan')):.3e}\n"
    (out / "metrics.txt").write_text(text)
    t = result["t"]
    write_plot(out / "v_abc.svg", [(n, t, result[n]) for n in ("v_a", "v_b", "v_c")],
               f"Phase voltages ({label})", "time (s)", "voltage (V)")
    write_plot(out / "v_dc.svg", [("v_dc", t, result["v_dc"])], f"DC-link voltage ({label})", "time (s)", "voltage (V)")
    if not args.quiet:
        print(text, end="")
    return EXIT_OK


def _run_one(scenario):
    """Worker body; failures come back as text so they cross process boundaries cleanly."""
    try:
        return run_scenario(scenario)
    except TidalError as exc:
        return str(exc)


def cmd_compare(args) -> int:
    exp = _experiment(args)
    if len(exp.entries) < 2:
        raise ConfigError("compare needs at least two controller entries")
    # networks are loaded or trained here, once, so workers only simulate
    specs = exp.controllers()
    scenarios = [exp.scenario_for(s) for s in specs]
    workers = max(1, args.workers or os.cpu_count() or 1)
    if workers == 1:
        results = [_run_one(s) for s in scenarios]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(scenarios))) as pool:
            results = list(pool.map(_run_one, scenarios))
    labels = [s.label for s in specs]
    rows = []
    for label, result in zip(labels, results):
        if isinstance(result, str):
            log.warning("%s failed: %s", label, result)
            rows.append(compare_report([(label, result)], exp.windows)[0])
            continue
        try:
            rows.append(report_for(label, result, exp.windows))
        except MetricsError as exc:
            # report_for prefixes the label; the table adds it again
            rows.append(compare_report([(label, str(exc.__cause__ or exc))], exp.windows)[0])
    out = _out_dir(args)
    report_csv(rows, out / "comparison.csv")
    table = report_table(rows)
    (out / "comparison.txt").write_text(table)
    curves = [(lab, r["t"], r["v_dc"]) for lab, r in zip(labels, results) if not isinstance(r, str)]
    write_plot(out / "v_dc_compare.svg", curves, "DC-link voltage", "time (s)", "voltage (V)")
    if not args.quiet:
        print(table, end="")
    return EXIT_FAULT if any(r.failed for r in rows) else EXIT_OK


def cmd_pso_bench(args) -> int:
    if args.iterations < 0 or args.seeds < 1:
        raise ConfigError("iterations must be >= 0 and seeds >= 1")
    rows = pso_bench(PsoConfig(particles=args.particles, iterations=args.iterations), seeds=args.seeds)
    text = format_bench(rows)
    if args.out:
        out = _out_dir(args)
        _write_csv(out / "pso_bench.csv", ["problem", "seeds", "successes", "median_iterations", "worst_error"],
                   [[r.problem, r.seeds, r.successes, f"{r.median_iterations:g}", f"{r.worst_error:.6g}"] for r in rows])
    print(text, end="")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file (default: the bundled four-controller scenario)")
    common.add_argument("--out", default=".", help="output directory, created if absent")
    common.add_argument("--seed", type=int, help="sets the simulation, training and swarm seeds")
    common.add_argument("--set", "--overrides", dest="set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. sim.duration_s=1.0 (repeatable)")
    common.add_argument("--workers", type=int, default=0, help="parallel runs for compare (default: logical cores)")
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--quiet", action="store_true")
    noise.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tidal-mppt", description="Tidal turbine MPPT simulation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("cp-curve", parents=[common], help="tabulate and plot Cp(lambda)")
    p.add_argument("--lambda-range", nargs=3, type=float, default=(0.0, 4.0, 0.01), metavar=("MIN", "MAX", "STEP"))
    p.set_defaults(func=cmd_cp_curve)
    p = sub.add_parser("dmst-table", parents=[common], help="build the DMST Cp and torque-ripple tables")
    p.set_defaults(func=cmd_dmst_table)
    p = sub.add_parser("train-ann", parents=[common], help="train and save the power surrogate network")
    p.set_defaults(func=cmd_train_ann)
    p = sub.add_parser("run", parents=[common], help="simulate one scenario")
    p.add_argument("--controller", type=int, default=0, help="which controller entry to run (default 0)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", parents=[common], help="simulate every controller entry and tabulate metrics")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("pso-bench", parents=[common], help="benchmark the PSO engine over seeds")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--particles", type=int, default=20)
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_pso_bench, out=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFault as exc:
        print(f"simulation fault at t = {exc.time_s:.6f} s: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except TidalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
