#!/usr/bin/env python3
"""
Command-line front end.

Usage:
    python cli.py run <config.ini>
    python cli.py check <run_dir>
    python cli.py report <run_dir> [<run_dir> ...] [--output DIR]
    python cli.py render <run_dir> [--field u --field Gamma]
    python cli.py serve <runs_root> [--host 127.0.0.1 --port 8000]

Exit codes: 0 success, 1 a strict certificate entry failed, 2 config or
artifact error, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import config
from errors import NumericalError, SimulationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STRICT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_EXIT_BY_CATEGORY = {"config": EXIT_CONFIG, "artifacts": EXIT_CONFIG, "numerical": EXIT_NUMERICAL}

X_COLUMNS = ("t", "X")
ENERGY_COLUMNS = ("t", "kinetic", "dissipation", "metric", "lhs", "rhs")
LAMBDA_COLUMNS = ("s", "lambda", "case", "D0", "note")


def exit_code_for(exc: SimulationError) -> int:
    return _EXIT_BY_CATEGORY.get(exc.category, EXIT_CONFIG)


# ========= COMMANDS =========

def cmd_run(config_path: str) -> int:
    """Run the configured scenario and persist CSV, checkpoints and manifest."""
    import dynamics
    from artifacts import save_run
    from run_config import load_run_config

    try:
        run_config = load_run_config(config_path)
    except SimulationError as exc:
        logger.error("Invalid run file %s: %s", config_path, exc)
        return exit_code_for(exc)

    directory = run_config.resolve_output()
    try:
        series = dynamics.run(run_config.sim)
    except NumericalError as exc:
        logger.error("Numerical failure at t=%s (step %s): %s", exc.t, exc.step, exc)
        _save_failed_run(directory, run_config, exc.series, exc)
        return EXIT_NUMERICAL
    except SimulationError as exc:
        logger.error("Run failed: %s", exc)
        _save_failed_run(directory, run_config, None, exc)
        return exit_code_for(exc)

    try:
        save_run(directory, run_config, series)
    except SimulationError as exc:
        logger.error("Could not save the run: %s", exc)
        return exit_code_for(exc)
    return EXIT_OK


def _save_failed_run(directory: str, run_config, series, error: SimulationError) -> None:
    """Record a failed run; a failure to save is logged and the run's own error wins."""
    from artifacts import save_run

    try:
        save_run(directory, run_config, series, status="failed", error=error)
    except SimulationError as save_exc:
        logger.error("Could not save the failed run: %s", save_exc)


def format_report(report) -> str:
    """Fixed-width text rendering of a certificate report."""
    def number(value) -> str:
        return "-" if value is None else f"{value:.6g}"

    lines = [
        f"certificate  scenario={report.metadata.get('scenario', '?')}  passed={report.passed}",
        "",
        f"{'entry':<20} {'mode':<8} {'status':<8} {'lhs':>14} {'rhs_c_free':>14} {'ratio':>12}  note",
    ]
    for e in report.entries:
        lines.append(f"{e.name:<20} {e.mode:<8} {e.status:<8} {number(e.lhs):>14} {number(e.rhs_c_free):>14} "
                     f"{number(e.ratio):>12}  {e.note}")
    c = report.constants
    lines += [
        "",
        "constants: " + "  ".join(f"{name}={getattr(c, name):.6g}" for name in (
            "D1", "D1_notation", "D2", "Dstar", "D3", "D4", "D5", "D6", "D7", "D8", "G", "G1", "G2", "kappa")),
        "lambda(s): " + "  ".join(f"s={key}: {number(case['lambda'])} ({case['case']})"
                                  for key, case in report.cases.items()),
        f"fixed point: M={report.fixed_point.M:.6g} converged={report.fixed_point.converged} "
        f"diverged={report.fixed_point.diverged} hypothesis_ok={report.fixed_point.hypothesis_ok}",
        "",
    ]
    return "\n".join(lines)


def cmd_check(run_dir: str) -> int:
    """Evaluate the certificate ledgers of a completed run; exit 1 on a strict failure."""
    from artifacts import CERTIFICATE_JSON, CERTIFICATE_TEXT, atomic_write_text, load_series, write_json
    from certificates import certificate_report

    try:
        series, run_config = load_series(run_dir)
        report = certificate_report(series, run_config.certificates)
        write_json(os.path.join(run_dir, CERTIFICATE_JSON), report.to_dict())
        atomic_write_text(os.path.join(run_dir, CERTIFICATE_TEXT), format_report(report))
    except SimulationError as exc:
        logger.error("Cannot check %s: %s", run_dir, exc)
        return exit_code_for(exc)

    for entry in report.strict_failures():
        logger.warning("Strict entry %s failed (lhs=%.6g, rhs=%.6g)", entry.name, entry.lhs, entry.rhs_c_free)
    return EXIT_OK if report.passed else EXIT_STRICT_FAILURE


def cmd_report(run_dirs: Sequence[str], output: Optional[str] = None) -> int:
    """Write X(t), energy budget and lambda(s) tables per run, and ratio stability across runs."""
    from artifacts import load_series, write_table
    from certificates import certificate_report, energy_budget, ratio_stability

    collected = []
    try:
        for run_dir in run_dirs:
            series, run_config = load_series(run_dir)
            report = certificate_report(series, run_config.certificates)
            write_table(os.path.join(run_dir, "x_trajectory.csv"), X_COLUMNS,
                        [{"t": t, "X": x} for t, x in report.x_trajectory])
            write_table(os.path.join(run_dir, "energy_budget.csv"), ENERGY_COLUMNS,
                        energy_budget(series, report.constants))
            write_table(os.path.join(run_dir, "lambda.csv"), LAMBDA_COLUMNS, report.cases.values())
            label = os.path.basename(os.path.normpath(run_dir))
            collected.append((label, series.grid.h, report.to_dict()))

        if len(collected) > 1:
            rows = ratio_stability(collected)
            labels = [label for label, _, _ in sorted(collected, key=lambda item: -item[1])]
            table = [{"name": row["name"], **row["ratios"], "spread": row["spread"], "verdict": row["verdict"]}
                     for row in rows]
            target = output or run_dirs[0]
            write_table(os.path.join(target, "ratio_stability.csv"), ["name", *labels, "spread", "verdict"], table)
    except SimulationError as exc:
        logger.error("Cannot report: %s", exc)
        return exit_code_for(exc)
    return EXIT_OK


def cmd_render(run_dir: str, names: Sequence[str]) -> int:
    """Write PNG heatmaps for every checkpoint and an animated GIF per field."""
    from render import render_run

    try:
        render_run(run_dir, names)
    except SimulationError as exc:
        logger.error("Cannot render %s: %s", run_dir, exc)
        return exit_code_for(exc)
    except ValueError as exc:
        logger.error("Cannot render %s: %s", run_dir, exc)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_serve(root: str, host: str, port: int) -> int:
    import uvicorn

    from service import create_app

    uvicorn.run(create_app(root), host=host, port=port)
    return EXIT_OK


# ========= ENTRY POINT =========

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Axisymmetric Navier-Stokes runs and estimate certificates")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Run a configured scenario")
    run_parser.add_argument("config", help="Run file (INI)")

    check_parser = commands.add_parser("check", help="Evaluate certificate ledgers of a run")
    check_parser.add_argument("run_dir")

    report_parser = commands.add_parser("report", help="Write plot-ready CSV tables")
    report_parser.add_argument("run_dirs", nargs="+")
    report_parser.add_argument("--output", default=None, help="Directory of ratio_stability.csv")

    render_parser = commands.add_parser("render", help="Render heatmaps and a GIF")
    render_parser.add_argument("run_dir")
    render_parser.add_argument("--field", action="append", dest="fields", default=None,
                               help="Field to render (repeatable), default u and Gamma")

    serve_parser = commands.add_parser("serve", help="Serve run directories over HTTP")
    serve_parser.add_argument("root", nargs="?", default=None, help="Runs root, default the output root")
    serve_parser.add_argument("--host", default="127.0.0.1")
    serve_parser.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=config.get_log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "check":
        return cmd_check(args.run_dir)
    if args.command == "report":
        return cmd_report(args.run_dirs, args.output)
    if args.command == "render":
        return cmd_render(args.run_dir, args.fields or ["u", "Gamma"])
    return cmd_serve(args.root or config.get_output_root(), args.host, args.port)


if __name__ == "__main__":
    sys.exit(main())
