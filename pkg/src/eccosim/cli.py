"""Command-line front end: run experiments, reproduce the recorded benchmark
tables, sweep the step size, and scan for stability onsets.

Exit codes: 0 success, 1 configuration/usage error, 2 simulation failure
(non-finite states), 3 measured results outside the expected tolerances.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .bench import (
    DEFAULT_T_END,
    ConfigError,
    ExperimentConfig,
    format_number,
    load_config,
    run_experiment,
    save_experiment_output,
    summarize_experiment,
    write_trajectory_csv,
)
from .master import SimulatorFailure
from .quartercar import preset_params
from .reference import NoOnsetInRange, stability_scan, step_size_sweep


@dataclass(frozen=True)
class Cell:
    """One expected table cell: metric name, expected value, tolerance band.

    ``rel_tol`` of None marks a display-only cell.  ``magnitude`` compares
    |measured| against the expected value (the residual-energy columns are
    printed as magnitudes).
    """

    metric: str
    expected: float
    rel_tol: float | None = None
    magnitude: bool = False


@dataclass(frozen=True)
class Row:
    label: str
    config: ExperimentConfig
    cells: tuple[Cell, ...]


@dataclass(frozen=True)
class Table:
    title: str
    rows: tuple[Row, ...]
    residual_reduction_min: float | None = None  # constant -> adaptive row claim


def _cfg(preset, reticulation, controller, **kw) -> ExperimentConfig:
    return ExperimentConfig(
        preset=preset, reticulation=reticulation, controller=controller, **kw
    )


def _t3_rows() -> tuple[Row, ...]:
    return (
        Row(
            "constant",
            _cfg("linear", "A", "constant", dt0=1e-3),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", 0.4, 0.30),
                Cell("mean_abs_dP", 1.3, 0.30),
                Cell("total_residual", 6.4, 0.15, magnitude=True),
            ),
        ),
        Row(
            "ecco-2.8e-6",
            _cfg("linear", "A", "ecco", r=2.8e-6),
            (
                Cell("mean_dt_ms", 1.0, 0.20),
                Cell("mean_P12", 0.0),
                Cell("mean_abs_dP", 0.4, 0.30),
                Cell("total_residual", 1.6, 0.25, magnitude=True),
            ),
        ),
        Row(
            "ecco-3.1e-5",
            _cfg("linear", "A", "ecco", r=3.1e-5),
            (
                Cell("mean_dt_ms", 2.9, 0.20),
                Cell("mean_P12", 0.1),
                Cell("mean_abs_dP", 1.3),
                Cell("total_residual", 5.0, 0.25, magnitude=True),
            ),
        ),
    )


def _t7_rows() -> tuple[Row, ...]:
    return (
        Row(
            "constant",
            _cfg("nonlinear", "A", "constant", dt0=1e-3),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", 1.0),
                Cell("mean_abs_dP", 4.0, 0.30),
                Cell("total_residual", 5.0, 0.30, magnitude=True),
            ),
        ),
        Row(
            "ecco-7.5e-6",
            _cfg("nonlinear", "A", "ecco", r=7.5e-6),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", 0.0),
                Cell("mean_abs_dP", 1.1, 0.30),
                Cell("total_residual", 1.6, 0.30, magnitude=True),
            ),
        ),
        Row(
            "ecco-1.0e-4",
            _cfg("nonlinear", "A", "ecco", r=1.0e-4),
            (
                Cell("mean_dt_ms", 3.1, 0.30),
                Cell("mean_P12", 0.0),
                Cell("mean_abs_dP", 4.0),
                Cell("total_residual", 6.0, None, magnitude=True),
            ),
        ),
    )


def _t8_rows() -> tuple[Row, ...]:
    return (
        Row(
            "constant",
            _cfg("linear", "B", "constant", dt0=1e-3),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", -192.0, 0.20),
                Cell("mean_abs_dP", 12.0, 0.20),
                Cell("total_residual", 23.0, 0.20, magnitude=True),
            ),
        ),
        Row(
            "ecco-9.1e-7",
            _cfg("linear", "B", "ecco", r=9.1e-7),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", -187.9, 0.20),
                Cell("mean_abs_dP", 1.3, 0.20),
                Cell("total_residual", 1.6, 0.20, magnitude=True),
            ),
        ),
    )


def _t9_rows() -> tuple[Row, ...]:
    return (
        Row(
            "constant",
            _cfg("nonlinear", "B", "constant", dt0=1e-3),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", -390.0, 0.30),
                Cell("mean_abs_dP", 30.0, 0.30),
                Cell("total_residual", 50.0, 0.30, magnitude=True),
            ),
        ),
        Row(
            "ecco-2.4e-5",
            _cfg("nonlinear", "B", "ecco", r=2.4e-5),
            (
                Cell("mean_dt_ms", 1.0),
                Cell("mean_P12", -377.0, 0.30),
                Cell("mean_abs_dP", 5.0, 0.30),
                Cell("total_residual", 5.0, 0.30, magnitude=True),
            ),
        ),
    )


def _pc_row(label, preset, reticulation, tol, cells, **kw) -> Row:
    return Row(
        label,
        _cfg(preset, reticulation, "predictor_corrector", tol=tol, rho=1e-4, **kw),
        cells,
    )


EXPECTED_TABLES: dict[str, Table] = {
    "T3": Table("linear quarter car, reticulation A", _t3_rows()),
    "T7": Table("nonlinear quarter car, reticulation A", _t7_rows()),
    "T8": Table("linear quarter car, reticulation B", _t8_rows()),
    "T9": Table("nonlinear quarter car, reticulation B", _t9_rows()),
    "T10": Table(
        "linear quarter car, reticulation B, single micro step in S2",
        (
            Row(
                "constant",
                _cfg("linear", "B", "constant", dt0=1e-3, micro_ratio_s2=1),
                (
                    Cell("mean_dt_ms", 1.0),
                    Cell("mean_P12", -220.0, 0.30),
                    Cell("mean_abs_dP", 40.0, 0.30),
                    Cell("total_residual", 30.0, 0.30, magnitude=True),
                ),
            ),
            Row(
                "ecco-1.0e-6",
                _cfg("linear", "B", "ecco", r=1.0e-6, micro_ratio_s2=1),
                (
                    Cell("mean_dt_ms", 1.0),
                    Cell("mean_P12", -190.0, 0.30),
                    Cell("mean_abs_dP", 4.0, 0.30),
                    Cell("total_residual", 2.0, 0.30, magnitude=True),
                ),
            ),
        ),
        residual_reduction_min=0.85,
    ),
    "PC-linear": Table(
        "linear quarter car, reticulation A, controller comparison",
        (
            _t3_rows()[0],
            _pc_row(
                "pc-6.7e-1",
                "linear",
                "A",
                6.7e-1,
                (
                    Cell("mean_dt_ms", 1.0),
                    Cell("mean_P12", 0.3),
                    Cell("mean_abs_dP", 0.7, 0.35),
                    Cell("total_residual", 2.9, 0.35, magnitude=True),
                ),
            ),
            _t3_rows()[1],
        ),
    ),
    "PC-nonlinear": Table(
        "nonlinear quarter car, reticulation A, controller comparison",
        (
            _t7_rows()[0],
            _pc_row(
                "pc-2.1",
                "nonlinear",
                "A",
                2.1,
                (
                    Cell("mean_dt_ms", 1.0),
                    Cell("mean_P12", 0.4),
                    Cell("mean_abs_dP", 1.9, 0.35),
                    Cell("total_residual", 3.1, 0.35, magnitude=True),
                ),
            ),
            _t7_rows()[1],
        ),
    ),
    "PC-altA": Table(
        "linear quarter car, reticulation B, controller comparison",
        (
            _t8_rows()[0],
            _pc_row(
                "pc-6.0e-1",
                "linear",
                "B",
                6.0e-1,
                (
                    Cell("mean_dt_ms", 1.0),
                    Cell("mean_P12", -187.7),
                    Cell("mean_abs_dP", 1.3, 0.35),
                    Cell("total_residual", 1.7, 0.35, magnitude=True),
                ),
            ),
            _t8_rows()[1],
        ),
    ),
    "PC-altB": Table(
        "nonlinear quarter car, reticulation B, controller comparison",
        (
            _t9_rows()[0],
            _pc_row(
                "pc-6.5",
                "nonlinear",
                "B",
                6.5,
                (
                    Cell("mean_dt_ms", 1.0),
                    Cell("mean_P12", -392.0),
                    Cell("mean_abs_dP", 18.0, 0.35),
                    Cell("total_residual", 21.0, 0.35, magnitude=True),
                ),
            ),
            _t9_rows()[1],
        ),
    ),
}


def measured_metrics(summary) -> dict[str, float]:
    return {
        "mean_dt_ms": summary.mean_dt * 1e3,
        "mean_P12": summary.mean_P12,
        "mean_abs_dP": summary.mean_abs_dP,
        "total_residual": summary.total_residual,
    }


def check_cell(cell: Cell, metrics: dict[str, float]) -> tuple[bool, float]:
    """Evaluate one cell; display-only cells always pass."""
    value = metrics[cell.metric]
    if cell.magnitude:
        value = abs(value)
    if cell.rel_tol is None:
        return True, value
    return abs(value - cell.expected) <= cell.rel_tol * abs(cell.expected), value


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key-value config file; flags win")
    parser.add_argument("--preset", choices=("linear", "nonlinear"))
    parser.add_argument("--reticulation", choices=("A", "B"))
    parser.add_argument(
        "--controller", choices=("constant", "ecco", "predictor_corrector")
    )
    parser.add_argument("--r", type=float, help="residual-energy relative tolerance")
    parser.add_argument("--e0", type=float, help="residual-energy scale [J]")
    parser.add_argument("--tol", type=float, help="predictor/corrector tolerance")
    parser.add_argument("--rho", type=float, help="predictor/corrector error weight")
    parser.add_argument("--alpha-s", type=float, dest="alpha_s")
    parser.add_argument("--dt-min", type=float, dest="dt_min")
    parser.add_argument("--dt-max", type=float, dest="dt_max")
    parser.add_argument("--theta-min", type=float, dest="theta_min")
    parser.add_argument("--theta-max", type=float, dest="theta_max")
    parser.add_argument("--t-end", type=float, dest="t_end")
    parser.add_argument("--dt0", type=float)
    parser.add_argument("--micro-s1", type=int, dest="micro_ratio_s1")
    parser.add_argument("--micro-s2", type=int, dest="micro_ratio_s2")


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        name: getattr(args, name)
        for name in (
            "preset", "reticulation", "controller", "r", "e0", "tol", "rho",
            "alpha_s", "dt_min", "dt_max", "theta_min", "theta_max",
            "t_end", "dt0", "micro_ratio_s1", "micro_ratio_s2",
        )
        if getattr(args, name, None) is not None
    }
    if getattr(args, "out", None):
        overrides["out_path"] = args.out
    if getattr(args, "summary_out", None):
        overrides["summary_path"] = args.summary_out
    return load_config(getattr(args, "config", None), overrides)


def _print_summary(cfg: ExperimentConfig, summary) -> None:
    tol = cfg.tolerance_label or "-"
    print(
        f"preset={cfg.preset} reticulation={cfg.reticulation} "
        f"controller={cfg.controller} tolerance={tol}"
    )
    print(
        f"steps={summary.step_count} mean_dt={summary.mean_dt * 1e3:.4g} ms "
        f"mean_P12={summary.mean_P12:.4g} W mean_|dP|={summary.mean_abs_dP:.4g} W "
        f"total_residual={summary.total_residual:.4g} J"
    )


def _find_row(key: str) -> Row:
    table_id, _, label = key.partition(":")
    table = EXPECTED_TABLES.get(table_id)
    if table is None:
        raise ConfigError(
            f"unknown table {table_id!r}; valid: {', '.join(sorted(EXPECTED_TABLES))}"
        )
    for row in table.rows:
        if row.label == label:
            return row
    labels = ", ".join(r.label for r in table.rows)
    raise ConfigError(f"unknown row {label!r} in {table_id}; valid: {labels}")


def cmd_run(args) -> int:
    try:
        cfg = _config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        record = run_experiment(cfg, parallel=args.parallel)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulatorFailure as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        if exc.record is not None:
            with open(cfg.out_path, "w", encoding="utf-8", newline="") as fh:
                write_trajectory_csv(exc.record, fh)
            print(f"partial trajectory written to {cfg.out_path}", file=sys.stderr)
        return 2
    summary = summarize_experiment(cfg, record)
    paths = save_experiment_output(cfg, record, summary)
    _print_summary(cfg, summary)
    print(f"wrote {paths[0]} and {paths[1]}")
    if args.check:
        try:
            row = _find_row(args.check)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        metrics = measured_metrics(summary)
        failed = False
        for cell in row.cells:
            ok, value = check_cell(cell, metrics)
            band = f"+/-{cell.rel_tol:.0%}" if cell.rel_tol is not None else "info"
            status = "ok" if ok else "FAIL"
            print(f"  {cell.metric:<16} {value:>12.4g} vs {cell.expected:<10g} {band:<8} {status}")
            failed = failed or not ok
        if failed:
            return 3
    return 0


def cmd_reproduce(args) -> int:
    table = EXPECTED_TABLES.get(args.table)
    if table is None:
        print(
            f"unknown table {args.table!r}; valid ids: {', '.join(sorted(EXPECTED_TABLES))}",
            file=sys.stderr,
        )
        return 1
    print(f"{args.table}: {table.title}")
    failures = 0
    residuals: dict[str, float] = {}
    for row in table.rows:
        try:
            record = run_experiment(row.config)
        except SimulatorFailure as exc:
            print(f"  {row.label}: simulation failure: {exc}", file=sys.stderr)
            return 2
        summary = summarize_experiment(row.config, record)
        metrics = measured_metrics(summary)
        residuals[row.label] = abs(metrics["total_residual"])
        for cell in row.cells:
            ok, value = check_cell(cell, metrics)
            if cell.rel_tol is None:
                status, band = "info", ""
            else:
                status = "ok" if ok else "FAIL"
                band = f"+/-{cell.rel_tol:.0%}"
                if not ok:
                    failures += 1
            print(
                f"  {row.label:<14} {cell.metric:<16} measured {value:>12.5g}"
                f"  expected {cell.expected:>10g} {band:<8} {status}"
            )
    if table.residual_reduction_min is not None:
        base = residuals.get("constant", 0.0)
        adaptive = min(v for k, v in residuals.items() if k != "constant")
        reduction = 1.0 - adaptive / base if base else 0.0
        ok = reduction >= table.residual_reduction_min
        if not ok:
            failures += 1
        print(
            f"  residual reduction {reduction:.1%} "
            f"(required >= {table.residual_reduction_min:.0%}) {'ok' if ok else 'FAIL'}"
        )
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return 3
    print("all checks passed")
    return 0


def cmd_sweep(args) -> int:
    try:
        lo_str, _, hi_str = args.dt.partition("..")
        lo, hi = float(lo_str), float(hi_str)
        if not 0 < lo < hi:
            raise ValueError("need 0 < low < high")
    except ValueError as exc:
        print(f"error: bad --dt range {args.dt!r}: {exc}", file=sys.stderr)
        return 1
    params = preset_params(args.preset)
    t_end = args.t_end if args.t_end is not None else DEFAULT_T_END[args.preset]
    dts = [float(x) for x in np.geomspace(lo, hi, args.points)]
    try:
        points = step_size_sweep(dts, params, args.reticulation, t_end=t_end)
    except SimulatorFailure as exc:
        print(f"simulation failure during sweep: {exc}", file=sys.stderr)
        return 2
    lines = ["dt,mean_abs_dP,residual_estimate"]
    for p in points:
        lines.append(
            f"{format_number(p.dt)},{format_number(p.mean_abs_dP)},"
            f"{format_number(p.residual_estimate)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


_SCAN_RANGES = {"A": (0.040, 0.080), "B": (0.005, 0.020)}


def cmd_scan(args) -> int:
    lo, hi = _SCAN_RANGES[args.reticulation]
    lo = args.lo if args.lo is not None else lo
    hi = args.hi if args.hi is not None else hi
    params = preset_params(args.preset)
    try:
        onset = stability_scan(
            params,
            args.reticulation,
            lo,
            hi,
            t_scan=args.t_scan,
            threshold=args.threshold,
            resolution=args.resolution,
        )
    except NoOnsetInRange as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"reticulation {args.reticulation}: instability onset at dt = {onset * 1e3:.2f} ms")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("reticulation,onset_dt\n")
            fh.write(f"{args.reticulation},{format_number(onset)}\n")
        print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(
        prog="eccosim",
        description=(
            "Co-simulation benchmarks with residual-energy and "
            "predictor/corrector step size control."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and write CSVs")
    _add_experiment_flags(p_run)
    p_run.add_argument("--out", help="trajectory CSV path (default run.csv)")
    p_run.add_argument("--summary-out", dest="summary_out", help="summary CSV path")
    p_run.add_argument(
        "--check", metavar="TABLE:ROW", help="compare against an expected row, e.g. T3:constant"
    )
    p_run.add_argument(
        "--parallel", action="store_true", help="step simulators in worker threads"
    )
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("reproduce", help="re-run a recorded benchmark table")
    p_rep.add_argument("table", help=f"one of {', '.join(sorted(EXPECTED_TABLES))}")
    p_rep.set_defaults(func=cmd_reproduce)

    p_sweep = sub.add_parser("sweep", help="constant-step error sweep (two curves)")
    p_sweep.add_argument("--dt", default="1e-4..1e-2", help="range low..high [s]")
    p_sweep.add_argument("--points", type=int, default=9)
    p_sweep.add_argument("--preset", choices=("linear", "nonlinear"), default="linear")
    p_sweep.add_argument("--reticulation", choices=("A", "B"), default="A")
    p_sweep.add_argument("--t-end", type=float, dest="t_end")
    p_sweep.add_argument("--out", help="output CSV path (default: print)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_scan = sub.add_parser("scan", help="bisect the constant-step stability onset")
    p_scan.add_argument("--reticulation", choices=("A", "B"), required=True)
    p_scan.add_argument("--preset", choices=("linear", "nonlinear"), default="linear")
    p_scan.add_argument("--lo", type=float, help="stable bracket end [s]")
    p_scan.add_argument("--hi", type=float, help="divergent bracket end [s]")
    p_scan.add_argument("--t-scan", type=float, dest="t_scan", default=100.0)
    p_scan.add_argument("--threshold", type=float, default=1e6)
    p_scan.add_argument("--resolution", type=float, default=1e-4)
    p_scan.add_argument("--out", help="optional CSV output path")
    p_scan.set_defaults(func=cmd_scan)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
