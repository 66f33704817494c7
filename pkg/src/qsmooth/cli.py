"""Command-line driver.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical failure.  Errors are printed to stderr as one JSON
object.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, NumericalError, Params
from .costs import (
    TABLE_COLUMNS,
    TABLE_ROWS,
    Quadrature,
    c5_values,
    jump_time_average_all,
    per_time_costs,
)
from .export import write_csv, write_json, write_pdf_snapshots
from .pipeline import ESTIMATORS, run_block

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
SUITE_NAMES = ("mc-cross-check", "classical-equivalence", "invariants")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors also produce the JSON error line and exit code 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _fail(EXIT_USAGE, "usage", message)
        sys.exit(EXIT_USAGE)


def load_params(path: str | None, seed: int | None = None) -> Params:
    if path is None:
        params = Params()
    else:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        params = Params.from_dict(data)
    if seed is not None:
        params = params.replace(seed=seed)
    return params


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _track_columns(track) -> dict:
    return {"t": track.times, "y": track.y, "z": track.z, "theta": track.theta, "R": track.radius}


# --------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    params = load_params(args.config, args.seed)
    out = _out_dir(args)
    names = ["filtered"] if args.estimator == "filtered" else ["filtered", args.estimator]
    block = run_block(params, estimators=tuple(names), with_records=False)
    for name in names:
        path = write_csv(out / f"estimate_{name}.csv", _track_columns(block.tracks[name]), params, {"estimator": name})
        print(path)
    return EXIT_OK


def _state_cost_columns(reports: dict) -> dict:
    cols = {}
    for name, rep in reports.items():
        cols.setdefault("t", rep.times)
        for c in ("c1", "c2", "c3", "c8"):
            if c in rep.per_time:
                cols[f"{c}_{name}"] = rep.per_time[c]
    return cols


def _record_cost_columns(reports: dict) -> dict:
    cols = {}
    for name, rep in reports.items():
        if "c6" in rep.per_time:
            cols.setdefault("t", rep.record_times)
            cols[f"c6_c7_{name}"] = rep.per_time["c6"]
    return cols


def _table_rows(table):
    out = {"cost": list(table.rows)}
    for e in table.columns:
        out[e] = [table.values[c].get(e, math.nan) for c in table.rows]
    out["flags"] = [f"min={table.row_minimizer(c)}" for c in table.rows]
    return out


def cmd_costs(args) -> int:
    params = load_params(args.config, args.seed)
    out = _out_dir(args)
    if args.jump_average:
        quad = Quadrature(dx=args.dx, dt_avg=args.dt_avg)
        t0 = time.time()
        table = jump_time_average_all(params, TABLE_ROWS, TABLE_COLUMNS, quad, args.weighting, args.threads)
        extra = {"weighting": args.weighting, "dx": args.dx, "dt_avg": args.dt_avg, "nodes": " ".join(f"{t:g}" for t in table.nodes)}
        print(write_csv(out / "jump_average_costs.csv", _table_rows(table), params, extra))
        payload = {
            "weighting": args.weighting,
            "nodes": table.nodes,
            "values": {c: {e: (None if math.isnan(v) else v) for e, v in row.items()} for c, row in table.values.items()},
            "row_minimizers": {c: table.row_minimizer(c) for c in table.rows},
            "seconds": round(time.time() - t0, 1),
        }
        print(write_json(out / "jump_average_costs.json", payload, params))
        for c in table.rows:
            cells = "  ".join("   NA " if math.isnan(table.values[c][e]) else f"{table.values[c][e]:+.3f}" for e in table.columns)
            print(f"{c}: {cells}  min={table.row_minimizer(c)}")
        return EXIT_OK
    only = set(args.only or ())
    if only - {"c5", "state", "record"}:
        raise UsageError(f"--only accepts c5, state or record, not {sorted(only)}")
    want_c5 = not only or "c5" in only
    estimators = TABLE_COLUMNS if only == {"state"} else ESTIMATORS
    block = run_block(params, estimators=estimators)
    if want_c5:
        c5 = c5_values(block)
        print(write_json(out / "c5.json", {"c5": c5, "q5_roots": len(block.q5.roots)}, params))
        for k, v in c5.items():
            print(f"c5 {k}: {v:.6g}")
        if only == {"c5"}:
            return EXIT_OK
    reports = {n: per_time_costs(block, n) for n in block.tracks if n != "filtered"}
    if not only or "state" in only:
        print(write_csv(out / "state_costs.csv", _state_cost_columns(reports), params))
    if not only or "record" in only:
        print(write_csv(out / "record_costs.csv", _record_cost_columns(reports), params))
    flags = {n: r.flags for n, r in reports.items() if r.flags}
    print(write_json(out / "cost_flags.json", {"flags": flags, "notes": block.notes}, params))
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    params = load_params(args.config, args.seed)
    out = _out_dir(args)
    if args.suite == "mc-cross-check":
        res = verify.mc_cross_check(params, n_traj=args.n_traj)
    elif args.suite == "classical-equivalence":
        res = verify.classical_equivalence(seed=params.seed)
    else:
        res = verify.invariants(params.replace(T=min(params.T, 1.0)) if args.config is None else params)
    print(res.table())
    checks = [c.__dict__ for c in res.checks]
    write_json(out / f"verify_{args.suite}.json", {"suite": res.name, "passed": res.passed, "checks": checks}, params)
    return EXIT_OK if res.passed else EXIT_VERIFY


def cmd_report(args) -> int:
    from . import report

    params = load_params(args.config, args.seed)
    out = _out_dir(args)
    block = run_block(params)
    for name, track in block.tracks.items():
        write_csv(out / f"estimate_{name}.csv", _track_columns(track), params, {"estimator": name})
    reports = {n: per_time_costs(block, n) for n in block.tracks if n != "filtered"}
    write_csv(out / "state_costs.csv", _state_cost_columns(reports), params)
    write_csv(out / "record_costs.csv", _record_cost_columns(reports), params)
    summary = {"c5": c5_values(block), "notes": block.notes, "flags": {n: r.flags for n, r in reports.items()}}
    write_json(out / "summary.json", summary, params)
    snap = np.unique(np.round(np.linspace(0, len(block.history) - 1, 9)).astype(int))
    write_pdf_snapshots(out / "smoothed_pdf.csv", block.history.grid, block.smoothed[snap], block.cost_times[snap], params)
    write_pdf_snapshots(
        out / "filtered_pdf.csv", block.history.grid, block.history.normalized_values()[snap], block.cost_times[snap], params, "filtered"
    )
    report.plot_trajectories(block, out / "trajectories.png")
    report.plot_costs({n: r for n, r in reports.items() if n not in ("q5", "q7")}, out / "costs.png")
    if args.jump_average:
        table = jump_time_average_all(params, weighting=args.weighting, threads=args.threads)
        write_csv(out / "jump_average_costs.csv", _table_rows(table), params)
        report.plot_table(table, out / "jump_average_costs.png")
    for p in sorted(out.iterdir()):
        print(p)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults are used when omitted)")
    common.add_argument("--out", default="qsmooth-out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes, 0 = one per CPU")
    common.add_argument("--seed", type=int, help="override the configured seed")

    parser = _Parser(prog="qsmooth", description="Past-future estimators of a monitored qubit.")
    parser.add_argument("--version", action="version", version=f"qsmooth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", parents=[common], help="write one estimator trajectory and the filtered state")
    p.add_argument("--estimator", required=True, choices=ESTIMATORS)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("costs", parents=[common], help="per-time, whole-record or jump-averaged costs")
    p.add_argument("--jump-average", action="store_true", help="average the state costs over the waiting-time distribution")
    p.add_argument("--only", action="append", choices=("c5", "state", "record"), help="restrict the output (repeatable)")
    p.add_argument("--weighting", choices=("pooled", "per_block"), default="pooled")
    p.add_argument("--dx", type=float, default=0.1, help="quadrature step in the waiting-time CDF")
    p.add_argument("--dt-avg", type=float, default=0.05, help="local-time step of the inner average")
    p.set_defaults(func=cmd_costs)

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("suite", choices=SUITE_NAMES)
    p.add_argument("--n-traj", type=int, default=100_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="all estimators, costs and figures")
    p.add_argument("--jump-average", action="store_true")
    p.add_argument("--weighting", choices=("pooled", "per_block"), default="pooled")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 0:
        return _fail(EXIT_USAGE, "usage", "--threads must be >= 0")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        return _fail(EXIT_USAGE, "config", str(exc))
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_USAGE, "value", str(exc))


if __name__ == "__main__":
    sys.exit(main())
