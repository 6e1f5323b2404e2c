"""Benchmark command line.

Subcommands:
  run <manifest>      execute the suite described by a JSON manifest
  profile <records>   performance-profile curves from a records JSON file
  sweep <manifest>    the four-parameter sensitivity sweep
  trace <records>     per-iteration trajectory rows from a records JSON file
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench


def _read_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _apply_overrides(manifest: dict, args: argparse.Namespace) -> dict:
    if args.seed_list is not None:
        manifest["seeds"] = [int(s) for s in args.seed_list.split(",") if s != ""]
    solver = dict(manifest.get("solver", {}))
    if args.kkt_tol is not None:
        solver["kkt_tol"] = args.kkt_tol
    if args.max_outer is not None:
        solver["max_outer"] = args.max_outer
    manifest["solver"] = solver
    return manifest


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sketchnewton", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed-list", default=None, help="comma-separated seeds")
        p.add_argument("--kkt-tol", type=float, default=None, dest="kkt_tol")
        p.add_argument("--max-outer", type=int, default=None, dest="max_outer")

    p_run = sub.add_parser("run", help="run a benchmark manifest")
    p_run.add_argument("manifest")
    add_common(p_run)

    p_prof = sub.add_parser("profile", help="performance profiles from records")
    p_prof.add_argument("records")
    add_common(p_prof)

    p_sweep = sub.add_parser("sweep", help="parameter sensitivity sweep")
    p_sweep.add_argument("manifest")
    add_common(p_sweep)

    p_trace = sub.add_parser("trace", help="iteration trajectories from records")
    p_trace.add_argument("records")
    add_common(p_trace)

    args = parser.parse_args(argv)

    if args.command == "run":
        manifest = _apply_overrides(_read_manifest(args.manifest), args)
        records = bench.run_suite(manifest)
        _write(bench.emit(records, args.format), args.out)
    elif args.command == "profile":
        with open(args.records) as fh:
            records = bench.parse_records_json(fh.read())
        curves = bench.performance_profile(records)
        _write(bench.emit(curves, args.format), args.out)
    elif args.command == "sweep":
        manifest = _apply_overrides(_read_manifest(args.manifest), args)
        groups = bench.sensitivity_sweep(manifest.get("problems", []), manifest)
        if args.format == "json":
            payload = [
                {
                    "param": g["param"],
                    "value": g["value"],
                    "mean_obj_cons": g["mean_obj_cons"],
                    "all_converged": g["all_converged"],
                }
                for g in groups
            ]
            _write(json.dumps(payload, indent=1, sort_keys=True) + "\n", args.out)
        else:
            lines = ["param,value,mean_obj_cons,all_converged"]
            for g in groups:
                lines.append(
                    f"{g['param']},{g['value']:.17g},{g['mean_obj_cons']:.17g},{g['all_converged']}"
                )
            _write("\n".join(lines) + "\n", args.out)
    elif args.command == "trace":
        with open(args.records) as fh:
            records = bench.parse_records_json(fh.read())
        _write(bench.emit_trace_csv(records), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
