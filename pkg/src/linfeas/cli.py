"""Command-line benchmark driver.

Flags override config-file values, which override the built-in defaults.
Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 success
but at least one trial was stopped by the wall-clock cap.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

from .bench import BenchConfig, block_sweep, emit_report, run_benchmark

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_FORCED = 3

OUTDIR_ENV = "LINFEAS_OUTDIR"


def _parse_t(value):
    if value == "norm2":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"t must be an integer or 'norm2', got {value!r}")


def _parse_optional_float(value):
    if value.lower() == "none":
        return None
    return float(value)


def build_parser():
    p = argparse.ArgumentParser(
        prog="linfeas-bench",
        description="Benchmark projection solvers on linear feasibility problems.",
    )
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument(
        "--instance",
        choices=["random-dense", "random-sparse", "mtx", "lp"],
        help="instance kind",
    )
    p.add_argument("--m", type=int, help="rows for random instances")
    p.add_argument("--n", type=int, help="columns for random instances")
    p.add_argument("--path", help="matrix-market or lp file path")
    p.add_argument(
        "--solver",
        choices=["rp", "skm", "grabp-c", "grabp-a", "gskm", "paskm"],
        help="solver to run",
    )
    p.add_argument("--alpha-scale", type=float, dest="alpha_scale",
                   help="grabp-c stepsize as the product alpha*zeta, in (0,2)")
    p.add_argument("--w", type=float, help="grabp-a stepsize parameter, in (0,2)")
    p.add_argument("--beta", type=int, help="skm sample size")
    p.add_argument("--delta", type=float, help="skm relaxation, in (0,2)")
    p.add_argument("--t", type=_parse_t, help="block count, or 'norm2' for ceil(||A||_2^2)")
    p.add_argument("--t-list", dest="t_list",
                   help="comma-separated block counts; runs a sweep instead of one report")
    p.add_argument("--trials", type=int, help="number of trials (default 10)")
    p.add_argument("--seed", type=int, help="base seed; trial i uses seed+i")
    p.add_argument("--res-tol", type=_parse_optional_float, dest="res_tol",
                   help="relative violation tolerance, or 'none'")
    p.add_argument("--phi", type=float, help="tolerance-gap threshold (enables gap rule)")
    p.add_argument("--max-iters", type=int, dest="max_iters", help="iteration budget")
    p.add_argument("--time-cap", type=_parse_optional_float, dest="time_cap",
                   help="wall-clock cap in seconds (default 50), or 'none'")
    p.add_argument("--history", action="store_true", default=None,
                   help="record per-iteration trajectories")
    p.add_argument("--format", choices=["csv", "json"], dest="fmt", help="report format")
    p.add_argument("--output", help="report path (default: stdout, or $%s)" % OUTDIR_ENV)
    p.add_argument("--theta", type=float, help="greedy relaxation parameter in [0,1]")
    p.add_argument("--prob-rule", choices=["pnorm", "norm2pow"], dest="prob_rule",
                   help="admitted-block weighting rule")
    p.add_argument("--prob-exponent", type=float, dest="prob_exponent",
                   help="exponent of the weighting rule")
    p.add_argument("--jobs", type=int, help="parallel trial workers (default 1)")
    p.add_argument("--fix-instance", action="store_true", dest="fix_instance",
                   default=None, help="reuse one instance draw across trials")
    p.add_argument("--dump-solution", action="store_true", dest="dump_solution",
                   default=None, help="write terminal iterates next to the report")
    return p


def merge_config(args):
    """defaults < config file < explicit flags."""
    values = {}
    if args.config:
        with open(args.config, "rt", encoding="utf-8") as fh:
            file_values = json.load(fh)
        known = {f.name for f in fields(BenchConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise ValueError(f"config file: unknown fields {sorted(unknown)}")
        values.update(file_values)
    for f in fields(BenchConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return BenchConfig(**values)


def default_output(config):
    if config.output is not None:
        return config.output
    outdir = os.environ.get(OUTDIR_ENV)
    if outdir:
        return os.path.join(outdir, f"report.{config.fmt}")
    return None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = merge_config(args)
        config.validate()
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        parser.exit(EXIT_CONFIG, f"{parser.prog}: configuration error: {exc}\n")

    try:
        if args.t_list:
            t_list = [_parse_t(tok) for tok in args.t_list.split(",") if tok]
            reports = block_sweep(config, t_list)
        else:
            reports = [(config.t, run_benchmark(config))]
    except NotImplementedError as exc:
        parser.exit(EXIT_CONFIG, f"{parser.prog}: {exc}\n")
    except ValueError as exc:
        parser.exit(EXIT_CONFIG, f"{parser.prog}: configuration error: {exc}\n")
    except OSError as exc:
        parser.exit(EXIT_IO, f"{parser.prog}: i/o error: {exc}\n")

    out = default_output(config)
    try:
        for t, report in reports:
            path = out
            if path is not None and len(reports) > 1:
                root, ext = os.path.splitext(path)
                path = f"{root}.t{t}{ext}"
            emit_report(report, fmt=config.fmt, path=path)
    except OSError as exc:
        parser.exit(EXIT_IO, f"{parser.prog}: i/o error: {exc}\n")

    if any(report.forced_any for _, report in reports):
        return EXIT_FORCED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
