"""Multi-trial benchmark harness: instance setup, averaged iteration and
timing tables, and per-iteration trajectories for convergence plots.

A benchmark run executes ``trials`` independent solves.  Trial i uses
seed ``base_seed + i`` for both instance generation and solver
randomness, so reports are a pure function of (config, seed) apart from
the wall-clock columns.  Random instances are redrawn every trial unless
``fix_instance`` is set; file-based matrices are read once and get a
fresh synthetic right-hand side per trial; LP transforms are fully fixed
by their data.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .problems import (
    FeasibilityProblem,
    lp_problem,
    mtx_problem,
    random_dense_problem,
    random_sparse_problem,
    read_matrix_market,
    _synth_rhs_parts,
)
from .selection import ProbabilityRule
from .solvers import (
    GrabpConfig,
    GskmConfig,
    PaskmConfig,
    RpConfig,
    SkmConfig,
    StoppingCriterion,
    run,
)

__all__ = [
    "BenchConfig",
    "TrialRecord",
    "RunReport",
    "run_benchmark",
    "block_sweep",
    "emit_report",
    "resolve_block_count",
]

CSV_COLUMNS = [
    "solver",
    "instance",
    "m",
    "n",
    "t",
    "trial",
    "iterations",
    "seconds",
    "terminal_res",
    "stop_reason",
]

INSTANCE_KINDS = ("random-dense", "random-sparse", "mtx", "lp")
SOLVERS = ("rp", "skm", "grabp-c", "grabp-a", "gskm", "paskm")


@dataclass
class BenchConfig:
    """Validated description of one benchmark run."""

    instance: str = "random-dense"
    m: int | None = None
    n: int | None = None
    path: str | None = None
    solver: str = "grabp-a"
    alpha_scale: float = 1.0
    w: float = 1.0
    beta: int = 50
    delta: float = 1.0
    t: int | str = 10
    trials: int = 10
    seed: int = 0
    res_tol: float | None = 1e-8
    phi: float | None = None
    max_iters: int | None = None
    time_cap: float | None = 50.0
    history: bool = False
    fmt: str = "csv"
    theta: float = 0.5
    prob_rule: str = "pnorm"
    prob_exponent: float = 2.0
    jobs: int = 1
    fix_instance: bool = False
    dump_solution: bool = False
    output: str | None = None

    def validate(self):
        if self.instance not in INSTANCE_KINDS:
            raise ValueError(f"instance: unknown kind {self.instance!r}")
        if self.instance.startswith("random"):
            if not self.m or not self.n or self.m < 1 or self.n < 1:
                raise ValueError("m, n: random instances need positive m and n")
        else:
            if not self.path:
                raise ValueError("path: file-based instances need a path")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver: unknown solver {self.solver!r}")
        if self.solver == "grabp-c" and not 0.0 < self.alpha_scale < 2.0:
            raise ValueError("alpha_scale: must lie in (0, 2)")
        if self.solver == "grabp-a" and not 0.0 < self.w < 2.0:
            raise ValueError("w: must lie in (0, 2)")
        if self.solver == "skm":
            if self.beta < 1:
                raise ValueError("beta: must be >= 1")
            if not 0.0 < self.delta < 2.0:
                raise ValueError("delta: must lie in (0, 2)")
        if isinstance(self.t, str):
            if self.t != "norm2":
                raise ValueError(f"t: expected an integer or 'norm2', got {self.t!r}")
        elif self.t < 1:
            raise ValueError("t: must be >= 1")
        if self.m is not None and isinstance(self.t, int) and self.t > self.m:
            raise ValueError(f"t: t={self.t} exceeds m={self.m}")
        if self.trials < 1:
            raise ValueError("trials: must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"fmt: unknown format {self.fmt!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta: must lie in [0, 1]")
        ProbabilityRule(self.prob_rule, self.prob_exponent)  # reuses its checks
        if self.jobs < 1:
            raise ValueError("jobs: must be >= 1")
        if (
            self.res_tol is None
            and self.phi is None
            and self.max_iters is None
            and self.time_cap is None
        ):
            raise ValueError("stopping: set at least one of res_tol/phi/max_iters/time_cap")
        return self

    def stopping(self):
        return StoppingCriterion(
            res_tol=self.res_tol,
            phi=self.phi,
            max_iters=self.max_iters,
            time_cap=self.time_cap,
        )

    def to_dict(self):
        return asdict(self)


@dataclass
class TrialRecord:
    solver: str
    instance: str
    m: int
    n: int
    t: int | None
    trial: int
    iterations: int
    seconds: float
    terminal_res: float
    stop_reason: str
    seed: int
    forced: bool = False
    history: list | None = None
    x: np.ndarray | None = None

    def as_row(self):
        return [
            self.solver,
            self.instance,
            self.m,
            self.n,
            "" if self.t is None else self.t,
            self.trial,
            self.iterations,
            repr(self.seconds),
            repr(self.terminal_res),
            self.stop_reason,
        ]


@dataclass
class RunReport:
    config: BenchConfig
    records: list
    aggregates: dict = field(default_factory=dict)

    def compute_aggregates(self):
        its = [r.iterations for r in self.records]
        secs = [r.seconds for r in self.records]
        ress = [r.terminal_res for r in self.records]
        reasons = {}
        for r in self.records:
            reasons[r.stop_reason] = reasons.get(r.stop_reason, 0) + 1
        self.aggregates = {
            "trials": len(self.records),
            "mean_iterations": statistics.fmean(its),
            "median_iterations": statistics.median(its),
            "mean_seconds": statistics.fmean(secs),
            "mean_terminal_res": statistics.fmean(ress),
            "forced_trials": sum(1 for r in self.records if r.forced),
            "stop_reasons": reasons,
        }
        return self

    @property
    def forced_any(self):
        return any(r.forced for r in self.records)


def resolve_block_count(t, matrix):
    """Resolve the 'norm2' token to ceil(sigma_max^2) for this matrix."""
    if t == "norm2":
        t = int(math.ceil(matrix.full_block().spectral_norm_squared()))
    if not 1 <= t <= matrix.m:
        raise ValueError(f"t: resolved block count {t} outside [1, {matrix.m}]")
    return t


def _make_problem(config, trial):
    inst_seed = config.seed if config.fix_instance else config.seed + trial
    if config.instance == "random-dense":
        return random_dense_problem(config.m, config.n, inst_seed)
    if config.instance == "random-sparse":
        return random_sparse_problem(config.m, config.n, inst_seed)
    if config.instance == "mtx":
        return mtx_problem(config.path, inst_seed)
    return lp_problem(config.path)


def _make_solver(config, problem):
    """(solver config, resolved t) for one problem instance."""
    if config.solver == "rp":
        return RpConfig(), None
    if config.solver == "skm":
        return SkmConfig(beta=min(config.beta, problem.m), delta=config.delta), None
    if config.solver == "gskm":
        return GskmConfig(), None
    if config.solver == "paskm":
        return PaskmConfig(), None
    t = resolve_block_count(config.t, problem.A)
    rule = ProbabilityRule(config.prob_rule, config.prob_exponent)
    mode = "constant" if config.solver == "grabp-c" else "adaptive"
    value = config.alpha_scale if mode == "constant" else config.w
    return GrabpConfig(t=t, mode=mode, value=value, theta=config.theta, rule=rule), t


def _run_trial(config, trial):
    problem = _make_problem(config, trial)
    solver, t = _make_solver(config, problem)
    result = run(
        problem,
        solver,
        config.stopping(),
        seed=config.seed + trial,
        record_history=config.history,
    )
    return TrialRecord(
        solver=config.solver,
        instance=problem.label(),
        m=problem.m,
        n=problem.n,
        t=t,
        trial=trial,
        iterations=result.iterations,
        seconds=result.seconds,
        terminal_res=result.terminal_res,
        stop_reason=result.stop_reason,
        seed=config.seed + trial,
        forced=result.forced,
        history=result.history,
        x=result.x if config.dump_solution else None,
    )


def run_benchmark(config):
    """Execute all trials and aggregate; wall-clock forced trials still
    contribute their (capped) numbers to the aggregates."""
    config.validate()
    if config.instance == "mtx":
        # surface parse errors once, before any trial spins up
        read_matrix_market(config.path)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(_run_trial, [config] * config.trials, range(config.trials)))
    else:
        records = [_run_trial(config, trial) for trial in range(config.trials)]
    return RunReport(config=config, records=records).compute_aggregates()


def block_sweep(config, t_list):
    """Run the same instance/solver across a list of block counts.

    Returns [(t, RunReport), ...]; entries whose t exceeds the row count
    are skipped with a warning.  All runs share the base seed.
    """
    config.validate()
    reports = []
    for t in t_list:
        if isinstance(t, int) and config.m is not None and t > config.m:
            warnings.warn(f"skipping t={t}: exceeds m={config.m}", stacklevel=2)
            continue
        cfg = BenchConfig(**{**config.to_dict(), "t": t})
        reports.append((t, run_benchmark(cfg)))
    return reports


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def report_to_csv(report):
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(report.config.to_dict(), sort_keys=True) + "\n")
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for rec in report.records:
        writer.writerow(rec.as_row())
    agg = report.aggregates
    writer.writerow(
        [
            report.config.solver,
            report.records[0].instance if report.records else "",
            report.records[0].m if report.records else "",
            report.records[0].n if report.records else "",
            "",
            "mean",
            repr(agg["mean_iterations"]),
            repr(agg["mean_seconds"]),
            repr(agg["mean_terminal_res"]),
            "",
        ]
    )
    return buf.getvalue()


def report_to_json(report):
    trials = []
    for rec in report.records:
        trials.append(
            {
                "solver": rec.solver,
                "instance": rec.instance,
                "m": rec.m,
                "n": rec.n,
                "t": rec.t,
                "trial": rec.trial,
                "iterations": rec.iterations,
                "seconds": rec.seconds,
                "terminal_res": rec.terminal_res,
                "stop_reason": rec.stop_reason,
                "seed": rec.seed,
            }
        )
    return json.dumps(
        {
            "config": report.config.to_dict(),
            "trials": trials,
            "aggregates": report.aggregates,
        },
        indent=2,
        sort_keys=True,
    )


def history_to_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf)
    with_distance = any(
        rec.history and "distance" in rec.history[0] for rec in report.records
    )
    header = ["trial", "iteration", "res"] + (["distance"] if with_distance else [])
    writer.writerow(header)
    for rec in report.records:
        for entry in rec.history or []:
            row = [rec.trial, entry["iteration"], repr(entry["res"])]
            if with_distance:
                row.append(repr(entry.get("distance", "")))
            writer.writerow(row)
    return buf.getvalue()


def emit_report(report, fmt=None, path=None):
    """Write the report (and optional companions); returns written paths.

    With no path the primary document goes to stdout and nothing else is
    written.  The history companion is '<path>.history.csv'; dumped
    solutions go to '<path>.solutions.npz' keyed by trial index.
    """
    fmt = fmt or report.config.fmt
    text = report_to_csv(report) if fmt == "csv" else report_to_json(report)
    if path is None:
        print(text, end="" if text.endswith("\n") else "\n")
        return []
    written = [str(path)]
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write(text)
    if report.config.history:
        hist_path = f"{path}.history.csv"
        with open(hist_path, "wt", encoding="utf-8") as fh:
            fh.write(history_to_csv(report))
        written.append(hist_path)
    if report.config.dump_solution:
        sol_path = f"{path}.solutions.npz"
        arrays = {
            f"trial{rec.trial}": rec.x for rec in report.records if rec.x is not None
        }
        np.savez(sol_path, **arrays)
        written.append(sol_path)
    return written
