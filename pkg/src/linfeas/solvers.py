"""Iteration kernels and the run loop with stopping rules.

Four methods are provided: the randomized projection baseline (``rp``),
sampling with a most-violated pick among the sample (``skm``), and the
greedy randomized average block projection method with constant
(``grabp-c``) or adaptive (``grabp-a``) extrapolated stepsizes.  Two
further method names, ``gskm`` and ``paskm``, are reserved interfaces
whose update rules are not implemented here; calling them raises.

Every run owns a single seeded PCG64 generator.  The randomness protocol
is fixed: the block method first draws one permutation for the partition,
then one uniform variate per iteration for the block draw; ``rp`` draws
one uniform variate per iteration; ``skm`` draws ``beta`` integers per
iteration via a partial Fisher-Yates pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .matrix import positive_part
from .selection import (
    AlreadyFeasibleError,
    Partition,
    ProbabilityRule,
    evaluate_selection,
    sample_block,
)

__all__ = [
    "SolverState",
    "StepsizePolicy",
    "StoppingCriterion",
    "StepInfo",
    "TrialResult",
    "RpConfig",
    "SkmConfig",
    "GrabpConfig",
    "GskmConfig",
    "PaskmConfig",
    "GskmParams",
    "PaskmParams",
    "res",
    "gap_ratio",
    "rp_step",
    "skm_step",
    "grabp_step",
    "gskm_step",
    "paskm_step",
    "run",
]


# ---------------------------------------------------------------------------
# state, policies, stopping
# ---------------------------------------------------------------------------


@dataclass
class SolverState:
    """Current iterate plus the cached signed residual Ax - b."""

    x: np.ndarray
    k: int
    rng: np.random.Generator
    residual: np.ndarray

    @classmethod
    def start(cls, problem, x0=None, rng=None, seed=None):
        if rng is None:
            rng = np.random.default_rng(seed)
        x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
        return cls(x=x, k=0, rng=rng, residual=problem.residual(x))

    def refresh(self, problem):
        self.residual = problem.residual(self.x)

    def violation_sq(self):
        rp = positive_part(self.residual)
        return float(np.dot(rp, rp))


@dataclass(frozen=True)
class StepsizePolicy:
    """Extrapolation stepsize: a constant alpha or the adaptive rule.

    The constant kind requires 0 < alpha * zeta < 2, where zeta is the
    worst-block ratio sigma_max^2 / ||.||_F^2 over the partition in use.
    The adaptive kind requires 0 < w < 2 and needs no zeta.
    """

    kind: str
    alpha: float | None = None
    w: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.alpha is None or self.zeta is None:
                raise ValueError("constant stepsize needs alpha and zeta")
            if not 0.0 < self.alpha * self.zeta < 2.0:
                raise ValueError(
                    f"alpha * zeta = {self.alpha * self.zeta:g} outside (0, 2)"
                )
        elif self.kind == "adaptive":
            if self.w is None or not 0.0 < self.w < 2.0:
                raise ValueError("adaptive stepsize needs w in (0, 2)")
        else:
            raise ValueError(f"unknown stepsize kind {self.kind!r}")

    @classmethod
    def constant(cls, alpha, zeta):
        return cls(kind="constant", alpha=alpha, zeta=zeta)

    @classmethod
    def constant_scaled(cls, scale, zeta):
        """alpha = scale / zeta; scale is the dimensionless product alpha*zeta."""
        return cls(kind="constant", alpha=scale / zeta, zeta=zeta)

    @classmethod
    def adaptive(cls, w):
        return cls(kind="adaptive", w=w)


@dataclass(frozen=True)
class StoppingCriterion:
    """First rule to fire wins; checked in the order res, gap, iters, time."""

    res_tol: float | None = 1e-8
    phi: float | None = None
    max_iters: int | None = None
    time_cap: float | None = 50.0

    def __post_init__(self):
        if (
            self.res_tol is None
            and self.phi is None
            and self.max_iters is None
            and self.time_cap is None
        ):
            raise ValueError("at least one stopping bound must be set")
        for name in ("res_tol", "phi", "time_cap"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class StepInfo:
    """What a single step actually did (for tests and instrumentation)."""

    moved: bool
    row: int | None = None
    block: int | None = None
    alpha: float | None = None
    block_residual_sq: float | None = None
    block_frob_sq: float | None = None


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def res_denominator(problem):
    """(denominator, is_absolute) for the relative violation metric."""
    bnorm = float(np.linalg.norm(problem.b))
    if bnorm > 0.0:
        return bnorm, False
    return 1.0, True


def res(problem, x):
    """Relative violation ||(Ax - b)_+||_2 / ||b||_2.

    Falls back to the absolute violation norm when b == 0, where the
    relative form is undefined.
    """
    denom, _ = res_denominator(problem)
    rp = positive_part(problem.residual(x))
    return float(np.linalg.norm(rp)) / denom


def gap_ratio(problem, x, x0):
    """max(Ax - b) / max(Ax0 - b), the tolerance-gap stopping metric."""
    g0 = float(np.max(problem.residual(x0)))
    if g0 <= 0.0:
        raise AlreadyFeasibleError("x0 already satisfies the gap rule")
    return float(np.max(problem.residual(x))) / g0


# ---------------------------------------------------------------------------
# step kernels
# ---------------------------------------------------------------------------


def _row_entries(A, i):
    """(indices, values) of row i; indices is None for dense storage."""
    if not A.is_sparse:
        return None, A._dense[i]
    csr = A._csr
    s, e = csr.indptr[i], csr.indptr[i + 1]
    return csr.indices[s:e], csr.data[s:e]


def _subtract_scaled_row(A, x, i, gamma):
    idx, vals = _row_entries(A, i)
    if idx is None:
        x -= gamma * vals
    else:
        x[idx] -= gamma * vals


def _row_sampling_cum(A):
    cum = np.cumsum(A.row_norms_sq)
    return cum / cum[-1]


def rp_step(problem, state, _cum=None):
    """One randomized-projection step.

    Draws row i with probability ||A_i||^2 / ||A||_F^2 and projects the
    iterate onto {x : A_i x <= b_i}; an already-satisfied draw leaves the
    iterate unchanged (but still counts as an iteration).
    """
    A = problem.A
    if _cum is None:
        _cum = _row_sampling_cum(A)
    u = state.rng.random()
    i = min(int(np.searchsorted(_cum, u, side="right")), A.m - 1)
    viol = float(state.residual[i])
    info = StepInfo(moved=viol > 0.0, row=i)
    if viol > 0.0:
        _subtract_scaled_row(A, state.x, i, viol / A.row_norms_sq[i])
        state.refresh(problem)
    state.k += 1
    return info


def _sample_without_replacement(m, beta, rng):
    # partial Fisher-Yates: only the first beta slots are shuffled
    pool = np.arange(m)
    for j in range(beta):
        r = j + int(rng.integers(m - j))
        pool[j], pool[r] = pool[r], pool[j]
    return pool[:beta]


def skm_step(problem, state, beta, delta):
    """One sampling step with a most-violated pick inside the sample.

    ``beta`` rows are sampled uniformly without replacement; among them
    the row maximizing the norm-scaled violation (A_i x - b_i)_+ / ||A_i||
    is selected and a relaxed projection with factor ``delta`` is taken.
    beta = m gives the deterministic most-violated rule; beta = 1,
    delta = 1 degenerates to a uniform-row projection step.
    """
    A = problem.A
    if not 1 <= beta <= A.m:
        raise ValueError(f"beta must be in [1, m]; got {beta}")
    if not 0.0 < delta < 2.0:
        raise ValueError(f"delta must be in (0, 2); got {delta}")
    rows = _sample_without_replacement(A.m, beta, state.rng)
    scaled = positive_part(state.residual[rows]) / np.sqrt(A.row_norms_sq[rows])
    i = int(rows[int(np.argmax(scaled))])
    viol = float(state.residual[i])
    info = StepInfo(moved=viol > 0.0, row=i)
    if viol > 0.0:
        _subtract_scaled_row(A, state.x, i, delta * viol / A.row_norms_sq[i])
        state.refresh(problem)
    state.k += 1
    return info


def grabp_step(problem, partition, policy, state, theta=0.5, rule=ProbabilityRule()):
    """One greedy randomized average block projection step.

    Scores all blocks from the cached residual, admits the ones above the
    adaptive threshold, samples one, and moves along the block's averaged
    projection direction scaled by the policy's stepsize.  Raises
    :class:`AlreadyFeasibleError` when the iterate has no violation; the
    run loop stops before that can happen.
    """
    sel = evaluate_selection(partition, state.residual, theta=theta, rule=rule)
    i_k = sample_block(sel.probabilities, state.rng)
    block = partition.view(i_k)
    r_blk = positive_part(state.residual[block.rows])
    g = block.transpose_apply(r_blk)
    frob = float(partition.frob_sq[i_k])
    num_sq = float(sel.block_residual_sq[i_k])
    if num_sq <= 0.0:
        raise RuntimeError("selected block has zero violation; selection is broken")
    if policy.kind == "constant":
        alpha = policy.alpha
    else:
        gg = float(np.dot(g, g))
        # nonzero whenever the block violation is nonzero
        alpha = policy.w * num_sq * frob / gg
    state.x -= (alpha / frob) * g
    state.k += 1
    state.refresh(problem)
    return StepInfo(
        moved=True,
        block=i_k,
        alpha=alpha,
        block_residual_sq=num_sq,
        block_frob_sq=frob,
    )


@dataclass(frozen=True)
class GskmParams:
    """Parameter record for the generalized sampling method (reserved)."""

    beta: int = 50
    delta: float = 1.0
    momentum: float = 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class PaskmParams:
    """Parameter record for the accelerated sampling method (reserved)."""

    beta: int = 50
    delta: float = 1.0
    momentum: float = 0.0
    tau: float = 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def gskm_step(problem, state, params):
    """Reserved interface; the update rule is not implemented."""
    raise NotImplementedError(
        "gskm update rule is not implemented; no fallback is provided"
    )


def paskm_step(problem, state, params):
    """Reserved interface; the update rule is not implemented."""
    raise NotImplementedError(
        "paskm update rule is not implemented; no fallback is provided"
    )


# ---------------------------------------------------------------------------
# method configs and the run loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RpConfig:
    name: str = "rp"

    def make_stepper(self, problem, rng):
        cum = _row_sampling_cum(problem.A)
        return lambda state: rp_step(problem, state, _cum=cum)


@dataclass(frozen=True)
class SkmConfig:
    beta: int = 50
    delta: float = 1.0
    name: str = "skm"

    def make_stepper(self, problem, rng):
        beta = min(self.beta, problem.m)
        return lambda state: skm_step(problem, state, beta, self.delta)


@dataclass(frozen=True)
class GrabpConfig:
    """Block method config; ``value`` is alpha * zeta for the constant
    kind (the stepsize becomes value / zeta) and w for the adaptive kind."""

    t: int
    mode: str = "adaptive"
    value: float = 1.0
    theta: float = 0.5
    rule: ProbabilityRule = field(default_factory=ProbabilityRule)

    @property
    def name(self):
        return "grabp-c" if self.mode == "constant" else "grabp-a"

    def __post_init__(self):
        if self.mode not in ("constant", "adaptive"):
            raise ValueError(f"unknown grabp mode {self.mode!r}")
        if not 0.0 < self.value < 2.0:
            raise ValueError("stepsize value must lie in (0, 2)")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    def make_stepper(self, problem, rng):
        partition = Partition(problem.A, rng.permutation(problem.m), self.t)
        if self.mode == "constant":
            from .analysis import zeta

            policy = StepsizePolicy.constant_scaled(self.value, zeta(partition))
        else:
            policy = StepsizePolicy.adaptive(self.value)
        return lambda state: grabp_step(
            problem, partition, policy, state, theta=self.theta, rule=self.rule
        )


@dataclass(frozen=True)
class GskmConfig:
    params: GskmParams = field(default_factory=GskmParams)
    name: str = "gskm"

    def make_stepper(self, problem, rng):
        # fail before the run loop starts rather than on the first step
        raise NotImplementedError(
            "gskm update rule is not implemented; no fallback is provided"
        )


@dataclass(frozen=True)
class PaskmConfig:
    params: PaskmParams = field(default_factory=PaskmParams)
    name: str = "paskm"

    def make_stepper(self, problem, rng):
        raise NotImplementedError(
            "paskm update rule is not implemented; no fallback is provided"
        )


@dataclass
class TrialResult:
    """Outcome of one run: counts, timing, terminal metric, history."""

    iterations: int
    seconds: float
    terminal_res: float
    stop_reason: str
    seed: int | None
    res_absolute: bool = False
    forced: bool = False
    history: list | None = None
    x: np.ndarray | None = None


def run(
    problem,
    config,
    stopping,
    seed=None,
    record_history=False,
    distance_oracle=None,
    x0=None,
):
    """Iterate a method until a stopping rule fires.

    Rules are checked between iterations in the fixed order: relative
    violation, tolerance gap, iteration budget, wall-clock cap.  The
    wall-clock cap marks the result as forced.  Timing covers the solve
    loop only.
    """
    rng = np.random.default_rng(seed)
    denom, res_absolute = res_denominator(problem)
    stepper = config.make_stepper(problem, rng)
    state = SolverState.start(problem, x0=x0, rng=rng)

    gap0 = None
    if stopping.phi is not None:
        gap0 = float(np.max(state.residual))

    history = [] if record_history else None
    start = time.perf_counter()
    reason = None
    res_val = None
    while True:
        rp = positive_part(state.residual)
        res_val = float(np.linalg.norm(rp)) / denom
        if history is not None:
            rec = {"iteration": state.k, "res": res_val}
            if distance_oracle is not None:
                rec["distance"] = float(distance_oracle(state.x))
            history.append(rec)
        if stopping.res_tol is not None and res_val <= stopping.res_tol:
            reason = "res"
            break
        if stopping.phi is not None:
            if gap0 <= 0.0 or float(np.max(state.residual)) <= stopping.phi * gap0:
                reason = "gap"
                break
        if stopping.max_iters is not None and state.k >= stopping.max_iters:
            reason = "max_iters"
            break
        if (
            stopping.time_cap is not None
            and time.perf_counter() - start > stopping.time_cap
        ):
            reason = "time"
            break
        stepper(state)
    seconds = time.perf_counter() - start

    return TrialResult(
        iterations=state.k,
        seconds=seconds,
        terminal_res=res_val,
        stop_reason=reason,
        seed=seed,
        res_absolute=res_absolute,
        forced=reason == "time",
        history=history,
        x=state.x,
    )
