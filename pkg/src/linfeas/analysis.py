"""Ground-truth machinery: projection onto the feasible set, error-bound
constant estimation, and theoretical versus fitted convergence factors.

The projection oracle uses Dykstra's scheme over the m halfspaces rather
than plain cyclic projection: cyclic projection converges to *some*
feasible point, Dykstra converges to the *nearest* one, which is what the
distance diagnostics need.  Everything here is desk-scale tooling; none
of it runs inside the solver iteration.

The error-bound estimate ``hoffman_lower_bound`` is a sampled lower bound
L_hat <= L, where L is the smallest constant with
dist(x, S) <= L * ||(Ax - b)_+||.  Substituting L_hat for L makes the
convergence factors *smaller* than the true bounds, so fitted empirical
rates may legitimately exceed them; checks against these factors must
carry explicit slack.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .matrix import positive_part

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


__all__ = [
    "ProjectionError",
    "PolyhedronProjector",
    "ConvergenceAnalysis",
    "zeta",
    "project_onto_S",
    "distance_to_S",
    "hoffman_lower_bound",
    "exact_hoffman_constant",
    "theoretical_factor",
    "empirical_factor",
]


class ProjectionError(RuntimeError):
    """Dykstra sweep cap exceeded; carries the last iterate and its gap."""

    def __init__(self, message, x=None, gap=None):
        super().__init__(message)
        self.x = x
        self.gap = gap


def zeta(partition, rel_tol=1e-10):
    """Worst-block ratio sigma_max^2(A_I) / ||A_I||_F^2 over a partition.

    Equals 1 when every block is a single row; 1/|I| for identity-matrix
    blocks.  Bounds the overshoot of the averaged block direction and sets
    the admissible constant-stepsize range (0, 2/zeta).
    """
    worst = 0.0
    for i in range(partition.t):
        view = partition.view(i)
        ratio = view.spectral_norm_squared(rel_tol=rel_tol) / view.frob_sq
        worst = max(worst, ratio)
    return worst


@njit(cache=True)
def _dykstra_sweeps(A, b, rn2, y, p, y0, tol, max_cycles):  # pragma: no cover
    """Cyclic Dykstra sweeps, in place; returns (cycles_used, converged).

    Convergence requires both the iterate and the correction vectors to
    settle over a full sweep: the iterate alone can stall for many sweeps
    while large corrections are still unwinding, which would otherwise
    report a feasible but non-nearest point.
    """
    m, n = A.shape
    for cycle in range(1, max_cycles + 1):
        for j in range(n):
            y0[j] = y[j]
        corr_move_sq = 0.0
        for i in range(m):
            v = -b[i]
            for j in range(n):
                zj = y[j] + p[i, j]
                v += A[i, j] * zj
            if v > 0.0:
                s = v / rn2[i]
                for j in range(n):
                    zj = y[j] + p[i, j]
                    aij = s * A[i, j]
                    d = aij - p[i, j]
                    corr_move_sq += d * d
                    y[j] = zj - aij
                    p[i, j] = aij
            else:
                for j in range(n):
                    d = p[i, j]
                    corr_move_sq += d * d
                    y[j] = y[j] + d
                    p[i, j] = 0.0
        move_sq = 0.0
        for j in range(n):
            d = y[j] - y0[j]
            move_sq += d * d
        if move_sq < tol * tol and corr_move_sq < tol * tol:
            return cycle, True
    return max_cycles, False


class PolyhedronProjector:
    """Reusable projection oracle for one feasibility problem.

    Densifies the matrix once (these diagnostics are desk scale) and runs
    Dykstra's alternating projections with per-halfspace corrections.
    When the problem carries a strictly feasible witness, a primal
    active-set solve is tried first and accepted only under a full
    optimality certificate; Dykstra remains the unconditional fallback.
    """

    def __init__(self, problem):
        self.A = problem.A.toarray()
        self.b = np.asarray(problem.b, dtype=float)
        self.rn2 = problem.A.row_norms_sq.copy()
        self.m, self.n = self.A.shape
        self.start = None
        if problem.certificate is not None:
            cert = np.asarray(problem.certificate, dtype=float)
            margin = float(np.max(self.A @ cert - self.b))
            if margin < -1e-12 * (1.0 + float(np.abs(self.b).max())):
                self.start = cert

    def project(self, x, tol=1e-10, max_cycles=100_000, polish=True):
        """Nearest point of {y : Ay <= b} to x, to within ``tol``.

        Sweeps until a full cycle moves the iterate by less than the
        movement tolerance *and* the returned point violates no constraint
        by ``tol`` or more; the movement tolerance tightens if the
        violation check fails.  Raises :class:`ProjectionError` with the
        last iterate if the cycle cap is exhausted.

        Between sweep chunks the nonzero Dykstra corrections are used as
        an active-set guess for an exact equality-constrained solve; the
        candidate is accepted only if the full optimality conditions
        (feasibility, tight active rows, nonnegative multipliers) verify,
        in which case it *is* the projection to solver precision.  Far
        starting points, where plain Dykstra unwinds its corrections over
        astronomically many sweeps, certify within a few chunks this way.
        Set ``polish=False`` for the unassisted iteration.
        """
        x = np.asarray(x, dtype=float)
        y = x.copy()
        p = np.zeros((self.m, self.n))
        y0 = np.empty(self.n)
        remaining = max_cycles
        move_tol = tol
        worst = np.inf
        chunk = 25
        while remaining > 0:
            used, converged = _dykstra_sweeps(
                self.A, self.b, self.rn2, y, p, y0, move_tol, min(chunk, remaining)
            )
            remaining -= used
            worst = float(np.max(self.A @ y - self.b))
            if worst < tol and converged:
                return y
            if polish:
                polished = self._active_set_polish(x, y, tol)
                if polished is not None:
                    return polished
            if converged:
                # sweep movement stalled but the point still violates:
                # tighten the movement tolerance and keep going
                move_tol *= 0.1
        if worst < tol:
            return y
        gap = float(np.max(positive_part(self.A @ y - self.b)))
        raise ProjectionError(
            f"projection did not converge within {max_cycles} sweeps (gap {gap:.3e})",
            x=y,
            gap=gap,
        )

    def _active_set_polish(self, x, y, tol):
        """Exact projection attempt via a small greedy active-set loop.

        Seeds a working set from the rows that are tight or violated at
        the current sweep iterate, repeatedly solves the equality-
        constrained projection on it (dropping negative-multiplier rows,
        adding the most violated row), and returns the candidate only when
        the full optimality conditions verify: multipliers nonnegative,
        working rows tight, all rows feasible to below ``tol``.  Any other
        outcome returns None and sweeping continues, so correctness never
        depends on this acceleration.
        """
        n = self.n
        scale = 1.0 + float(np.linalg.norm(x))
        tight_tol = 1e-9 * scale
        resid_y = self.A @ y - self.b
        order = np.argsort(resid_y)[::-1]
        working = [int(i) for i in order[:n] if resid_y[i] > -tight_tol]

        for _ in range(4 * n + 16):
            if working:
                sub = self.A[working]
                gram = sub @ sub.T
                mu = np.linalg.lstsq(gram, sub @ x - self.b[working], rcond=None)[0]
                drop = int(np.argmin(mu))
                if mu[drop] < -1e-12 * (1.0 + float(np.max(np.abs(mu)))):
                    working.pop(drop)
                    continue
                cand = x - sub.T @ mu
                if float(np.max(np.abs(sub @ cand - self.b[working]))) > tight_tol:
                    return None  # dependent or inconsistent working set
            else:
                cand = x
            resid = self.A @ cand - self.b
            worst = int(np.argmax(resid))
            if resid[worst] < tol:
                return cand
            if worst in working:
                return None
            if len(working) == n:  # make room; a ratio-test-free simplification
                sub_mu = np.linalg.lstsq(
                    self.A[working] @ self.A[working].T,
                    self.A[working] @ x - self.b[working],
                    rcond=None,
                )[0]
                working.pop(int(np.argmin(sub_mu)))
            working.append(worst)
        return None

    def distance(self, x, tol=1e-10, max_cycles=100_000):
        return float(np.linalg.norm(np.asarray(x, float) - self.project(x, tol, max_cycles)))


def project_onto_S(problem, x, tol=1e-10, max_cycles=100_000):
    """One-shot wrapper around :class:`PolyhedronProjector.project`."""
    return PolyhedronProjector(problem).project(x, tol=tol, max_cycles=max_cycles)


def distance_to_S(problem, x, tol=1e-10, max_cycles=100_000):
    """||x - P_S(x)||_2 via the Dykstra oracle."""
    return float(np.linalg.norm(np.asarray(x, float) - project_onto_S(problem, x, tol, max_cycles)))


def hoffman_lower_bound(
    problem,
    sample_count=100,
    seed=0,
    radii=(0.1, 1.0, 10.0),
    tol=1e-10,
    projector=None,
):
    """Sampled lower bound on the residual-to-distance error constant.

    Draws Gaussian clouds centered at the problem's feasibility witness
    at the given radii (scaled by the witness norm) and maximizes
    dist(x, S) / ||(Ax - b)_+|| over the infeasible samples.  Radii are
    assigned round robin, so enlarging ``sample_count`` extends the same
    sample sequence and the estimate is monotone in it.
    """
    if projector is None:
        projector = PolyhedronProjector(problem)
    if problem.certificate is not None:
        center = np.asarray(problem.certificate, dtype=float)
    else:
        center = projector.project(np.zeros(problem.n), tol=tol)
    base = float(np.linalg.norm(center))
    if base == 0.0:
        base = 1.0
    rng = np.random.default_rng(seed)
    best = 0.0
    skipped = 0
    for i in range(sample_count):
        radius = radii[i % len(radii)] * base
        x = center + radius * rng.standard_normal(problem.n)
        violation = float(np.linalg.norm(positive_part(problem.residual(x))))
        if violation <= 0.0:
            skipped += 1
            continue
        ratio = projector.distance(x, tol=tol) / violation
        best = max(best, ratio)
    if best == 0.0:
        raise ValueError(
            f"all {sample_count} samples were feasible; enlarge the radii"
        )
    return best


def exact_hoffman_constant(problem, max_m=12, max_n=4):
    """Brute-force error-bound constant for tiny systems.

    Enumerates every row subset with full row rank and returns the
    largest 1 / sigma_min over them.  Exponential in m; guarded to
    m <= 12, n <= 4.
    """
    m, n = problem.m, problem.n
    if m > max_m or n > max_n:
        raise ValueError(f"exact computation limited to m<={max_m}, n<={max_n}")
    A = problem.A.toarray()
    best = 0.0
    for k in range(1, min(m, n) + 1):
        for subset in itertools.combinations(range(m), k):
            sub = A[list(subset)]
            sigmas = np.linalg.svd(sub, compute_uv=False)
            if sigmas[-1] > 1e-12 * sigmas[0]:  # full row rank
                best = max(best, 1.0 / float(sigmas[-1]))
    if best == 0.0:
        raise ValueError("matrix has no full-row-rank row subset")
    return best


def theoretical_factor(policy, zeta_value, hoffman, frob_sq):
    """Per-iteration expected contraction factor predicted by the bounds.

    Constant stepsize alpha: 1 - (2*alpha - alpha^2*zeta) / (L^2 ||A||_F^2);
    adaptive w: 1 - (2*w - w^2) / (zeta L^2 ||A||_F^2).  Both minimize to
    1 - 1 / (zeta L^2 ||A||_F^2) at alpha = 1/zeta and w = 1.  The result
    is clamped to [0, 1).
    """
    if hoffman <= 0.0 or frob_sq <= 0.0 or zeta_value <= 0.0:
        raise ValueError("hoffman, frob_sq, and zeta must be positive")
    scale = hoffman * hoffman * frob_sq
    if policy.kind == "constant":
        if not 0.0 < policy.alpha * zeta_value < 2.0:
            raise ValueError("alpha outside (0, 2/zeta)")
        rate = (2.0 * policy.alpha - policy.alpha**2 * zeta_value) / scale
    else:
        rate = (2.0 * policy.w - policy.w**2) / (zeta_value * scale)
    factor = 1.0 - rate
    return float(min(max(factor, 0.0), np.nextafter(1.0, 0.0)))


def empirical_factor(history):
    """Fitted per-iteration ratio from a squared-distance history.

    Least-squares slope of ln(d^2) against the iteration index,
    exponentiated.  The history is truncated at its first nonpositive
    entry; at least three points must remain.
    """
    values = np.asarray(history, dtype=float)
    nonpos = np.flatnonzero(values <= 0.0)
    if nonpos.size:
        values = values[: nonpos[0]]
    if values.size < 3:
        raise ValueError("need at least three positive history entries")
    ks = np.arange(values.size)
    slope = np.polyfit(ks, np.log(values), 1)[0]
    return float(np.exp(slope))


@dataclass
class ConvergenceAnalysis:
    """Bundle of the rate diagnostics for one problem/partition/policy."""

    zeta: float
    hoffman_lower: float
    theoretical: float
    empirical: float | None
    frob_sq: float


def convergence_analysis(problem, partition, policy, history=None, **hoffman_kwargs):
    z = zeta(partition)
    lhat = hoffman_lower_bound(problem, **hoffman_kwargs)
    return ConvergenceAnalysis(
        zeta=z,
        hoffman_lower=lhat,
        theoretical=theoretical_factor(policy, z, lhat, problem.A.frob_sq),
        empirical=None if history is None else empirical_factor(history),
        frob_sq=problem.A.frob_sq,
    )
