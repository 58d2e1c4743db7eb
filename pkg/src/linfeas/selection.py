"""Row partitioning and greedy randomized block selection.

One iteration of the greedy block method scores every block by its
normalized violation, admits the blocks whose score clears an adaptive
threshold, and samples one admitted block from a residual-weighted
distribution.  Everything here is a pure function of its inputs plus an
explicit generator handle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import BlockView, positive_part

__all__ = [
    "AlreadyFeasibleError",
    "Partition",
    "ProbabilityRule",
    "GreedySelection",
    "random_partition",
    "compute_epsilon",
    "greedy_index_set",
    "block_probabilities",
    "sample_block",
    "evaluate_selection",
]


class AlreadyFeasibleError(RuntimeError):
    """Selection was asked to run on an iterate with zero violation."""


@dataclass(frozen=True)
class ProbabilityRule:
    """How admitted blocks are weighted when sampling.

    kind "pnorm" weights block i by ||r_i||_p^p; kind "norm2pow" by
    ||r_i||_2^mu.  The two coincide for p == mu == 2, which is the
    default used throughout the benchmarks.
    """

    kind: str = "pnorm"
    exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in ("pnorm", "norm2pow"):
            raise ValueError(f"unknown probability rule {self.kind!r}")
        if not self.exponent > 0:
            raise ValueError("probability exponent must be positive")


class Partition:
    """A disjoint cover {I_1, ..., I_t} of the row indices of a matrix.

    Built from a uniform random permutation split into t contiguous
    chunks whose sizes differ by at most one.  Blocks are exposed both as
    index arrays and as cached :class:`BlockView` objects.
    """

    def __init__(self, matrix, perm, t):
        m = matrix.m
        perm = np.asarray(perm, dtype=np.intp)
        if perm.shape != (m,) or np.any(np.sort(perm) != np.arange(m)):
            raise ValueError("perm must be a permutation of range(m)")
        if not 1 <= t <= m:
            raise ValueError(f"t must be in [1, m]; got t={t}, m={m}")
        self.matrix = matrix
        self.t = t
        self.perm = perm
        self.bounds = np.array([(i * m) // t for i in range(t + 1)], dtype=np.intp)
        # per-block squared Frobenius norms, accumulated in block order
        self.frob_sq = np.add.reduceat(matrix.row_norms_sq[perm], self.bounds[:-1])
        self._views = [None] * t

    @property
    def m(self):
        return self.matrix.m

    def block_rows(self, i):
        return self.perm[self.bounds[i] : self.bounds[i + 1]]

    @property
    def blocks(self):
        return [self.block_rows(i) for i in range(self.t)]

    def view(self, i):
        if self._views[i] is None:
            self._views[i] = BlockView(self.matrix, self.block_rows(i))
        return self._views[i]

    def views(self):
        return [self.view(i) for i in range(self.t)]

    def block_sums(self, values):
        """Per-block sums of a length-m vector (in block order)."""
        return np.add.reduceat(values[self.perm], self.bounds[:-1])


def random_partition(matrix, t, seed):
    """Partition rows into t blocks via a seeded uniform permutation."""
    if t > matrix.m:
        raise ValueError(f"t={t} exceeds the number of rows m={matrix.m}")
    rng = np.random.default_rng(seed)
    return Partition(matrix, rng.permutation(matrix.m), t)


def compute_epsilon(block_scores, total_residual_sq, frob_sq_total, theta=0.5):
    """Adaptive admission threshold.

    epsilon = theta * max(scores) / total + (1 - theta) / frob_total,
    where scores are the per-block normalized violations
    ||(A_I x - b_I)_+||^2 / ||A_I||_F^2 and total is ||(Ax - b)_+||^2.
    theta = 1/2 is the default; theta = 0 ignores the scores entirely.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if total_residual_sq <= 0.0:
        raise AlreadyFeasibleError("iterate already satisfies every inequality")
    best = float(np.max(block_scores))
    return theta * best / total_residual_sq + (1.0 - theta) / frob_sq_total


def greedy_index_set(block_scores, epsilon_k, total_residual_sq):
    """Blocks whose score meets epsilon * total, argmax always included.

    The argmax block satisfies the threshold in exact arithmetic; it is
    inserted unconditionally so floating-point round-off can never leave
    the admitted set empty.  Ties in the max resolve to the smallest
    index, which does not change the threshold value.
    """
    block_scores = np.asarray(block_scores, dtype=float)
    admitted = np.flatnonzero(block_scores >= epsilon_k * total_residual_sq)
    best = int(np.argmax(block_scores))
    if best not in admitted:
        admitted = np.union1d(admitted, [best])
    return admitted


def block_probabilities(admitted_norms, rule):
    """Normalize per-admitted-block residual norms into probabilities.

    ``admitted_norms`` holds the p-norm of each admitted block's residual
    for the "pnorm" rule, or the 2-norm for "norm2pow"; entries are raised
    to the rule's exponent and normalized to sum to one.
    """
    admitted_norms = np.asarray(admitted_norms, dtype=float)
    if admitted_norms.size == 0:
        raise ValueError("no admitted blocks")
    weights = admitted_norms**rule.exponent
    total = float(np.sum(weights))
    if not total > 0.0:
        raise RuntimeError("admitted blocks all have zero residual norm")
    return weights / total


def sample_block(probabilities, rng):
    """Inverse-CDF draw: one uniform variate against the cumulative sums."""
    probabilities = np.asarray(probabilities, dtype=float)
    cum = np.cumsum(probabilities)
    u = rng.random()
    idx = int(np.searchsorted(cum, u, side="right"))
    support = np.flatnonzero(probabilities > 0.0)
    if idx > support[-1]:
        idx = int(support[-1])
    return idx


@dataclass
class GreedySelection:
    """One iteration's worth of selection state (threshold through draw)."""

    epsilon_k: float
    theta: float
    block_scores: np.ndarray
    block_residual_sq: np.ndarray
    total_residual_sq: float
    u_k: np.ndarray
    criterion: ProbabilityRule
    probabilities: np.ndarray


def evaluate_selection(partition, residual, theta=0.5, rule=ProbabilityRule()):
    """Score blocks, admit by threshold, and build the sampling distribution.

    ``residual`` is the full signed residual Ax - b; the positive part is
    taken here.  Raises :class:`AlreadyFeasibleError` when nothing is
    violated (callers must stop before selecting).
    """
    rp = positive_part(residual)[partition.perm]
    sums_sq = np.add.reduceat(rp * rp, partition.bounds[:-1])
    total = float(np.sum(sums_sq))
    scores = sums_sq / partition.frob_sq
    epsilon = compute_epsilon(scores, total, partition.matrix.frob_sq, theta)
    admitted = greedy_index_set(scores, epsilon, total)

    if rule.kind == "pnorm":
        p = rule.exponent
        if p == 2.0:
            admitted_norms = np.sqrt(sums_sq[admitted])
        else:
            sums_p = np.add.reduceat(rp**p, partition.bounds[:-1])
            admitted_norms = sums_p[admitted] ** (1.0 / p)
    else:
        admitted_norms = np.sqrt(sums_sq[admitted])

    probs = np.zeros(partition.t)
    probs[admitted] = block_probabilities(admitted_norms, rule)
    return GreedySelection(
        epsilon_k=epsilon,
        theta=theta,
        block_scores=scores,
        block_residual_sq=sums_sq,
        total_residual_sq=total,
        u_k=admitted,
        criterion=rule,
        probabilities=probs,
    )
