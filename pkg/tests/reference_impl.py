"""Naive, straight-line reimplementation of the greedy average block
projection iteration, used as an independent oracle.

Deliberately written against plain dense numpy arrays with no shared code
beyond numpy itself: its own partitioning, scoring, thresholding,
sampling, and update arithmetic.  It must consume randomness through the
same protocol as the library (one permutation up front, one uniform
variate per iteration) so that seeded sequences are comparable.
"""

import numpy as np


def naive_partition(m, t, rng):
    perm = rng.permutation(m)
    blocks = []
    for i in range(1, t + 1):
        lo = ((i - 1) * m) // t
        hi = (i * m) // t
        blocks.append(perm[lo:hi])
    return blocks


def naive_iterates(A, b, x0, t, seed, steps, stepsize_kind, stepsize_value,
                   rule_kind="pnorm", exponent=2.0, theta=0.5, zeta=None,
                   min_res=0.0):
    """Run the block method literally and return the iterate list.

    ``stepsize_value`` is alpha itself for the constant kind (zeta is only
    used to sanity-check the range) and w for the adaptive kind.  Stops
    early if the violation norm drops to ``min_res`` or below.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    rng = np.random.default_rng(seed)
    blocks = naive_partition(m, t, rng)

    frob = [float(np.sum(A[blk] ** 2)) for blk in blocks]
    frob_total = float(np.sum(A**2))

    x = np.array(x0, dtype=float)
    iterates = [x.copy()]
    for _ in range(steps):
        residual = A @ x - b
        rpos = np.maximum(residual, 0.0)
        if float(np.linalg.norm(rpos)) <= min_res:
            break

        block_res = [rpos[blk] for blk in blocks]
        numer = [float(np.sum(r * r)) for r in block_res]
        total = float(np.sum(numer))
        scores = [numer[i] / frob[i] for i in range(t)]

        eps = theta * max(scores) / total + (1.0 - theta) / frob_total
        admitted = [i for i in range(t) if scores[i] >= eps * total]
        best = int(np.argmax(scores))
        if best not in admitted:
            admitted.append(best)
            admitted.sort()

        weights = np.zeros(t)
        for i in admitted:
            if rule_kind == "pnorm":
                weights[i] = np.sum(np.abs(block_res[i]) ** exponent)
            else:
                weights[i] = float(np.linalg.norm(block_res[i])) ** exponent
        probs = weights / float(np.sum(weights))

        u = rng.random()
        cum = np.cumsum(probs)
        i_k = int(np.searchsorted(cum, u, side="right"))
        support = [i for i in range(t) if probs[i] > 0.0]
        if i_k > support[-1]:
            i_k = support[-1]

        blk = blocks[i_k]
        r = rpos[blk]
        direction = A[blk].T @ r
        if stepsize_kind == "constant":
            alpha = stepsize_value
        else:
            alpha = (
                stepsize_value
                * numer[i_k]
                * frob[i_k]
                / float(np.dot(direction, direction))
            )
        x = x - (alpha / frob[i_k]) * direction
        iterates.append(x.copy())
    return iterates


def naive_rp_iterates(A, b, x0, seed, steps):
    """Literal randomized-projection reference (norm-squared row draws)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, _ = A.shape
    rng = np.random.default_rng(seed)
    rn2 = np.sum(A * A, axis=1)
    cum = np.cumsum(rn2) / np.sum(rn2)
    x = np.array(x0, dtype=float)
    iterates = [x.copy()]
    for _ in range(steps):
        u = rng.random()
        i = min(int(np.searchsorted(cum, u, side="right")), m - 1)
        viol = float(A[i] @ x - b[i])
        if viol > 0.0:
            x = x - (viol / rn2[i]) * A[i]
        iterates.append(x.copy())
    return iterates
