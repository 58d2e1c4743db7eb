"""Row-oriented matrix storage and the residual kernels shared by all solvers.

A :class:`RowMatrix` wraps either a dense row-major array or a CSR sparse
matrix and caches the squared Euclidean norm of every row.  All solvers in
this package are row-action methods, so row/block reads are the only access
pattern that has to be fast.  :class:`BlockView` exposes a fixed subset of
rows together with its accumulated squared Frobenius norm and a lazily
computed largest squared singular value.

Both classes are immutable after construction and safe to share across
threads; the lazy singular-value cache is guarded by a lock so it is
computed exactly once.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np
from scipy import sparse

__all__ = [
    "RowMatrix",
    "BlockView",
    "positive_part",
    "block_residual",
    "transpose_apply_block",
    "spectral_norm_squared",
]


def positive_part(v):
    """Componentwise max(0, v[i]); the violation measure for Ax <= b."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def _row_norms_sq_dense(a):
    # einsum does one fused pass; rows are short enough that accumulation
    # error stays far below the 1e-12 storage-equivalence tolerance.
    return np.einsum("ij,ij->i", a, a)


def _row_norms_sq_csr(a):
    data_sq = a.data * a.data
    out = np.add.reduceat(data_sq, a.indptr[:-1], dtype=float)
    # reduceat yields garbage for empty rows (indptr[i] == indptr[i+1])
    row_counts = np.diff(a.indptr)
    out[row_counts == 0] = 0.0
    return out


class RowMatrix:
    """An m-by-n matrix with cached row norms, dense or CSR backed.

    Construct via :meth:`from_dense` or :meth:`from_csr`.  Matrices with a
    zero row are rejected: every solver divides by row or block norms, and
    a zero row can never be part of a meaningful inequality system.

    Attributes
    ----------
    m, n : int
        Row and column counts.
    row_norms_sq : ndarray, shape (m,)
        ||A_i||_2^2 for every row, computed once at construction.
    """

    __slots__ = ("m", "n", "_dense", "_csr", "row_norms_sq", "frob_sq")

    def __init__(self, dense=None, csr=None):
        if (dense is None) == (csr is None):
            raise ValueError("exactly one of dense/csr storage must be given")
        if dense is not None:
            dense = np.ascontiguousarray(dense, dtype=float)
            if dense.ndim != 2:
                raise ValueError("dense storage must be 2-D")
            self._dense = dense
            self._csr = None
            self.m, self.n = dense.shape
            self.row_norms_sq = _row_norms_sq_dense(dense)
        else:
            csr = sparse.csr_array(csr, dtype=float)
            self._dense = None
            self._csr = csr
            self.m, self.n = csr.shape
            self.row_norms_sq = _row_norms_sq_csr(csr)
        zero_rows = np.flatnonzero(self.row_norms_sq <= 0.0)
        if zero_rows.size:
            raise ValueError(f"matrix has zero rows at indices {zero_rows.tolist()}")
        # np.sum uses pairwise accumulation, keeping the partition identity
        # sum_i frob_sq(I_i) == ||A||_F^2 tight even for very large m.
        self.frob_sq = float(np.sum(self.row_norms_sq))

    @classmethod
    def from_dense(cls, a):
        return cls(dense=a)

    @classmethod
    def from_csr(cls, a):
        return cls(csr=a)

    @property
    def is_sparse(self):
        return self._csr is not None

    @property
    def shape(self):
        return (self.m, self.n)

    def toarray(self):
        """Dense copy; intended for desk-scale oracles and tests."""
        if self._dense is not None:
            return self._dense.copy()
        return self._csr.toarray()

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"x has shape {x.shape}, expected ({self.n},)")
        if self._dense is not None:
            return self._dense @ x
        return self._csr @ x

    def residual(self, x, b):
        """Signed residual Ax - b over all rows."""
        b = np.asarray(b, dtype=float)
        if b.shape != (self.m,):
            raise ValueError(f"b has shape {b.shape}, expected ({self.m},)")
        return self.matvec(x) - b

    def row(self, i):
        """Row i as a dense 1-D array."""
        if self._dense is not None:
            return self._dense[i]
        return self._csr[[i], :].toarray()[0]

    def submatrix(self, rows):
        """Rows subset in storage-native form (ndarray or csr_array)."""
        rows = np.asarray(rows, dtype=np.intp)
        if self._dense is not None:
            return self._dense[rows]
        return self._csr[rows, :]

    def block(self, rows):
        return BlockView(self, rows)

    def full_block(self):
        return BlockView(self, np.arange(self.m))


class BlockView:
    """A fixed, ordered subset of the rows of a :class:`RowMatrix`.

    Parameters
    ----------
    parent : RowMatrix
    rows : array_like of int
        Row indices; order is preserved in every block operation.

    Attributes
    ----------
    frob_sq : float
        Sum of the member rows' squared norms, accumulated in ascending
        row order so the value is reproducible.
    """

    __slots__ = ("parent", "rows", "frob_sq", "_mat", "_sigma_sq", "_sigma_converged", "_lock")

    def __init__(self, parent, rows):
        rows = np.asarray(rows, dtype=np.intp)
        if rows.ndim != 1 or rows.size == 0:
            raise ValueError("block must be a nonempty 1-D index list")
        if rows.min() < 0 or rows.max() >= parent.m:
            raise ValueError("block row indices out of range")
        self.parent = parent
        self.rows = rows
        order = np.sort(rows)
        self.frob_sq = float(np.sum(parent.row_norms_sq[order]))
        self._mat = None
        self._sigma_sq = None
        self._sigma_converged = True
        self._lock = threading.RLock()

    def __len__(self):
        return self.rows.size

    @property
    def mat(self):
        """Materialized row submatrix, cached after first use."""
        if self._mat is None:
            with self._lock:
                if self._mat is None:
                    self._mat = self.parent.submatrix(self.rows)
        return self._mat

    def residual(self, x, b):
        """A_I x - b_I in the block's row order."""
        x = np.asarray(x, dtype=float)
        b = np.asarray(b, dtype=float)
        if x.shape != (self.parent.n,):
            raise ValueError(f"x has shape {x.shape}, expected ({self.parent.n},)")
        if b.shape != (self.parent.m,):
            raise ValueError(f"b has shape {b.shape}, expected ({self.parent.m},)")
        return self.mat @ x - b[self.rows]

    def transpose_apply(self, v):
        """Sum_j v[j] * (row j of the block), i.e. (A_I)^T v."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.rows.size,):
            raise ValueError(f"v has shape {v.shape}, expected ({self.rows.size},)")
        out = self.mat.T @ v
        if sparse.issparse(out):  # pragma: no cover - csr.T @ dense gives ndarray
            out = np.asarray(out).ravel()
        return np.asarray(out, dtype=float)

    @property
    def sigma_max_sq_cached(self):
        return self._sigma_sq

    @property
    def sigma_converged(self):
        return self._sigma_converged

    def spectral_norm_squared(self, rel_tol=1e-10):
        """Largest squared singular value of the block submatrix.

        Power iteration on (A_I)^T A_I with a deterministic start vector
        derived from the block contents.  The Rayleigh quotient is a lower
        bound on sigma_max^2, so the returned estimate never exceeds the
        true value.  Iteration stops when successive Rayleigh quotients
        agree to ``rel_tol`` relatively; if the cap of 10 * n iterations is
        hit first, the best estimate is returned and
        :attr:`sigma_converged` is set to False.

        The value is cached; the first caller computes it under a lock.
        """
        if self._sigma_sq is not None:
            return self._sigma_sq
        mat = self.mat  # materialize outside the critical section
        with self._lock:
            if self._sigma_sq is None:
                self._sigma_sq, self._sigma_converged = _power_iteration_sq(
                    mat, self.parent.n, self._start_vector(), rel_tol
                )
        return self._sigma_sq

    def _start_vector(self):
        # Seed from the block's identity (shape plus member indices) so the
        # estimate is reproducible run to run and machine to machine.
        h = hashlib.sha256()
        h.update(np.asarray([self.parent.m, self.parent.n], dtype=np.int64).tobytes())
        h.update(self.rows.astype(np.int64).tobytes())
        seed = np.frombuffer(h.digest()[:16], dtype=np.uint64)
        rng = np.random.Generator(np.random.PCG64(seed))
        v = rng.standard_normal(self.parent.n)
        return v / np.linalg.norm(v)


def _power_iteration_sq(mat, n, v, rel_tol):
    """Power iteration for sigma_max^2; returns (estimate, converged)."""
    max_iters = 10 * n
    rayleigh = 0.0
    for _ in range(max_iters):
        w = mat @ v
        new_rayleigh = float(np.dot(w, w))  # = v^T (A^T A) v for unit v
        u = mat.T @ w
        if sparse.issparse(u):  # pragma: no cover
            u = np.asarray(u).ravel()
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            # v orthogonal to the row space; nudge impossible for no-zero-row
            # blocks unless the block is rank deficient in a degenerate way.
            return new_rayleigh, True
        v = u / norm_u
        if new_rayleigh > 0.0 and abs(new_rayleigh - rayleigh) < rel_tol * new_rayleigh:
            return new_rayleigh, True
        rayleigh = new_rayleigh
    return rayleigh, False


def block_residual(matrix, block, x, b):
    """A_I x - b_I for a block of rows; caller applies positive_part."""
    if block.parent is not matrix:
        raise ValueError("block does not belong to this matrix")
    return block.residual(x, b)


def transpose_apply_block(block, v):
    """(A_I)^T v for a block of rows."""
    return block.transpose_apply(v)


def spectral_norm_squared(block, rel_tol=1e-10):
    """sigma_max^2 of the block's row submatrix (cached power iteration)."""
    return block.spectral_norm_squared(rel_tol=rel_tol)
