"""Feasibility-instance construction: random generation, Matrix Market
ingestion, and the LP-to-inequality transformation.

All random generation flows through numpy's PCG64 generator
(``numpy.random.default_rng``); given the same seed the same instance is
produced bit for bit, which is what makes multi-trial benchmark runs
reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .matrix import RowMatrix

__all__ = [
    "FeasibilityProblem",
    "LpInstance",
    "MatrixMarketError",
    "generate_dense",
    "generate_sparse",
    "synth_rhs",
    "read_matrix_market",
    "lp_to_feasibility",
    "read_lp_instance",
    "write_lp_instance",
    "random_dense_problem",
    "random_sparse_problem",
    "mtx_problem",
    "lp_problem",
]


class MatrixMarketError(ValueError):
    """Raised on malformed Matrix Market input; carries the 1-based line."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class FeasibilityProblem:
    """A system Ax <= b together with provenance and a feasibility witness.

    ``certificate`` is a point known to satisfy every inequality (the
    synthetic construction guarantees one; LP transforms carry one only
    when the caller supplies it).
    """

    A: RowMatrix
    b: np.ndarray
    kind: str = "unknown"
    seed: int | None = None
    source: str | None = None
    certificate: np.ndarray | None = None
    dropped_rows: list = field(default_factory=list)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if self.b.shape != (self.A.m,):
            raise ValueError(
                f"b has shape {self.b.shape}, expected ({self.A.m},)"
            )
        if self.certificate is not None:
            self.certificate = np.asarray(self.certificate, dtype=float)

    @property
    def m(self):
        return self.A.m

    @property
    def n(self):
        return self.A.n

    def residual(self, x):
        """Signed residual Ax - b."""
        return self.A.residual(x, self.b)

    def label(self):
        if self.source is not None:
            return self.source
        return f"{self.kind}-{self.m}x{self.n}"


def generate_dense(m, n, seed):
    """m-by-n matrix of independent standard normal entries."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    rng = np.random.default_rng(seed)
    return RowMatrix.from_dense(rng.standard_normal((m, n)))


def sparse_density(m, n):
    """Nonzero fraction used by :func:`generate_sparse`: 1 / (2 ln(mn))."""
    if m * n < 2:
        raise ValueError("m * n must be >= 2 for the density to be defined")
    return 1.0 / (2.0 * math.log(m * n))


def generate_sparse(m, n, seed):
    """Random sparse matrix with expected density 1 / (2 ln(mn)).

    Each row draws a Binomial(n, density) nonzero count, then that many
    distinct columns; values are standard normal.  Rows that come out
    empty get a single nonzero at a seeded random column, so the no-zero-
    rows invariant holds by construction.
    """
    density = sparse_density(m, n)
    rng = np.random.default_rng(seed)
    counts = rng.binomial(n, density, size=m)
    indptr = np.zeros(m + 1, dtype=np.int64)
    cols_per_row = []
    for i in range(m):
        k = counts[i]
        if k == 0:
            cols = np.array([rng.integers(n)], dtype=np.int64)
        else:
            cols = np.sort(rng.choice(n, size=k, replace=False))
        cols_per_row.append(cols)
        indptr[i + 1] = indptr[i] + cols.size
    indices = np.concatenate(cols_per_row)
    data = rng.standard_normal(indices.size)
    mat = sparse.csr_array((data, indices, indptr), shape=(m, n))
    return RowMatrix.from_csr(mat)


def _synth_rhs_parts(A, seed):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(A.n)
    x2 = rng.standard_normal(A.n)
    x3 = rng.uniform(0.1, 1.0, size=A.m)
    b = 0.5 * A.matvec(x1) + 0.5 * A.matvec(x2) + x3
    witness = 0.5 * (x1 + x2)
    return b, witness


def synth_rhs(A, seed):
    """Right-hand side b = 0.5 A x1 + 0.5 A x2 + x3 with x3 in [0.1, 1]^m.

    The point 0.5 (x1 + x2) then satisfies Ax <= b with slack at least
    0.1 in every coordinate, so the generated system is always strictly
    feasible.
    """
    b, _ = _synth_rhs_parts(A, seed)
    return b


def random_dense_problem(m, n, seed):
    rng = np.random.default_rng(seed)
    A = RowMatrix.from_dense(rng.standard_normal((m, n)))
    b, witness = _synth_rhs_parts(A, rng)
    return FeasibilityProblem(A, b, kind="random-dense", seed=seed, certificate=witness)


def random_sparse_problem(m, n, seed):
    rng = np.random.default_rng(seed)
    A = generate_sparse(m, n, rng)
    b, witness = _synth_rhs_parts(A, rng)
    return FeasibilityProblem(A, b, kind="random-sparse", seed=seed, certificate=witness)


def mtx_problem(path, seed):
    """Matrix from a Matrix Market file, synthetic feasible right-hand side."""
    A = read_matrix_market(path)
    b, witness = _synth_rhs_parts(A, seed)
    return FeasibilityProblem(
        A, b, kind="matrix-market", seed=seed, source=str(path), certificate=witness
    )


def lp_problem(path):
    lp = read_lp_instance(path)
    prob = lp_to_feasibility(lp)
    prob.source = str(path)
    return prob


# ---------------------------------------------------------------------------
# Matrix Market reader (coordinate and array, real, general/symmetric)
# ---------------------------------------------------------------------------

_MM_FIELDS = {"real", "integer"}
_MM_SYMMETRIES = {"general", "symmetric", "skew-symmetric"}


def _mm_float(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise MatrixMarketError(f"expected a real number, got {token!r}", lineno)


def _mm_int(token, lineno):
    try:
        return int(token)
    except ValueError:
        raise MatrixMarketError(f"expected an integer, got {token!r}", lineno)


def read_matrix_market(path):
    """Parse a real Matrix Market file into a :class:`RowMatrix`.

    Coordinate files become CSR storage with duplicate entries summed;
    array files become dense storage.  Symmetric (and skew-symmetric)
    coordinate storage is expanded to the full matrix.  Any zero row in
    the result is rejected, since downstream solvers cannot use it.
    """
    with open(path, "rt", encoding="ascii", errors="replace") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix":
        raise MatrixMarketError("malformed %%MatrixMarket header", 1)
    layout, fld, symmetry = header[2].lower(), header[3].lower(), header[4].lower()
    if layout not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported layout {layout!r}", 1)
    if fld not in _MM_FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r} (real data required)", 1)
    if symmetry not in _MM_SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)

    # Skip comments / blank lines; remember original line numbers.
    body = [
        (i, line.strip())
        for i, line in enumerate(lines[1:], start=2)
        if line.strip() and not line.lstrip().startswith("%")
    ]
    if not body:
        raise MatrixMarketError("missing size line", len(lines))
    size_lineno, size_line = body[0]
    size_tokens = size_line.split()

    if layout == "coordinate":
        if len(size_tokens) != 3:
            raise MatrixMarketError("coordinate size line needs 'm n nnz'", size_lineno)
        m = _mm_int(size_tokens[0], size_lineno)
        n = _mm_int(size_tokens[1], size_lineno)
        nnz = _mm_int(size_tokens[2], size_lineno)
        if len(body) - 1 != nnz:
            raise MatrixMarketError(
                f"expected {nnz} entries, found {len(body) - 1}", size_lineno
            )
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=float)
        for k, (lineno, line) in enumerate(body[1:]):
            tokens = line.split()
            if len(tokens) != 3:
                raise MatrixMarketError("entry needs 'i j value'", lineno)
            i = _mm_int(tokens[0], lineno)
            j = _mm_int(tokens[1], lineno)
            if not (1 <= i <= m) or not (1 <= j <= n):
                raise MatrixMarketError(f"index ({i}, {j}) out of range", lineno)
            rows[k], cols[k] = i - 1, j - 1
            vals[k] = _mm_float(tokens[2], lineno)
        if symmetry in ("symmetric", "skew-symmetric"):
            if m != n:
                raise MatrixMarketError("symmetric storage requires m == n", size_lineno)
            off = rows != cols
            sign = -1.0 if symmetry == "skew-symmetric" else 1.0
            mirrored_rows, mirrored_cols = cols[off], rows[off]
            rows = np.concatenate([rows, mirrored_rows])
            cols = np.concatenate([cols, mirrored_cols])
            vals = np.concatenate([vals, sign * vals[off]])
        coo = sparse.coo_array((vals, (rows, cols)), shape=(m, n))
        return RowMatrix.from_csr(coo.tocsr())  # tocsr sums duplicates

    # array layout: dense values in column-major order
    if len(size_tokens) != 2:
        raise MatrixMarketError("array size line needs 'm n'", size_lineno)
    m = _mm_int(size_tokens[0], size_lineno)
    n = _mm_int(size_tokens[1], size_lineno)
    values = []
    for lineno, line in body[1:]:
        for token in line.split():
            values.append(_mm_float(token, lineno))
    if symmetry == "general":
        if len(values) != m * n:
            raise MatrixMarketError(
                f"expected {m * n} values, found {len(values)}", body[-1][0]
            )
        dense = np.asarray(values, dtype=float).reshape((n, m)).T
    else:
        if m != n:
            raise MatrixMarketError("symmetric storage requires m == n", size_lineno)
        expect = m * (m + 1) // 2
        if len(values) != expect:
            raise MatrixMarketError(
                f"expected {expect} packed values, found {len(values)}", body[-1][0]
            )
        dense = np.zeros((m, n))
        it = iter(values)
        sign = -1.0 if symmetry == "skew-symmetric" else 1.0
        for j in range(n):
            for i in range(j, m):
                v = next(it)
                dense[i, j] = v
                if i != j:
                    dense[j, i] = sign * v
    return RowMatrix.from_dense(dense)


# ---------------------------------------------------------------------------
# LP instances and the inequality transformation
# ---------------------------------------------------------------------------


@dataclass
class LpInstance:
    """Equality-form LP data: min c^T x s.t. A_eq x = b_eq, l <= x <= u.

    ``p_star`` is the known optimal value; it becomes the right-hand side
    of the cost-bound row in the inequality transformation.
    """

    a_eq: sparse.csr_array
    b_eq: np.ndarray
    l: np.ndarray
    u: np.ndarray
    c: np.ndarray
    p_star: float | None = None

    def __post_init__(self):
        self.a_eq = sparse.csr_array(self.a_eq, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.l = np.asarray(self.l, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        r, n = self.a_eq.shape
        if self.b_eq.shape != (r,):
            raise ValueError("b_eq length must match the row count of a_eq")
        for name, vec in (("l", self.l), ("u", self.u), ("c", self.c)):
            if vec.shape != (n,):
                raise ValueError(f"{name} length must match the column count of a_eq")
        if np.any(self.l > self.u):
            raise ValueError("bounds violate l <= u")

    @property
    def n(self):
        return self.a_eq.shape[1]


def lp_to_feasibility(lp, certificate=None):
    """Stack the LP constraints plus the cost bound into one Ax <= b system.

    Row order: A_eq, -A_eq, I (upper bounds), -I (lower bounds), c^T.
    Rows for infinite bounds are omitted; zero rows of the stack (zero
    rows of A_eq, or the cost row when c == 0) are dropped and reported
    through ``dropped_rows``.
    """
    if lp.p_star is None:
        raise ValueError("p_star is required to form the cost-bound row")
    r, n = lp.a_eq.shape
    eye = sparse.eye_array(n, format="csr")

    finite_u = np.flatnonzero(np.isfinite(lp.u))
    finite_l = np.flatnonzero(np.isfinite(lp.l))
    c_row = sparse.csr_array(lp.c.reshape(1, n))

    parts = [lp.a_eq, -lp.a_eq, eye[finite_u], -eye[finite_l], c_row]
    rhs = [lp.b_eq, -lp.b_eq, lp.u[finite_u], -lp.l[finite_l], np.array([lp.p_star])]
    labels = (
        [("Aeq", i) for i in range(r)]
        + [("-Aeq", i) for i in range(r)]
        + [("upper", int(j)) for j in finite_u]
        + [("lower", int(j)) for j in finite_l]
        + [("cost", 0)]
    )

    stacked = sparse.vstack(parts, format="csr")
    b = np.concatenate(rhs)

    row_norms = np.add.reduceat(
        stacked.data * stacked.data, stacked.indptr[:-1], dtype=float
    )
    row_norms[np.diff(stacked.indptr) == 0] = 0.0
    zero = np.flatnonzero(row_norms <= 0.0)
    dropped = [labels[i] for i in zero]
    if zero.size:
        warnings.warn(
            f"dropping {zero.size} zero rows from the stacked system: {dropped}",
            stacklevel=2,
        )
        keep = np.setdiff1d(np.arange(stacked.shape[0]), zero)
        stacked = stacked[keep]
        b = b[keep]

    problem = FeasibilityProblem(
        RowMatrix.from_csr(stacked),
        b,
        kind="lp-transform",
        certificate=certificate,
    )
    problem.dropped_rows = dropped
    return problem


def _parse_bound_token(token):
    low = token.lower()
    if low == "inf":
        return math.inf
    if low == "-inf":
        return -math.inf
    return float(token)


def read_lp_instance(path):
    """Read the plain-text LP format.

    Layout::

        lp <n_rows> <n_cols> <p_star>
        Aeq
        <i> <j> <value>        # 1-based coordinate triplets
        ...
        beq
        <n_rows values>
        l
        <n_cols values, 'inf'/'-inf' allowed>
        u
        <n_cols values, 'inf'/'-inf' allowed>
        c
        <n_cols values>

    Values inside a section may be split across lines arbitrarily.
    """
    with open(path, "rt", encoding="ascii") as fh:
        tokens_by_line = [
            (i, line.split())
            for i, line in enumerate(fh, start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if not tokens_by_line:
        raise ValueError(f"{path}: empty LP file")
    lineno, header = tokens_by_line[0]
    if len(header) != 4 or header[0] != "lp":
        raise ValueError(f"{path}:{lineno}: header must be 'lp n_rows n_cols p_star'")
    n_rows, n_cols = int(header[1]), int(header[2])
    p_star = float(header[3])

    sections = {"Aeq": [], "beq": [], "l": [], "u": [], "c": []}
    current = None
    for lineno, tokens in tokens_by_line[1:]:
        if len(tokens) == 1 and tokens[0] in sections:
            current = tokens[0]
            continue
        if current is None:
            raise ValueError(f"{path}:{lineno}: data before any section header")
        sections[current].extend(tokens)

    triplets = sections["Aeq"]
    if len(triplets) % 3 != 0:
        raise ValueError(f"{path}: Aeq section must hold whole (i, j, value) triplets")
    rows = np.array([int(t) - 1 for t in triplets[0::3]], dtype=np.int64)
    cols = np.array([int(t) - 1 for t in triplets[1::3]], dtype=np.int64)
    vals = np.array([float(t) for t in triplets[2::3]])
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
        raise ValueError(f"{path}: Aeq row index out of range")
    if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
        raise ValueError(f"{path}: Aeq column index out of range")
    a_eq = sparse.coo_array((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr()

    def vector(name, length, allow_inf):
        tokens = sections[name]
        if len(tokens) != length:
            raise ValueError(
                f"{path}: section {name} has {len(tokens)} values, expected {length}"
            )
        if allow_inf:
            return np.array([_parse_bound_token(t) for t in tokens])
        return np.array([float(t) for t in tokens])

    return LpInstance(
        a_eq=a_eq,
        b_eq=vector("beq", n_rows, allow_inf=False),
        l=vector("l", n_cols, allow_inf=True),
        u=vector("u", n_cols, allow_inf=True),
        c=vector("c", n_cols, allow_inf=False),
        p_star=p_star,
    )


def write_lp_instance(lp, path):
    """Inverse of :func:`read_lp_instance` (used for round-trip checks)."""
    if lp.p_star is None:
        raise ValueError("cannot serialize an LpInstance without p_star")
    coo = lp.a_eq.tocoo()

    def fmt(v):
        if v == math.inf:
            return "inf"
        if v == -math.inf:
            return "-inf"
        return repr(float(v))

    with open(path, "wt", encoding="ascii") as fh:
        r, n = lp.a_eq.shape
        fh.write(f"lp {r} {n} {fmt(lp.p_star)}\n")
        fh.write("Aeq\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {fmt(v)}\n")
        for name, vec in (("beq", lp.b_eq), ("l", lp.l), ("u", lp.u), ("c", lp.c)):
            fh.write(name + "\n")
            fh.write(" ".join(fmt(v) for v in vec) + "\n")
