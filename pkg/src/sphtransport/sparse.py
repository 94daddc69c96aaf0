"""Compressed-row matrices, ILU(0) and preconditioned BiCGSTAB.

The hot loops (SpMV, the incomplete factorization and the triangular
solves) are compiled with numba; everything else is plain numpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError, FactorizationError

log = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10
DEFAULT_MAX_ITER = 1000
PIVOT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Real matrix in compressed sparse row (CSR) form.

    Column indices are strictly increasing inside every row.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def row_nnz(self):
        return np.diff(self.row_offsets)

    def row_ids(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows), self.row_nnz())

    def __matmul__(self, x):
        return spmv(self, x)

    def with_values(self, values):
        """Same sparsity pattern, new values."""
        values = np.ascontiguousarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise DomainError("values do not match the sparsity pattern")
        return SparseMatrix(self.n_rows, self.n_cols, self.row_offsets, self.col_indices, values)

    def same_pattern(self, other):
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def diagonal(self):
        d = np.zeros(min(self.shape))
        rows = self.row_ids()
        on = rows == self.col_indices
        d[rows[on]] = self.values[on]
        return d

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape)

    @classmethod
    def from_dense(cls, a, keep_zeros=False):
        a = np.asarray(a, dtype=float)
        r, c = np.nonzero(np.ones_like(a, dtype=bool) if keep_zeros else a)
        return csr_from_triplets(a.shape[0], a.shape[1], zip(r, c, a[r, c]))

    @classmethod
    def identity(cls, n):
        return cls(n, n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64), np.ones(n))


def csr_from_triplets(n_rows, n_cols, entries):
    """Build a CSR matrix from ``(row, col, value)`` triplets, summing duplicates.

    ``entries`` may also be a tuple of three equal-length arrays.
    """
    if isinstance(entries, tuple) and len(entries) == 3 and np.ndim(entries[0]) == 1:
        rows, cols, vals = (np.asarray(e) for e in entries)
    else:
        entries = list(entries)
        if entries:
            rows, cols, vals = (np.asarray(e) for e in zip(*entries))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    vals = vals.astype(float)
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise DomainError(f"triplet index out of range for a {n_rows}x{n_cols} matrix")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        first = np.ones(len(rows), dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(first)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return SparseMatrix(int(n_rows), int(n_cols), offsets, np.ascontiguousarray(cols), np.ascontiguousarray(vals))


@numba.njit(cache=True)
def _spmv(offsets, cols, vals, x, y):
    for i in range(len(offsets) - 1):
        acc = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            acc += vals[p] * x[cols[p]]
        y[i] = acc


def spmv(A, x):
    """``y = A x``."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (A.n_cols,):
        raise DomainError(f"vector of length {x.shape} does not match {A.n_rows}x{A.n_cols} matrix")
    y = np.empty(A.n_rows)
    _spmv(A.row_offsets, A.col_indices, A.values, x, y)
    return y


@dataclass(frozen=True, eq=False)
class Ilu0Factors:
    """ILU(0) factors stored on the pattern of the source matrix.

    Entries left of the diagonal hold ``L`` (unit diagonal implied), the
    rest hold ``U``.
    """

    matrix: SparseMatrix
    diag_ptr: np.ndarray

    @property
    def n(self):
        return self.matrix.n_rows


@numba.njit(cache=True)
def _ilu0(offsets, cols, vals, diag_ptr, pivot_tol):
    n = len(offsets) - 1
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, end = offsets[i], offsets[i + 1]
        rownorm = 0.0
        for p in range(start, end):
            pos[cols[p]] = p
            rownorm += vals[p] * vals[p]
        rownorm = np.sqrt(rownorm)
        for p in range(start, end):
            k = cols[p]
            if k >= i:
                break
            vals[p] /= vals[diag_ptr[k]]
            lik = vals[p]
            for q in range(diag_ptr[k] + 1, offsets[k + 1]):
                j = cols[q]
                t = pos[j]
                if t >= 0:
                    vals[t] -= lik * vals[q]
        piv = vals[diag_ptr[i]]
        for p in range(start, end):
            pos[cols[p]] = -1
        if not (abs(piv) >= pivot_tol * rownorm) or rownorm == 0.0:
            return i
    return -1


def ilu0_factorize(A):
    """Zero-fill incomplete LU factorization (IKJ ordering) of square ``A``."""
    if A.n_rows != A.n_cols:
        raise DomainError("ILU(0) needs a square matrix")
    rows = A.row_ids()
    on = np.flatnonzero(rows == A.col_indices)
    if len(on) != A.n_rows:
        have = np.zeros(A.n_rows, dtype=bool)
        have[rows[on]] = True
        missing = int(np.flatnonzero(~have)[0])
        raise FactorizationError(f"row {missing} has no structural diagonal entry", row=missing)
    diag_ptr = np.ascontiguousarray(on, dtype=np.int64)
    vals = A.values.copy()
    bad = _ilu0(A.row_offsets, A.col_indices, vals, diag_ptr, PIVOT_TOL)
    if bad >= 0:
        raise FactorizationError(f"zero or vanishing pivot in row {bad}", row=int(bad))
    return Ilu0Factors(A.with_values(vals), diag_ptr)


@numba.njit(cache=True)
def _lu_solve(offsets, cols, vals, diag_ptr, r, z):
    n = len(offsets) - 1
    for i in range(n):
        acc = r[i]
        for p in range(offsets[i], diag_ptr[i]):
            acc -= vals[p] * z[cols[p]]
        z[i] = acc
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for p in range(diag_ptr[i] + 1, offsets[i + 1]):
            acc -= vals[p] * z[cols[p]]
        z[i] = acc / vals[diag_ptr[i]]


def ilu0_apply(F, r):
    """Solve ``L U z = r`` with the incomplete factors."""
    r = np.ascontiguousarray(r, dtype=float)
    if r.shape != (F.n,):
        raise DomainError("vector length does not match the factors")
    M = F.matrix
    z = np.empty(F.n)
    _lu_solve(M.row_offsets, M.col_indices, M.values, F.diag_ptr, r, z)
    return z


@dataclass
class SolveReport:
    """Outcome of one iterative solve."""

    iterations: int
    final_relative_residual: float
    converged: bool
    restarts: int = 0
    history: list = field(default_factory=list, repr=False)


def bicgstab(A, b, x0=None, preconditioner=None, rel_tol=DEFAULT_REL_TOL, max_iter=DEFAULT_MAX_ITER):
    """Right-preconditioned BiCGSTAB.

    Parameters
    ----------
    A : SparseMatrix
        Square system matrix.
    b : ndarray
        Right-hand side.
    x0 : ndarray, optional
        Initial guess (zero by default).
    preconditioner : Ilu0Factors or callable, optional
        Approximate inverse applied as ``z = M^{-1} r``.
    rel_tol : float
        Stop once the true residual ``||b - A x|| / ||b||`` is at or below this.
    max_iter : int
        Iteration cap.

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``converged`` is False after ``max_iter`` iterations or a breakdown
        that persists after one restart; the caller decides what to do.
    """
    if A.n_rows != A.n_cols:
        raise DomainError("BiCGSTAB needs a square matrix")
    if rel_tol <= 0:
        raise DomainError("rel_tol must be positive")
    b = np.ascontiguousarray(b, dtype=float)
    n = A.n_rows
    if b.shape != (n,):
        raise DomainError("right-hand side length does not match the matrix")
    if preconditioner is None:
        apply_m = lambda v: v  # noqa: E731
    elif isinstance(preconditioner, Ilu0Factors):
        apply_m = lambda v: ilu0_apply(preconditioner, v)  # noqa: E731
    else:
        apply_m = preconditioner

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    r = b - spmv(A, x)
    res = np.linalg.norm(r) / bnorm
    history = [res]
    if res <= rel_tol:
        return x, SolveReport(0, res, True, history=history)

    restarts = 0
    it = 0
    tiny = np.finfo(float).tiny * 1e3
    while True:
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        broke = False
        while it < max_iter:
            it += 1
            rho_new = r_hat @ r
            if abs(rho_new) < tiny or abs(omega) < tiny:
                broke = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            p_hat = apply_m(p)
            v = spmv(A, p_hat)
            denom = r_hat @ v
            if abs(denom) < tiny:
                broke = True
                break
            alpha = rho / denom
            s = r - alpha * v
            x_half = x + alpha * p_hat
            if np.linalg.norm(s) / bnorm <= rel_tol:
                res = np.linalg.norm(b - spmv(A, x_half)) / bnorm
                if res <= rel_tol:
                    history.append(res)
                    return x_half, SolveReport(it, res, True, restarts, history)
            s_hat = apply_m(s)
            t = spmv(A, s_hat)
            tt = t @ t
            omega = (t @ s) / tt if tt > 0 else 0.0
            x = x_half + omega * s_hat
            r = s - omega * t
            res = np.linalg.norm(b - spmv(A, x)) / bnorm
            history.append(res)
            if res <= rel_tol:
                return x, SolveReport(it, res, True, restarts, history)
        if broke and restarts == 0:
            restarts += 1
            log.debug("BiCGSTAB breakdown at iteration %d, restarting", it)
            r = b - spmv(A, x)
            continue
        res = np.linalg.norm(b - spmv(A, x)) / bnorm
        return x, SolveReport(it, res, False, restarts, history)


def write_matrix_market(A, path):
    """Dump ``A`` in MatrixMarket coordinate format (1-based indices)."""
    rows = A.row_ids()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for i, j, v in zip(rows, A.col_indices, A.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
