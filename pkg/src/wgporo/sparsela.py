"""Sparse kernels: CSR container, SpMV, threshold incomplete Cholesky, PCG, GMRES.

The hot loops are compiled with numba; everything else is plain numpy.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
import scipy.sparse as sp
from numba import njit

log = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]


# --------------------------------------------------------------------------- #
# CSR container
# --------------------------------------------------------------------------- #
@njit(cache=True)
def _spmv(indptr, indices, data, x, y):
    for i in range(indptr.size - 1):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        y[i] = acc


class CsrMatrix:
    """Compressed sparse row matrix of float64 with sorted, unique column indices."""

    __slots__ = ("indptr", "indices", "data", "shape")

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.indptr.size != self.shape[0] + 1:
            raise ValueError("indptr length does not match row count")

    @classmethod
    def from_scipy(cls, A) -> "CsrMatrix":
        A = sp.csr_matrix(A, dtype=np.float64)
        A.sum_duplicates()
        A.eliminate_zeros()
        A.sort_indices()
        return cls(A.indptr, A.indices, A.data, A.shape)

    @classmethod
    def from_dense(cls, M) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(M, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @property
    def nnz(self) -> int:
        return self.data.size

    @property
    def T(self) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy().T.tocsr())

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def row_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return spmv(self, x)

    def __matmul__(self, x):
        if isinstance(x, np.ndarray) and x.ndim == 1:
            return spmv(self, x)
        return NotImplemented

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise ValueError(f"shape mismatch: matrix {A.shape}, vector {x.shape}")
    y = np.empty(A.shape[0])
    _spmv(A.indptr, A.indices, A.data, x, y)
    return y


# --------------------------------------------------------------------------- #
# Threshold incomplete Cholesky
# --------------------------------------------------------------------------- #
class IcBreakdown(ArithmeticError):
    """Nonpositive pivot during incomplete factorization."""

    def __init__(self, column: int, pivot: float):
        super().__init__(f"nonpositive pivot {pivot:.3e} in column {column}")
        self.column = column
        self.pivot = pivot


@njit(cache=True)
def _ichol_kernel(indptr, indices, data, n, droptol):
    # column storage of L (== CSR of L^T), grown on demand
    nnz_low = 0
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] >= i:
                nnz_low += 1
    cap = max(2 * nnz_low, 16)
    rows = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.float64)
    colptr = np.zeros(n + 1, dtype=np.int64)

    pos = np.empty(n, dtype=np.int64)
    head = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    w = np.zeros(n)
    mark = np.full(n, -1, dtype=np.int64)
    nzl = np.empty(n, dtype=np.int64)

    for j in range(n):
        cnt = 0
        colnorm = 0.0
        # column j of the lower triangle == row j entries with col >= j
        for p in range(indptr[j], indptr[j + 1]):
            i = indices[p]
            if i >= j:
                w[i] = data[p]
                mark[i] = j
                nzl[cnt] = i
                cnt += 1
                colnorm += abs(data[p])
        if mark[j] != j:
            w[j] = 0.0
            mark[j] = j
            nzl[cnt] = j
            cnt += 1

        k = head[j]
        while k != -1:
            knext = nxt[k]
            p = pos[k]
            ljk = vals[p]
            for q in range(p, colptr[k + 1]):
                i = rows[q]
                if mark[i] != j:
                    mark[i] = j
                    w[i] = 0.0
                    nzl[cnt] = i
                    cnt += 1
                w[i] -= vals[q] * ljk
            pos[k] = p + 1
            if p + 1 < colptr[k + 1]:
                r = rows[p + 1]
                nxt[k] = head[r]
                head[r] = k
            k = knext

        piv = w[j]
        if not piv > 0.0:
            return rows, vals, colptr, j, piv
        ljj = math.sqrt(piv)

        if colptr[j] + cnt > cap:
            while colptr[j] + cnt > cap:
                cap *= 2
            rows2 = np.empty(cap, dtype=np.int64)
            vals2 = np.empty(cap, dtype=np.float64)
            rows2[:colptr[j]] = rows[:colptr[j]]
            vals2[:colptr[j]] = vals[:colptr[j]]
            rows = rows2
            vals = vals2

        order = np.sort(nzl[:cnt])
        q = colptr[j]
        rows[q] = j
        vals[q] = ljj
        q += 1
        thresh = droptol * colnorm
        for t in range(cnt):
            i = order[t]
            if i <= j:
                continue
            v = w[i] / ljj
            if abs(v) >= thresh:
                rows[q] = i
                vals[q] = v
                q += 1
        colptr[j + 1] = q
        pos[j] = colptr[j] + 1
        if pos[j] < q:
            r = rows[pos[j]]
            nxt[j] = head[r]
            head[r] = j
    return rows, vals, colptr, -1, 0.0


@njit(cache=True)
def _lower_solve_csc(colptr, rows, vals, b):
    # L y = b, L stored by columns with the diagonal first in each column
    n = colptr.size - 1
    y = b.copy()
    for j in range(n):
        p0 = colptr[j]
        yj = y[j] / vals[p0]
        y[j] = yj
        for p in range(p0 + 1, colptr[j + 1]):
            y[rows[p]] -= vals[p] * yj
    return y


@njit(cache=True)
def _upper_solve_csc(colptr, rows, vals, y):
    # L^T x = y using the same column storage (row j of L^T == column j of L)
    n = colptr.size - 1
    x = y.copy()
    for j in range(n - 1, -1, -1):
        p0 = colptr[j]
        acc = x[j]
        for p in range(p0 + 1, colptr[j + 1]):
            acc -= vals[p] * x[rows[p]]
        x[j] = acc / vals[p0]
    return x


@dataclass
class IcFactor:
    """Incomplete Cholesky factor ``L`` with ``A ~ L L^T``.

    Stored column-wise, i.e. as the CSR arrays of ``L^T``.
    """

    Lt: CsrMatrix
    droptol: float
    shift: float = 0.0

    @property
    def L(self) -> CsrMatrix:
        return self.Lt.T

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.ascontiguousarray(b, dtype=np.float64)
        y = _lower_solve_csc(self.Lt.indptr, self.Lt.indices, self.Lt.data, b)
        return _upper_solve_csc(self.Lt.indptr, self.Lt.indices, self.Lt.data, y)

    __call__ = solve


def ichol_t(A: CsrMatrix, droptol: float) -> IcFactor:
    """Left-looking incomplete Cholesky with threshold dropping.

    ``L[i, j]`` (``i > j``) is dropped when ``|L[i, j]| < droptol * ||A[j:, j]||_1``;
    the diagonal is always kept.  Raises :class:`IcBreakdown` on a
    nonpositive pivot.
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if droptol < 0:
        raise ValueError("droptol must be nonnegative")
    n = A.shape[0]
    rows, vals, colptr, bad, piv = _ichol_kernel(A.indptr, A.indices, A.data, n, float(droptol))
    if bad >= 0:
        raise IcBreakdown(int(bad), float(piv))
    nnz = colptr[-1]
    Lt = CsrMatrix(colptr, rows[:nnz].copy(), vals[:nnz].copy(), (n, n))
    return IcFactor(Lt, droptol)


def ichol_with_shift(A: CsrMatrix, droptol: float, shift: float = 1e-3) -> IcFactor:
    """``ichol_t``; on breakdown retry once on ``A + shift*diag(A)``."""
    try:
        return ichol_t(A, droptol)
    except IcBreakdown as exc:
        log.warning("IC breakdown (%s); retrying with diagonal shift %g", exc, shift)
        As = A.to_scipy() + shift * sp.diags(A.diagonal())
        fac = ichol_t(CsrMatrix.from_scipy(As), droptol)
        fac.shift = shift
        return fac


# --------------------------------------------------------------------------- #
# Krylov solvers
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    restart: int = 30
    maxiter: int = 2000
    residual: Literal["preconditioned", "preconditioned_rhs", "true"] = "preconditioned"
    # if set, a preconditioned-residual convergence is only accepted when
    # ||r|| <= true_cap ||b||; otherwise iteration continues on the true residual
    true_cap: Optional[float] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.residual not in ("preconditioned", "preconditioned_rhs", "true"):
            raise ValueError(f"unknown residual measure {self.residual!r}")
        if self.true_cap is not None and not self.true_cap > 0:
            raise ValueError("true_cap must be positive")


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    restarts: int = 0
    # True when the true-residual safeguard forced extra iterations
    safeguarded: bool = False


def _as_operator(A) -> Operator:
    if A is None:
        return lambda v: v
    if isinstance(A, CsrMatrix):
        return A.matvec
    if callable(A):
        return A
    if isinstance(A, np.ndarray):
        return lambda v: A @ v
    raise TypeError(f"cannot use {type(A).__name__} as a linear operator")


def pcg(apply_A, apply_Minv, b: np.ndarray, config: SolverConfig = SolverConfig()) -> KrylovResult:
    """Preconditioned conjugate gradients from a zero initial guess.

    Stops on ``||b - A x|| <= tol * ||b||`` (recursive residual), and the
    reported final residual is recomputed from scratch.
    """
    A = _as_operator(apply_A)
    M = _as_operator(apply_Minv)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovResult(x, 0, True, [0.0])
    r = b.copy()
    z = M(r)
    p = z.copy()
    rz = r @ z
    hist = [1.0]
    it = 0
    converged = False
    while it < config.maxiter:
        Ap = A(p)
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rel = np.linalg.norm(r) / bnorm
        hist.append(rel)
        if rel <= config.tol:
            converged = True
            break
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_rel = np.linalg.norm(b - A(x)) / bnorm
    hist.append(true_rel)
    return KrylovResult(x, it, converged and true_rel <= 10 * config.tol, hist)


_REORTH = 1.0 / math.sqrt(2.0)


def gmres(apply_A, apply_Minv_left, b: np.ndarray,
          config: SolverConfig = SolverConfig()) -> KrylovResult:
    """Left-preconditioned restarted GMRES(m) from a zero initial guess.

    Arnoldi uses modified Gram-Schmidt with a second pass whenever the
    vector norm drops below ``1/sqrt(2)`` of its initial value.  With
    ``residual="preconditioned"`` the test is ``||M^{-1} r|| <= tol ||M^{-1} b||``;
    ``"preconditioned_rhs"`` keeps the preconditioned residual but measures it
    against ``tol ||b||``; with ``"true"`` it is ``||r|| <= tol ||b||``.  ``config.true_cap`` adds a
    safeguard on the unpreconditioned residual to the first.  ``iterations``
    counts Arnoldi steps over all cycles.
    """
    A = _as_operator(apply_A)
    M = _as_operator(apply_Minv_left)
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    m = config.restart
    x = np.zeros(n)
    true_mode = config.residual == "true"
    target = config.tol

    z = M(b)
    ref = np.linalg.norm(b) if config.residual != "preconditioned" else np.linalg.norm(z)
    if ref == 0.0:
        return KrylovResult(x, 0, True, [0.0])
    beta = np.linalg.norm(z)
    hist = [np.linalg.norm(b) / ref if true_mode else beta / ref]

    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    total = 0
    cycles = 0
    converged = False
    safeguarded = False
    while total < config.maxiter and not converged:
        if beta == 0.0:
            converged = True
            break
        V[0] = z / beta
        g = np.zeros(m + 1)
        g[0] = beta
        H[:] = 0.0
        k = 0
        y = np.zeros(0)
        for j in range(m):
            w = M(A(V[j]))
            total += 1
            w0 = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            wn = np.linalg.norm(w)
            if wn < _REORTH * w0:
                for i in range(j + 1):
                    c = V[i] @ w
                    H[i, j] += c
                    w -= c * V[i]
                wn = np.linalg.norm(w)
            H[j + 1, j] = wn
            breakdown = wn <= 1e-14 * w0
            if not breakdown:
                V[j + 1] = w / wn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = math.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            if true_mode:
                y = _back_substitute(H, g, k)
                rel = np.linalg.norm(b - A(x + V[:k].T @ y)) / ref
            else:
                rel = abs(g[k]) / ref
            hist.append(rel)
            if rel <= target or breakdown or total >= config.maxiter:
                break
        if not true_mode or y.size != k:
            y = _back_substitute(H, g, k)
        x += V[:k].T @ y
        r = b - A(x)
        z = M(r)
        beta = np.linalg.norm(z)
        final = np.linalg.norm(r) / ref if true_mode else beta / ref
        converged = final <= target
        if not converged and hist[-1] <= target:
            # recursive estimate converged but the recomputed residual did not
            hist.append(final)
        if converged and not true_mode and config.true_cap is not None:
            bn = np.linalg.norm(b)
            if np.linalg.norm(r) > config.true_cap * bn:
                true_mode, ref, target, converged = True, bn, config.true_cap, False
                safeguarded = True
        cycles += 1
    return KrylovResult(x, total, converged, hist, restarts=max(cycles - 1, 0),
                        safeguarded=safeguarded)


def _back_substitute(H, g, k):
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:]) / H[i, i]
    return y
