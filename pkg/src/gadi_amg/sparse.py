"""Sparse matrix core: CSR storage, H/S splitting, Krylov solvers, ILU(0).

All matrices are square, real, and stored in compressed-row form. The inner
solvers (PCG, PCGNE) are the workhorses of the alternating-splitting
smoothers; they recompute the true residual periodically so the reported
residual is never a stale recurrence value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SparseError(Exception):
    """Base class for errors raised by this module."""


class DimensionError(SparseError):
    pass


class BreakdownError(SparseError):
    """Zero or negative curvature encountered in a CG recurrence."""


class PivotError(SparseError):
    def __init__(self, row: int):
        super().__init__(f"zero pivot in row {row}")
        self.row = row


class ConvergenceError(SparseError):
    """Iteration did not reach its tolerance; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray, residual: float, iterations: int):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SparseMatrix:
    """Square real matrix in CSR form.

    Rows are sorted by column index and contain no duplicate entries.
    Instances are immutable and safe to share between workers.
    """

    dim: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.dim <= 0:
            raise DimensionError("dim must be positive")
        ro = self.row_offsets
        if len(ro) != self.dim + 1 or ro[0] != 0 or ro[-1] != len(self.col_indices):
            raise DimensionError("row_offsets inconsistent with nnz")
        if np.any(np.diff(ro) < 0):
            raise DimensionError("row_offsets must be nondecreasing")
        if len(self.col_indices) != len(self.values):
            raise DimensionError("col_indices and values length mismatch")
        if len(self.col_indices):
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.dim:
                raise DimensionError("column index out of range")
        # strictly increasing columns within each row also rules out duplicates
        if len(self.col_indices) > 1:
            nondecr = np.diff(self.col_indices) <= 0
            breaks = ro[1:-1]  # breaks between rows are fine
            breaks = breaks[(breaks > 0) & (breaks < len(self.col_indices))]
            nondecr[breaks - 1] = False
            if np.any(nondecr):
                raise DimensionError("row columns not strictly increasing")

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        if m.shape[0] != m.shape[1]:
            raise DimensionError("matrix must be square")
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(
            dim=m.shape[0],
            row_offsets=np.asarray(m.indptr, dtype=np.int64),
            col_indices=np.asarray(m.indices, dtype=np.int64),
            values=np.asarray(m.data, dtype=np.float64),
        )

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError("matrix must be square")
        return cls.from_scipy(sp.csr_matrix(a))

    @classmethod
    def identity(cls, dim: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(dim, format="csr"))

    @classmethod
    def diagonal(cls, d) -> "SparseMatrix":
        return cls.from_scipy(sp.diags(np.asarray(d, dtype=np.float64), format="csr"))

    # -- views ------------------------------------------------------------

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.dim, self.dim)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T.tocsr())

    def diag(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return spmv(self, x)

    def add_shift(self, alpha: float) -> "SparseMatrix":
        """alpha*I + self, keeping an explicit diagonal in the pattern."""
        m = self.to_scipy() + alpha * sp.identity(self.dim, format="csr")
        return SparseMatrix.from_scipy(m)


@dataclass(frozen=True)
class HsSplitting:
    """Symmetric/skew-symmetric pair with h + s equal to the source matrix."""

    h: SparseMatrix
    s: SparseMatrix


@dataclass(frozen=True)
class Ilu0Preconditioner:
    """Zero fill-in LU factors restricted to the source sparsity pattern.

    L is unit lower triangular, U upper triangular; apply() solves LUz = r.
    """

    lower: sp.csr_matrix
    upper: sp.csr_matrix
    lower_t: sp.csr_matrix
    upper_t: sp.csr_matrix

    def apply(self, r: np.ndarray) -> np.ndarray:
        y = spla.spsolve_triangular(self.lower, r, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(self.upper, y, lower=False)

    def apply_transpose(self, r: np.ndarray) -> np.ndarray:
        y = spla.spsolve_triangular(self.upper_t, r, lower=True)
        return spla.spsolve_triangular(self.lower_t, y, lower=False, unit_diagonal=True)


@dataclass(frozen=True)
class KrylovConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 0.0
    max_iters: Optional[int] = None  # None means 10 * dim
    preconditioner: Optional[Ilu0Preconditioner] = None

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def resolved_max_iters(self, dim: int) -> int:
        return self.max_iters if self.max_iters is not None else 10 * dim


@dataclass(frozen=True)
class KrylovStats:
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class SpectralEstimate:
    lambda_min: float
    lambda_max: float
    iterations_used: int
    residual: float


# -- operations ----------------------------------------------------------


def split_hs(a: SparseMatrix) -> HsSplitting:
    """Split a into symmetric part (a + a^T)/2 and skew part (a - a^T)/2.

    Both parts carry the symmetrized sparsity pattern of a (explicit zeros
    are kept where cancellation occurs), so h + s reconstructs a exactly.
    """
    m = a.to_scipy()
    mt = m.T.tocsr()
    # scipy prunes entries that cancel; pad with a subnormal-pattern matrix to
    # keep the symmetrized pattern (explicit zeros) in both parts
    m_ones = m.copy()
    m_ones.data = np.ones_like(m_ones.data)
    mt_ones = mt.copy()
    mt_ones.data = np.ones_like(mt_ones.data)
    pad = (m_ones + mt_ones).tocsr()
    pad.sum_duplicates()
    pad.sort_indices()
    pad.data = np.full_like(pad.data, 1e-300)

    def aligned(part: sp.csr_matrix) -> sp.csr_matrix:
        out = (part + pad).tocsr()
        out.sum_duplicates()
        out.sort_indices()
        out.data = out.data - pad.data
        return out

    h = aligned((m + mt) * 0.5)
    s = aligned((m - mt) * 0.5)
    return HsSplitting(h=SparseMatrix.from_scipy(h), s=SparseMatrix.from_scipy(s))


def spmv(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.dim,):
        raise DimensionError(f"vector length {x.shape} does not match dim {a.dim}")
    return a.to_scipy() @ x


def pcg_solve(
    m: SparseMatrix, b: np.ndarray, cfg: KrylovConfig = KrylovConfig()
) -> tuple[np.ndarray, KrylovStats]:
    """Conjugate gradient for an SPD system, identity preconditioner.

    The returned residual is recomputed from scratch; the recurrence value is
    refreshed every 50 iterations to curb drift.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (m.dim,):
        raise DimensionError("right-hand side length mismatch")
    a = m.to_scipy()
    bnorm = np.linalg.norm(b)
    target = max(cfg.rel_tol * bnorm, cfg.abs_tol)
    x = np.zeros(m.dim)
    if bnorm == 0.0:
        return x, KrylovStats(iterations=0, residual=0.0, converged=True)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    max_iters = cfg.resolved_max_iters(m.dim)
    for it in range(1, max_iters + 1):
        ap = a @ p
        curv = p @ ap
        if curv <= 0.0:
            raise BreakdownError(f"nonpositive curvature at iteration {it}")
        step = rr / curv
        x += step * p
        if it % 50 == 0:
            r = b - a @ x
        else:
            r -= step * ap
        rr_new = r @ r
        if np.sqrt(rr_new) <= target:
            true_res = np.linalg.norm(b - a @ x)
            if true_res <= target:
                return x, KrylovStats(iterations=it, residual=true_res, converged=True)
            r = b - a @ x
            rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = np.linalg.norm(b - a @ x)
    raise ConvergenceError(
        f"PCG did not converge in {max_iters} iterations (residual {res:.3e})",
        best=x,
        residual=res,
        iterations=max_iters,
    )


def pcgne_solve(
    m: SparseMatrix, b: np.ndarray, cfg: KrylovConfig = KrylovConfig()
) -> tuple[np.ndarray, KrylovStats]:
    """Solve a nonsymmetric system by CG on the normal equations.

    With a preconditioner M = LU the iteration runs on B = m M^{-1} (right
    preconditioning) and the returned x is M^{-1} of the inner unknown. The
    convergence test uses the true residual of the original system.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (m.dim,):
        raise DimensionError("right-hand side length mismatch")
    a = m.to_scipy()
    at = a.T.tocsr()
    pre = cfg.preconditioner
    if pre is None:
        bop = lambda v: a @ v
        btop = lambda v: at @ v
        unwrap = lambda z: z
    else:
        bop = lambda v: a @ pre.apply(v)
        btop = lambda v: pre.apply_transpose(at @ v)
        unwrap = pre.apply

    bnorm = np.linalg.norm(b)
    target = max(cfg.rel_tol * bnorm, cfg.abs_tol)
    z = np.zeros(m.dim)
    if bnorm == 0.0:
        return z, KrylovStats(iterations=0, residual=0.0, converged=True)
    r = b.copy()          # residual of B z = b
    s = btop(r)           # residual of the normal equations
    p = s.copy()
    ss = s @ s
    max_iters = cfg.resolved_max_iters(m.dim)
    for it in range(1, max_iters + 1):
        q = bop(p)
        qq = q @ q
        if qq <= 0.0:
            raise BreakdownError(f"breakdown in normal-equation CG at iteration {it}")
        step = ss / qq
        z += step * p
        if it % 50 == 0:
            r = b - bop(z)
        else:
            r -= step * q
        if np.linalg.norm(r) <= target:
            x = unwrap(z)
            true_res = np.linalg.norm(b - a @ x)
            if true_res <= target:
                return x, KrylovStats(iterations=it, residual=true_res, converged=True)
            r = b - bop(z)
        s_new = btop(r)
        ss_new = s_new @ s_new
        p = s_new + (ss_new / ss) * p
        ss = ss_new
    x = unwrap(z)
    res = np.linalg.norm(b - a @ x)
    raise ConvergenceError(
        f"PCGNE did not converge in {max_iters} iterations (residual {res:.3e})",
        best=x,
        residual=res,
        iterations=max_iters,
    )


def ilu0_factor(a: SparseMatrix) -> Ilu0Preconditioner:
    """Incomplete LU with zero fill-in on the pattern of a."""
    n = a.dim
    ro, ci = a.row_offsets, a.col_indices
    vals = a.values.copy()
    # position of each (row, col) entry for O(1) pattern lookups
    pos = [dict() for _ in range(n)]
    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for idx in range(ro[i], ro[i + 1]):
            j = ci[idx]
            pos[i][j] = idx
            if j == i:
                diag_pos[i] = idx
    if np.any(diag_pos < 0):
        raise PivotError(int(np.argmin(diag_pos)))
    for i in range(n):
        row_pos = pos[i]
        for idx in range(ro[i], ro[i + 1]):
            k = ci[idx]
            if k >= i:
                break
            pivot = vals[diag_pos[k]]
            if pivot == 0.0:
                raise PivotError(int(k))
            lik = vals[idx] / pivot
            vals[idx] = lik
            for kidx in range(diag_pos[k] + 1, ro[k + 1]):
                j = ci[kidx]
                tgt = row_pos.get(j)
                if tgt is not None:
                    vals[tgt] -= lik * vals[kidx]
        if vals[diag_pos[i]] == 0.0:
            raise PivotError(i)

    full = sp.csr_matrix((vals, ci.copy(), ro.copy()), shape=(n, n))
    lower = sp.tril(full, k=-1, format="csr") + sp.identity(n, format="csr")
    upper = sp.triu(full, k=0, format="csr")
    lower = lower.tocsr()
    upper = upper.tocsr()
    return Ilu0Preconditioner(
        lower=lower,
        upper=upper,
        lower_t=lower.T.tocsr(),
        upper_t=upper.T.tocsr(),
    )


def extreme_eigs(
    h: SparseMatrix, tol: float = 1e-6, max_iters: int = 100000
) -> SpectralEstimate:
    """Extreme eigenvalues of a symmetric matrix by (shifted) power iteration.

    lambda_max comes from power iteration on h; lambda_min from power
    iteration on lambda_max*I - h. Rayleigh quotients are used as the
    estimates, so convergence is quadratic in the iterate angle.
    """
    a = h.to_scipy()
    rng = np.random.default_rng(0)

    def power(op: Callable[[np.ndarray], np.ndarray]) -> tuple[float, int, float]:
        v = rng.standard_normal(h.dim)
        v /= np.linalg.norm(v)
        rq = np.inf
        delta = np.inf
        for it in range(1, max_iters + 1):
            w = op(v)
            rq_new = v @ w
            norm = np.linalg.norm(w)
            if norm == 0.0:
                return 0.0, it, 0.0
            delta = abs(rq_new - rq)
            rq = rq_new
            v = w / norm
            if delta <= tol * max(abs(rq), 1e-300):
                return rq, it, delta
        return rq, max_iters, delta

    lam_max, it1, res1 = power(lambda v: a @ v)
    shift = lam_max
    lam_shift, it2, res2 = power(lambda v: shift * v - a @ v)
    lam_min = shift - lam_shift
    return SpectralEstimate(
        lambda_min=float(lam_min),
        lambda_max=float(lam_max),
        iterations_used=it1 + it2,
        residual=float(max(res1, res2)),
    )


# -- Matrix Market interchange -------------------------------------------


def save_matrix_market(path, a: SparseMatrix) -> None:
    import scipy.io

    scipy.io.mmwrite(str(path), a.to_scipy().tocoo(), symmetry="general")


def load_matrix_market(path) -> SparseMatrix:
    import scipy.io

    return SparseMatrix.from_scipy(sp.csr_matrix(scipy.io.mmread(str(path))))
