"""Algebraic multigrid: Ruge-Stuben coarsening, Galerkin operators, V-cycle.

The cycle performs exactly one smoothing step before the coarse-grid
correction and no post-smoothing by default; a flag enables one symmetric
post-smoothing step. Restriction is the transpose of interpolation and the
coarse operators are Galerkin triple products.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .sparse import (
    HsSplitting,
    SparseError,
    SparseMatrix,
    SpectralEstimate,
    extreme_eigs,
    split_hs,
    spmv,
)
from .smoothers import SmootherConfig, make_smoother

C_POINT = 1
F_POINT = 0


class CoarseningDefectError(SparseError):
    pass


class DivergenceError(SparseError):
    def __init__(self, message: str, history: np.ndarray):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class CoarseningConfig:
    strength_theta: float = 0.025
    max_levels: int = 20
    min_coarse_size: int = 10
    interp: str = "direct"  # direct | standard

    def __post_init__(self):
        if not (0.0 < self.strength_theta < 1.0):
            raise ValueError("strength_theta must lie in (0, 1)")
        if self.min_coarse_size < 1:
            raise ValueError("min_coarse_size must be >= 1")
        if self.interp not in ("direct", "standard"):
            raise ValueError(f"unknown interpolation mode {self.interp!r}")


@dataclass
class Level:
    a: SparseMatrix
    splitting: HsSplitting
    smoother: object
    interp_to_finer: Optional[SparseMatrix] = None  # absent on the finest level
    _spectral: Optional[SpectralEstimate] = None

    @property
    def spectral(self) -> SpectralEstimate:
        # estimated lazily: the shifted power iteration for lambda_min is far
        # too slow to run eagerly on every fine level
        if self._spectral is None:
            self._spectral = extreme_eigs(self.splitting.h, tol=1e-4, max_iters=20000)
        return self._spectral


@dataclass
class AmgHierarchy:
    levels: list[Level]  # fine to coarse
    config: CoarseningConfig
    smoother_cfg: SmootherConfig
    coarsest_lu: tuple
    post_smooth: bool = False

    @property
    def finest(self) -> Level:
        return self.levels[0]

    def summary(self) -> dict:
        nnz0 = self.levels[0].a.nnz
        return {
            "levels": [
                {"dim": lv.a.dim, "nnz": lv.a.nnz} for lv in self.levels
            ],
            "operator_complexity": sum(lv.a.nnz for lv in self.levels) / nnz0,
        }


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_history: np.ndarray
    converged: bool
    wall_time: float


# -- coarsening ----------------------------------------------------------


def strength_connections(a: SparseMatrix, theta: float) -> sp.csr_matrix:
    """Directed strong-dependency graph: entry (i, j) set when i strongly
    depends on j, using the classical negative-coupling rule."""
    m = a.to_scipy()
    n = a.dim
    ro, ci, vals = m.indptr, m.indices, m.data
    rows = np.repeat(np.arange(n), np.diff(ro))
    offdiag = rows != ci
    neg = np.where(offdiag, -vals, 0.0)
    row_max = np.zeros(n)
    np.maximum.at(row_max, rows, neg)
    keep = offdiag & (row_max[rows] > 0) & (neg >= theta * row_max[rows]) & (neg > 0)
    graph = sp.csr_matrix(
        (np.ones(keep.sum(), dtype=np.int8), (rows[keep], ci[keep])), shape=(n, n)
    )
    graph.sum_duplicates()
    graph.sort_indices()
    return graph


def rs_coarsen(strength: sp.csr_matrix) -> np.ndarray:
    """Classical two-pass Ruge-Stuben C/F splitting.

    First pass: greedy by descending count of strong dependents, ties broken
    by lowest index. Second pass: every strong F-F pair must share a common
    interpolatory C point; offenders are promoted to C.
    """
    n = strength.shape[0]
    s_rows = [strength.indices[strength.indptr[i]:strength.indptr[i + 1]] for i in range(n)]
    st = strength.T.tocsr()
    st_rows = [st.indices[st.indptr[i]:st.indptr[i + 1]] for i in range(n)]

    measure = np.array([len(r) for r in st_rows], dtype=np.int64)
    assigned = np.full(n, -1, dtype=np.int8)  # -1 unassigned

    import heapq

    heap = [(-measure[i], i) for i in range(n)]
    heapq.heapify(heap)
    while heap:
        neg_m, i = heapq.heappop(heap)
        if assigned[i] != -1 or -neg_m != measure[i]:
            continue
        if -neg_m == 0:
            # nothing depends on the remaining nodes; they become F
            assigned[i] = F_POINT
            continue
        assigned[i] = C_POINT
        for j in st_rows[i]:
            if assigned[j] != -1:
                continue
            assigned[j] = F_POINT
            for k in s_rows[j]:
                if assigned[k] == -1:
                    measure[k] += 1
                    heapq.heappush(heap, (-measure[k], k))
        for j in s_rows[i]:
            if assigned[j] == -1 and measure[j] > 0:
                measure[j] -= 1
                heapq.heappush(heap, (-measure[j], j))
    assigned[assigned == -1] = F_POINT
    cf = assigned.astype(np.int8)

    # second pass: each strong F-F pair needs a shared interpolatory C point
    strong_sets = [set(r.tolist()) for r in s_rows]
    for i in range(n):
        if cf[i] != F_POINT:
            continue
        ci_set = {j for j in s_rows[i] if cf[j] == C_POINT}
        tentative = None
        for j in s_rows[i]:
            if cf[j] != F_POINT:
                continue
            if ci_set & strong_sets[j]:
                continue
            if tentative is None:
                # provisionally promote the offending neighbor
                tentative = j
                cf[j] = C_POINT
                ci_set.add(j)
            else:
                # a second offender: promote i itself and revert
                cf[tentative] = F_POINT
                cf[i] = C_POINT
                tentative = None
                break
    return cf


def build_interpolation(
    a: SparseMatrix,
    strength: sp.csr_matrix,
    cf_split: np.ndarray,
    mode: str = "direct",
) -> SparseMatrix:
    """Interpolation from the C-variable space to the full space.

    C rows carry weight 1 on their own coarse index. F rows use direct
    interpolation over strong C neighbors by default; "standard" mode also
    distributes strong F couplings through common C points and lumps weak
    couplings into the diagonal.
    """
    if mode not in ("direct", "standard"):
        raise ValueError(f"unknown interpolation mode {mode!r}")
    n = a.dim
    coarse_index = np.cumsum(cf_split == C_POINT) - 1
    n_coarse = int((cf_split == C_POINT).sum())

    m = a.to_scipy()
    ro, ci, vals = m.indptr, m.indices, m.data
    srow = [set(strength.indices[strength.indptr[i]:strength.indptr[i + 1]].tolist()) for i in range(n)]

    rows, cols, data = [], [], []
    for i in range(n):
        if cf_split[i] == C_POINT:
            rows.append(i)
            cols.append(coarse_index[i])
            data.append(1.0)
            continue
        ent_cols = ci[ro[i]:ro[i + 1]]
        ent_vals = vals[ro[i]:ro[i + 1]]
        diag = 0.0
        neigh = {}
        for j, v in zip(ent_cols, ent_vals):
            if j == i:
                diag = v
            else:
                neigh[int(j)] = float(v)
        strong = srow[i]
        cs = [j for j in neigh if j in strong and cf_split[j] == C_POINT]
        fs = [j for j in neigh if j in strong and cf_split[j] == F_POINT]
        if not cs:
            if strong and any(neigh.get(j, 0.0) != 0.0 for j in strong):
                raise CoarseningDefectError(
                    f"F row {i} has strong couplings but no interpolatory C point"
                )
            continue  # isolated node: empty row, handled by the smoother
        if diag == 0.0:
            raise CoarseningDefectError(f"zero diagonal in interpolation row {i}")
        if mode == "direct":
            denom = sum(neigh[j] for j in cs)
            if denom == 0.0:
                raise CoarseningDefectError(f"vanishing strong-C sum in row {i}")
            factor = sum(neigh.values()) / denom
            for j in cs:
                rows.append(i)
                cols.append(coarse_index[j])
                data.append(-neigh[j] / diag * factor)
        else:
            cs_set = set(cs)
            d = diag
            numer = {j: neigh[j] for j in cs}
            for j in neigh:
                if j in cs_set or j in fs:
                    continue
                d += neigh[j]  # weak couplings lumped into the diagonal
            for mnode in fs:
                mrow_cols = ci[ro[mnode]:ro[mnode + 1]]
                mrow_vals = vals[ro[mnode]:ro[mnode + 1]]
                mvals = {int(jj): float(vv) for jj, vv in zip(mrow_cols, mrow_vals)}
                overlap = [j for j in cs if j in mvals]
                denom = sum(mvals[j] for j in overlap)
                if not overlap or denom == 0.0:
                    d += neigh[mnode]
                    continue
                for j in overlap:
                    numer[j] += neigh[mnode] * mvals[j] / denom
            if d == 0.0:
                raise CoarseningDefectError(f"vanishing denominator in row {i}")
            for j in cs:
                rows.append(i)
                cols.append(coarse_index[j])
                data.append(-numer[j] / d)

    p = sp.csr_matrix((data, (rows, cols)), shape=(n, max(n_coarse, 1)))
    p.sum_duplicates()
    return _from_rect(p)


def _from_rect(p: sp.csr_matrix) -> SparseMatrix:
    """Rectangular CSR carried in the square-matrix container is awkward;
    keep interpolation as a raw scipy matrix wrapped with CSR metadata."""
    return RectMatrix(p)


class RectMatrix:
    """Thin rectangular CSR wrapper for grid-transfer operators."""

    def __init__(self, m: sp.csr_matrix):
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        self._m = m

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self):
        return self._m.nnz

    def to_scipy(self) -> sp.csr_matrix:
        return self._m

    def to_dense(self) -> np.ndarray:
        return self._m.toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._m @ x

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        return self._m.T @ x


def galerkin_product(a: SparseMatrix, p) -> SparseMatrix:
    """P^T A P with duplicates merged and numerically-zero entries dropped."""
    psp = p.to_scipy() if hasattr(p, "to_scipy") else sp.csr_matrix(p)
    asp = a.to_scipy()
    if psp.shape[0] != a.dim:
        raise ValueError("interpolation row count must match fine dimension")
    coarse = (psp.T @ asp @ psp).tocsr()
    coarse.sum_duplicates()
    coarse.data[np.abs(coarse.data) < 1e-300] = 0.0
    coarse.eliminate_zeros()
    return SparseMatrix.from_scipy(coarse)


# -- hierarchy -----------------------------------------------------------


def setup(
    a: SparseMatrix,
    cfg: CoarseningConfig = CoarseningConfig(),
    smoother_cfg: SmootherConfig | None = None,
    post_smooth: bool = False,
) -> AmgHierarchy:
    if smoother_cfg is None:
        smoother_cfg = SmootherConfig(kind="pgadi_hs", alpha=1.0, omega=1.0)
    levels: list[Level] = []
    current = a
    interp = None
    while True:
        splitting = split_hs(current)
        levels.append(
            Level(
                a=current,
                splitting=splitting,
                smoother=make_smoother(current, splitting, smoother_cfg),
                interp_to_finer=interp,
            )
        )
        if current.dim <= cfg.min_coarse_size or len(levels) >= cfg.max_levels:
            break
        strength = strength_connections(current, cfg.strength_theta)
        cf = rs_coarsen(strength)
        n_coarse = int((cf == C_POINT).sum())
        if n_coarse == 0 or n_coarse >= current.dim or n_coarse > 0.9 * current.dim:
            break  # coarsening stalled
        p = build_interpolation(current, strength, cf, cfg.interp)
        coarse = galerkin_product(current, p)
        current = coarse
        interp = p
    lu = scipy.linalg.lu_factor(levels[-1].a.to_dense())
    return AmgHierarchy(
        levels=levels,
        config=cfg,
        smoother_cfg=smoother_cfg,
        coarsest_lu=lu,
        post_smooth=post_smooth,
    )


def with_smoother(h: AmgHierarchy, smoother_cfg: SmootherConfig) -> AmgHierarchy:
    """Rebuild only the per-level smoothers; matrices and transfers shared."""
    levels = [
        Level(
            a=lv.a,
            splitting=lv.splitting,
            smoother=make_smoother(lv.a, lv.splitting, smoother_cfg),
            interp_to_finer=lv.interp_to_finer,
            _spectral=lv._spectral,
        )
        for lv in h.levels
    ]
    return AmgHierarchy(
        levels=levels,
        config=h.config,
        smoother_cfg=smoother_cfg,
        coarsest_lu=h.coarsest_lu,
        post_smooth=h.post_smooth,
    )


def vcycle(h: AmgHierarchy, level: int, v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """One V-cycle recursion from the given level (0 = finest).

    The coarsest level returns the direct solve of A x = g regardless of v;
    other levels smooth once, restrict the residual, recurse with a zero
    initial guess, and prolong the correction.
    """
    lv = h.levels[level]
    if level == len(h.levels) - 1:
        return scipy.linalg.lu_solve(h.coarsest_lu, g)
    try:
        v1 = lv.smoother.step(np.asarray(v, dtype=float), np.asarray(g, dtype=float))
    except SparseError as exc:
        raise SparseError(f"smoother failed on level {level}: {exc}") from exc
    p = h.levels[level + 1].interp_to_finer
    r = g - spmv(lv.a, v1)
    q = vcycle(h, level + 1, np.zeros(h.levels[level + 1].a.dim), p.rmatvec(r))
    v1 = v1 + p.matvec(q)
    if h.post_smooth:
        v1 = lv.smoother.step(v1, np.asarray(g, dtype=float))
    return v1


def solve(
    h: AmgHierarchy,
    b: np.ndarray,
    tol: float = 1e-8,
    max_cycles: int = 500,
) -> tuple[np.ndarray, SolveReport]:
    """Iterate V-cycles from a zero initial guess until the relative
    residual drops below tol."""
    b = np.asarray(b, dtype=float)
    a = h.finest.a
    start = time.perf_counter()
    u = np.zeros(a.dim)
    r0 = np.linalg.norm(b)
    if r0 == 0.0:
        return u, SolveReport(0, np.array([0.0]), True, time.perf_counter() - start)
    history = [1.0]
    for it in range(1, max_cycles + 1):
        u = vcycle(h, 0, u, b)
        rel = np.linalg.norm(b - spmv(a, u)) / r0
        history.append(rel)
        if rel <= tol:
            return u, SolveReport(it, np.array(history), True, time.perf_counter() - start)
        if rel > 1e6 or not np.isfinite(rel):
            raise DivergenceError(
                f"V-cycle iteration diverged at cycle {it} (relative residual {rel:.3e})",
                np.array(history),
            )
    return u, SolveReport(max_cycles, np.array(history), False, time.perf_counter() - start)


def estimate_contraction(h: AmgHierarchy, iterations: int = 50) -> float:
    """Dominant growth factor of the error-propagation map in the H-norm,
    by power iteration on e -> e - vcycle(0, A e)."""
    if len(h.levels) == 1:
        return 0.0
    a = h.finest.a
    hmat = h.finest.splitting.h.to_scipy()

    def hnorm(e):
        val = e @ (hmat @ e)
        return np.sqrt(max(val, 0.0))

    rng = np.random.default_rng(7)
    e = rng.standard_normal(a.dim)
    e /= hnorm(e)
    ratio = 0.0
    for _ in range(iterations):
        correction = vcycle(h, 0, np.zeros(a.dim), spmv(a, e))
        e_new = e - correction
        norm = hnorm(e_new)
        if norm == 0.0:
            return 0.0
        ratio = norm
        e = e_new / norm
    return float(ratio)
