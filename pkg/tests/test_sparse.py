"""Sparse storage, splitting, Krylov solvers, ILU(0), and eigen estimates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gadi_amg.problems import assemble, example_problem
from gadi_amg.sparse import (
    BreakdownError,
    ConvergenceError,
    DimensionError,
    KrylovConfig,
    PivotError,
    SparseMatrix,
    extreme_eigs,
    ilu0_factor,
    load_matrix_market,
    pcg_solve,
    pcgne_solve,
    save_matrix_market,
    split_hs,
    spmv,
)

from conftest import laplacian_2d, random_spd_part, tridiag


class TestSparseMatrix:
    def test_identity_roundtrip(self):
        a = SparseMatrix.identity(3)
        assert np.allclose(a.to_dense(), np.eye(3))

    def test_from_dense_roundtrip(self, rng):
        d = rng.standard_normal((7, 7))
        d[np.abs(d) < 0.8] = 0.0
        assert np.array_equal(SparseMatrix.from_dense(d).to_dense(), d)

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionError):
            SparseMatrix.from_dense(np.ones((2, 3)))

    def test_rejects_bad_offsets(self):
        with pytest.raises(DimensionError):
            SparseMatrix(
                dim=2,
                row_offsets=np.array([0, 2, 1]),
                col_indices=np.array([0, 1]),
                values=np.array([1.0, 1.0]),
            )

    def test_rejects_duplicate_columns(self):
        with pytest.raises(DimensionError):
            SparseMatrix(
                dim=2,
                row_offsets=np.array([0, 2, 2]),
                col_indices=np.array([1, 1]),
                values=np.array([1.0, 1.0]),
            )

    def test_rejects_column_out_of_range(self):
        with pytest.raises(DimensionError):
            SparseMatrix(
                dim=2,
                row_offsets=np.array([0, 1, 1]),
                col_indices=np.array([5]),
                values=np.array([1.0]),
            )

    def test_transpose(self, rng):
        d = rng.standard_normal((6, 6))
        a = SparseMatrix.from_dense(d)
        assert np.allclose(a.transpose().to_dense(), d.T)

    def test_add_shift(self):
        a = tridiag(4)
        assert np.allclose(a.add_shift(0.5).to_dense(), a.to_dense() + 0.5 * np.eye(4))

    @given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_dense_roundtrip_property(self, dim, seed):
        d = np.random.default_rng(seed).standard_normal((dim, dim))
        d[np.abs(d) < 0.5] = 0.0
        assert np.array_equal(SparseMatrix.from_dense(d).to_dense(), d)


class TestSplitHs:
    def test_identity(self):
        sp_ = split_hs(SparseMatrix.identity(3))
        assert np.allclose(sp_.h.to_dense(), np.eye(3))
        assert np.allclose(sp_.s.to_dense(), 0.0)

    def test_forced_2x2(self):
        sp_ = split_hs(SparseMatrix.from_dense([[2.0, 1.0], [0.0, 2.0]]))
        assert np.allclose(sp_.h.to_dense(), [[2.0, 0.5], [0.5, 2.0]])
        assert np.allclose(sp_.s.to_dense(), [[0.0, 0.5], [-0.5, 0.0]])

    def test_convdiff_reconstruction(self):
        system = assemble(example_problem("convdiff"), 4)
        sp_ = split_hs(system.matrix)
        a = system.matrix.to_dense()
        assert np.allclose(sp_.h.to_dense() + sp_.s.to_dense(), a, atol=4 * np.finfo(float).eps)
        assert np.allclose(sp_.h.to_dense(), sp_.h.to_dense().T)
        assert np.allclose(sp_.s.to_dense(), -sp_.s.to_dense().T)
        assert np.abs(sp_.s.to_dense()).max() > 0

    def test_symmetrized_pattern(self):
        # both parts live on the symmetrized pattern of the source
        a = SparseMatrix.from_dense([[1.0, 2.0], [0.0, 1.0]])
        sp_ = split_hs(a)
        assert sp_.h.nnz == 4
        assert sp_.s.nnz == 4  # explicit zeros on the diagonal are kept

    @given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_reconstruction_property(self, dim, seed):
        d = np.random.default_rng(seed).standard_normal((dim, dim))
        d[np.abs(d) < 0.5] = 0.0
        sp_ = split_hs(SparseMatrix.from_dense(d))
        assert np.allclose(sp_.h.to_dense() + sp_.s.to_dense(), d, atol=4 * np.finfo(float).eps)


class TestSpmv:
    def test_identity(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.allclose(spmv(SparseMatrix.identity(3), x), x)

    def test_tridiag_stencil(self):
        assert np.allclose(spmv(tridiag(3), np.ones(3)), [1.0, 0.0, 1.0])

    def test_dense_oracle(self, rng):
        d = rng.standard_normal((20, 20))
        d[np.abs(d) < 1.0] = 0.0
        x = rng.standard_normal(20)
        assert np.allclose(spmv(SparseMatrix.from_dense(d), x), d @ x, atol=1e-13)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            spmv(SparseMatrix.identity(3), np.ones(4))


class TestPcg:
    def test_identity(self):
        b = np.array([3.0, -1.0, 2.0])
        x, stats = pcg_solve(SparseMatrix.identity(3), b, KrylovConfig())
        assert np.allclose(x, b)
        assert stats.iterations <= 1

    def test_diagonal(self):
        x, _ = pcg_solve(
            SparseMatrix.diagonal([1.0, 2.0, 4.0]), np.array([1.0, 2.0, 4.0]), KrylovConfig()
        )
        assert np.allclose(x, 1.0)

    def test_tridiag_oracle(self):
        a = tridiag(5)
        b = np.zeros(5)
        b[0] = 1.0
        x, _ = pcg_solve(a, b, KrylovConfig())
        assert np.allclose(x, np.linalg.solve(a.to_dense(), b), atol=1e-10)

    def test_nonconvergence_carries_best(self):
        a = tridiag(50)
        b = np.ones(50)
        with pytest.raises(ConvergenceError) as exc:
            pcg_solve(a, b, KrylovConfig(rel_tol=1e-14, max_iters=2))
        assert exc.value.best.shape == (50,)
        assert exc.value.residual > 0

    def test_residual_contract(self, rng):
        h = random_spd_part(rng, 12)
        h = 0.5 * (h + h.T)
        a = SparseMatrix.from_dense(h)
        b = rng.standard_normal(12)
        cfg = KrylovConfig(rel_tol=1e-9)
        x, stats = pcg_solve(a, b, cfg)
        assert np.linalg.norm(b - h @ x) <= cfg.rel_tol * np.linalg.norm(b) * 1.01


class TestPcgne:
    def test_identity(self):
        b = np.array([1.0, 2.0])
        x, _ = pcgne_solve(SparseMatrix.identity(2), b, KrylovConfig())
        assert np.allclose(x, b)

    def test_analytic_2x2(self):
        m = SparseMatrix.from_dense([[1.0, 1.0], [-1.0, 1.0]])
        x, _ = pcgne_solve(m, np.array([1.0, 0.0]), KrylovConfig())
        assert np.allclose(x, [0.5, 0.5], atol=1e-9)

    def test_shifted_skew_oracle(self, rng):
        s = rng.standard_normal((8, 8))
        s = 0.5 * (s - s.T)
        m = 0.5 * np.eye(8) + s
        b = rng.standard_normal(8)
        x, _ = pcgne_solve(SparseMatrix.from_dense(m), b, KrylovConfig())
        assert np.allclose(x, np.linalg.solve(m, b), atol=1e-9)

    @given(st.integers(min_value=2, max_value=16), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_random_nonsingular_property(self, dim, seed):
        g = np.random.default_rng(seed)
        m = g.standard_normal((dim, dim)) + dim * np.eye(dim)
        b = g.standard_normal(dim)
        x, _ = pcgne_solve(SparseMatrix.from_dense(m), b, KrylovConfig(rel_tol=1e-12))
        assert np.allclose(x, np.linalg.solve(m, b), atol=1e-8)

    def test_ilu0_preconditioned(self):
        system = assemble(example_problem("convdiff"), 6)
        pre = ilu0_factor(system.matrix)
        cfg = KrylovConfig(preconditioner=pre)
        x, stats = pcgne_solve(system.matrix, system.rhs, cfg)
        a = system.matrix.to_dense()
        assert np.allclose(x, np.linalg.solve(a, system.rhs), atol=1e-7)


class TestIlu0:
    def test_diagonal(self):
        pre = ilu0_factor(SparseMatrix.diagonal([2.0, 4.0]))
        assert np.allclose(pre.apply(np.array([2.0, 4.0])), [1.0, 1.0])

    def test_lower_triangular_exact(self):
        a = np.array([[2.0, 0.0], [1.0, 3.0]])
        pre = ilu0_factor(SparseMatrix.from_dense(a))
        r = np.array([4.0, 5.0])
        assert np.allclose(pre.apply(r), np.linalg.solve(a, r), atol=1e-13)

    def test_laplacian_preconditioner_contracts(self):
        a = laplacian_2d(4)
        pre = ilu0_factor(a)
        d = a.to_dense()
        # columns of (LU)^-1 A assembled by applying the preconditioner
        m = np.column_stack([pre.apply(d[:, j]) for j in range(a.dim)])
        rho = np.max(np.abs(np.linalg.eigvals(np.eye(a.dim) - m)))
        assert rho < 1.0
        assert rho > 0.0  # zero fill-in is genuinely inexact here

    def test_apply_transpose(self, rng):
        a = laplacian_2d(3)
        pre = ilu0_factor(a)
        u = rng.standard_normal(a.dim)
        v = rng.standard_normal(a.dim)
        # <M^-1 u, v> = <u, M^-T v>
        assert np.isclose(pre.apply(u) @ v, u @ pre.apply_transpose(v))

    def test_zero_pivot(self):
        a = SparseMatrix.from_dense([[0.0, 1.0], [1.0, 1.0]])
        with pytest.raises(PivotError):
            ilu0_factor(a)


class TestExtremeEigs:
    def test_diag(self):
        est = extreme_eigs(SparseMatrix.diagonal([1.0, 4.0]), 1e-10)
        assert np.isclose(est.lambda_max, 4.0, rtol=1e-6)
        assert np.isclose(est.lambda_min, 1.0, rtol=1e-6)

    def test_identity(self):
        est = extreme_eigs(SparseMatrix.identity(5), 1e-10)
        assert np.isclose(est.lambda_max, 1.0)
        assert np.isclose(est.lambda_min, 1.0)

    def test_tridiag_analytic(self):
        n = 10
        est = extreme_eigs(tridiag(n), 1e-9)
        eigs = 2.0 - 2.0 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1))
        assert np.isclose(est.lambda_max, eigs.max(), atol=1e-6)
        assert np.isclose(est.lambda_min, eigs.min(), atol=1e-6)

    def test_rayleigh_bracketing(self, rng):
        h = random_spd_part(rng, 10)
        h = 0.5 * (h + h.T)
        a = SparseMatrix.from_dense(h)
        est = extreme_eigs(a, 1e-8)
        assert est.lambda_min > 0
        for _ in range(5):
            v = rng.standard_normal(10)
            rq = v @ (h @ v) / (v @ v)
            assert est.lambda_min - 1e-6 <= rq <= est.lambda_max + 1e-6


class TestMatrixMarket:
    def test_roundtrip(self, tmp_path, rng):
        d = rng.standard_normal((6, 6))
        d[np.abs(d) < 0.7] = 0.0
        np.fill_diagonal(d, 2.0)
        a = SparseMatrix.from_dense(d)
        path = tmp_path / "a.mtx"
        save_matrix_market(path, a)
        assert np.allclose(load_matrix_market(path).to_dense(), d)
