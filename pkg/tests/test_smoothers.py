"""Smoother algebra: half-step vs one-shot equivalence, reductions, bounds."""

import numpy as np
import pytest

from gadi_amg.problems import assemble, example_problem
from gadi_amg.smoothers import (
    SmootherConfig,
    hss_optimal_alpha,
    hss_step,
    make_smoother,
    pgadi_hs_step,
    spd_gadi_step,
)
from gadi_amg.sparse import KrylovConfig, SparseMatrix, split_hs

from conftest import random_spd_part, tridiag

TIGHT = KrylovConfig(rel_tol=1e-12)


def one_shot_oracle(a_dense, alpha, omega, x, b):
    """x + alpha (2-omega) (alpha I + S)^-1 (alpha I + H)^-1 (b - A x)."""
    h = 0.5 * (a_dense + a_dense.T)
    s = 0.5 * (a_dense - a_dense.T)
    eye = np.eye(len(a_dense))
    r = b - a_dense @ x
    return x + alpha * (2.0 - omega) * np.linalg.solve(
        alpha * eye + s, np.linalg.solve(alpha * eye + h, r)
    )


def hss_oracle(a_dense, alpha, x, b):
    h = 0.5 * (a_dense + a_dense.T)
    s = 0.5 * (a_dense - a_dense.T)
    eye = np.eye(len(a_dense))
    x_half = np.linalg.solve(alpha * eye + h, (alpha * eye - s) @ x + b)
    return np.linalg.solve(alpha * eye + s, (alpha * eye - h) @ x_half + b)


class TestConfig:
    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError):
            SmootherConfig(kind="pgadi_hs", alpha=0.0)

    def test_rejects_omega_out_of_range(self):
        with pytest.raises(ValueError):
            SmootherConfig(kind="pgadi_hs", alpha=1.0, omega=2.0)

    def test_hss_ignores_omega_bound(self):
        SmootherConfig(kind="hss", alpha=1.0, omega=5.0)  # no error

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            SmootherConfig(kind="jacobi", alpha=1.0)


class TestPgadiHs:
    def test_fixed_point(self, rng):
        a_dense = random_spd_part(rng, 8)
        a = SparseMatrix.from_dense(a_dense)
        split = split_hs(a)
        b = rng.standard_normal(8)
        x_star = np.linalg.solve(a_dense, b)
        cfg = SmootherConfig(kind="pgadi_hs", alpha=0.5, omega=1.2, inner=TIGHT)
        out = pgadi_hs_step(a, split, cfg, x_star, b)
        assert np.linalg.norm(out - x_star) < 1e-9

    def test_one_shot_equivalence_6x6(self, rng):
        a_dense = random_spd_part(rng, 6)
        a = SparseMatrix.from_dense(a_dense)
        split = split_hs(a)
        x = rng.standard_normal(6)
        b = rng.standard_normal(6)
        cfg = SmootherConfig(kind="pgadi_hs", alpha=0.5, omega=1.2, inner=TIGHT)
        out = pgadi_hs_step(a, split, cfg, x, b)
        assert np.allclose(out, one_shot_oracle(a_dense, 0.5, 1.2, x, b), atol=1e-10)

    def test_spd_reduction(self, rng):
        h = random_spd_part(rng, 7)
        h = 0.5 * (h + h.T)
        a = SparseMatrix.from_dense(h)
        split = split_hs(a)
        x = rng.standard_normal(7)
        b = rng.standard_normal(7)
        for alpha in (0.2, 1.0):
            for omega in (0.5, 1.5):
                cfg = SmootherConfig(kind="pgadi_hs", alpha=alpha, omega=omega, inner=TIGHT)
                two_step = pgadi_hs_step(a, split, cfg, x, b)
                spd = spd_gadi_step(split.h, alpha, omega, TIGHT, x, b)
                assert np.allclose(two_step, spd, atol=1e-10)

    def test_affine_in_inputs(self, rng):
        a_dense = random_spd_part(rng, 6)
        a = SparseMatrix.from_dense(a_dense)
        split = split_hs(a)
        cfg = SmootherConfig(kind="pgadi_hs", alpha=0.7, omega=1.0, inner=TIGHT)
        sm = make_smoother(a, split, cfg)
        x = rng.standard_normal(6)
        b = rng.standard_normal(6)
        z = np.zeros(6)
        combo = sm.step(x, b) - sm.step(z, b) - sm.step(x, z) + sm.step(z, z)
        assert np.linalg.norm(combo) < 1e-9

    def test_ilu0_precond_matches_identity(self):
        system = assemble(example_problem("convdiff"), 6)
        split = split_hs(system.matrix)
        b = system.rhs
        x = np.zeros(system.matrix.dim)
        base = SmootherConfig(kind="pgadi_hs", alpha=0.3, omega=1.3, inner=TIGHT)
        pre = SmootherConfig(
            kind="pgadi_hs", alpha=0.3, omega=1.3, inner=TIGHT, precond="ilu0"
        )
        out1 = pgadi_hs_step(system.matrix, split, base, x, b)
        out2 = pgadi_hs_step(system.matrix, split, pre, x, b)
        assert np.allclose(out1, out2, atol=1e-8)


class TestHss:
    def test_fixed_point(self, rng):
        a_dense = random_spd_part(rng, 6)
        a = SparseMatrix.from_dense(a_dense)
        split = split_hs(a)
        b = rng.standard_normal(6)
        x_star = np.linalg.solve(a_dense, b)
        out = hss_step(a, split, 0.8, TIGHT, x_star, b)
        assert np.linalg.norm(out - x_star) < 1e-9

    def test_dense_oracle_small(self, rng):
        for dim in (1, 2):
            a_dense = random_spd_part(rng, dim)
            a = SparseMatrix.from_dense(a_dense)
            split = split_hs(a)
            x = rng.standard_normal(dim)
            b = rng.standard_normal(dim)
            out = hss_step(a, split, 1.0, TIGHT, x, b)
            assert np.allclose(out, hss_oracle(a_dense, 1.0, x, b), atol=1e-10)

    def test_dense_oracle_8x8(self, rng):
        a_dense = random_spd_part(rng, 8)
        a = SparseMatrix.from_dense(a_dense)
        split = split_hs(a)
        x = rng.standard_normal(8)
        b = rng.standard_normal(8)
        out = hss_step(a, split, 0.6, TIGHT, x, b)
        assert np.allclose(out, hss_oracle(a_dense, 0.6, x, b), atol=1e-10)


class TestSpdGadi:
    def test_scalar_exact(self):
        h = SparseMatrix.diagonal([2.0])
        out = spd_gadi_step(h, 0.0, 1.0, TIGHT, np.zeros(1), np.ones(1))
        assert np.isclose(out[0], 0.5)

    def test_fixed_point(self, rng):
        h = tridiag(6)
        b = rng.standard_normal(6)
        x_star = np.linalg.solve(h.to_dense(), b)
        out = spd_gadi_step(h, 0.5, 1.3, TIGHT, x_star, b)
        assert np.linalg.norm(out - x_star) < 1e-9

    def test_energy_ratio_bound(self, rng):
        # theta = (2 - omega) lambda_max / (alpha + lambda_max) bounds the
        # energy ratio H(Rv, Rv) / (Rv, v) for R = (2-omega)(alpha I + H)^-1
        h = tridiag(10)
        hd = h.to_dense()
        lam_max = np.linalg.eigvalsh(hd).max()
        alpha, omega = 0.3, 0.8
        r_op = (2.0 - omega) * np.linalg.inv(alpha * np.eye(10) + hd)
        theta = (2.0 - omega) * lam_max / (alpha + lam_max)
        for _ in range(20):
            v = rng.standard_normal(10)
            rv = r_op @ v
            assert rv @ (hd @ rv) <= theta * (rv @ v) + 1e-10
        assert theta < 2.0


class TestOptimalAlpha:
    def test_diag(self):
        assert np.isclose(hss_optimal_alpha(SparseMatrix.diagonal([1.0, 4.0])), 2.0, rtol=1e-5)

    def test_identity(self):
        assert np.isclose(hss_optimal_alpha(SparseMatrix.identity(4)), 1.0, rtol=1e-6)

    def test_poisson_n16_band(self):
        system = assemble(example_problem("poisson"), 16)
        alpha = hss_optimal_alpha(split_hs(system.matrix).h)
        assert 0.7812 * 0.75 <= alpha <= 0.7812 * 1.25
