"""Shared fixtures and small matrix builders for the test suite."""

import numpy as np
import pytest

from gadi_amg.sparse import SparseMatrix


def tridiag(n: int, lo=-1.0, mid=2.0, hi=-1.0) -> SparseMatrix:
    a = np.zeros((n, n))
    np.fill_diagonal(a, mid)
    idx = np.arange(n - 1)
    a[idx, idx + 1] = hi
    a[idx + 1, idx] = lo
    return SparseMatrix.from_dense(a)


def laplacian_2d(n: int) -> SparseMatrix:
    """5-point Laplacian on an n x n interior grid (no h scaling)."""
    import scipy.sparse as sp

    t = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n))
    eye = sp.identity(n)
    return SparseMatrix.from_scipy((sp.kron(eye, t) + sp.kron(t, eye)).tocsr())


def random_spd_part(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Dense nonsymmetric matrix whose symmetric part is SPD."""
    q = rng.standard_normal((dim, dim))
    h = q @ q.T + dim * np.eye(dim)
    s = rng.standard_normal((dim, dim))
    s = 0.5 * (s - s.T)
    return h + s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
