"""Alternating-splitting smoothers built on shifted half-step solves.

Three kinds are provided:

  pgadi_hs   two inexact half-steps with a relaxation weight; equivalent, at
             tight inner tolerance, to the one-shot update
             x + alpha*(2-omega)*(alpha I + S)^-1 (alpha I + H)^-1 (b - A x)
  hss        the classical alternation of the two shifted systems
  spd_gadi   the symmetric reduction x + (2-omega)*(alpha I + H)^-1 (b - H x)

The shifted symmetric system is solved with PCG, the shifted skew system
with CG on the normal equations (PCGNE).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import sqrt

import numpy as np

from .sparse import (
    HsSplitting,
    Ilu0Preconditioner,
    KrylovConfig,
    SparseError,
    SparseMatrix,
    extreme_eigs,
    ilu0_factor,
    pcg_solve,
    pcgne_solve,
    spmv,
)

SMOOTHER_KINDS = ("pgadi_hs", "hss", "spd_gadi")


class SmootherError(SparseError):
    pass


@dataclass(frozen=True)
class SmootherConfig:
    kind: str
    alpha: float
    omega: float = 1.0           # unused by hss
    inner: KrylovConfig = field(default_factory=KrylovConfig)
    precond: str = "identity"    # identity | ilu0, applied in the skew half-step

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother kind {self.kind!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind != "hss" and not (0.0 < self.omega < 2.0):
            raise ValueError("omega must lie in (0, 2)")
        if self.precond not in ("identity", "ilu0"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")


def _skew_config(inner: KrylovConfig, pre: Ilu0Preconditioner | None) -> KrylovConfig:
    return replace(inner, preconditioner=pre) if pre is not None else inner


class PgadiHsSmoother:
    """Two-half-step smoother; shifted operators are built once."""

    def __init__(self, a: SparseMatrix, split: HsSplitting, cfg: SmootherConfig):
        self.a = a
        self.split = split
        self.cfg = cfg
        self.shifted_h = split.h.add_shift(cfg.alpha)
        self.shifted_s = split.s.add_shift(cfg.alpha)
        pre = ilu0_factor(a) if cfg.precond == "ilu0" else None
        self.skew_cfg = _skew_config(cfg.inner, pre)

    def step(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        rhs1 = cfg.alpha * x - spmv(self.split.s, x) + b
        try:
            x_half, _ = pcg_solve(self.shifted_h, rhs1, cfg.inner)
        except SparseError as exc:
            raise SmootherError(f"symmetric half-step failed: {exc}") from exc
        rhs2 = cfg.alpha * (2.0 - cfg.omega) * (x_half - x)
        try:
            delta, _ = pcgne_solve(self.shifted_s, rhs2, self.skew_cfg)
        except SparseError as exc:
            raise SmootherError(f"skew half-step failed: {exc}") from exc
        return x + delta


class HssSmoother:
    def __init__(self, a: SparseMatrix, split: HsSplitting, cfg: SmootherConfig):
        self.a = a
        self.split = split
        self.cfg = cfg
        self.shifted_h = split.h.add_shift(cfg.alpha)
        self.shifted_s = split.s.add_shift(cfg.alpha)
        pre = ilu0_factor(a) if cfg.precond == "ilu0" else None
        self.skew_cfg = _skew_config(cfg.inner, pre)

    def step(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        rhs1 = cfg.alpha * x - spmv(self.split.s, x) + b
        try:
            x_half, _ = pcg_solve(self.shifted_h, rhs1, cfg.inner)
        except SparseError as exc:
            raise SmootherError(f"symmetric half-step failed: {exc}") from exc
        rhs2 = cfg.alpha * x_half - spmv(self.split.h, x_half) + b
        try:
            x_new, _ = pcgne_solve(self.shifted_s, rhs2, self.skew_cfg)
        except SparseError as exc:
            raise SmootherError(f"skew half-step failed: {exc}") from exc
        return x_new


class SpdGadiSmoother:
    """Symmetric reduction; the level matrix must equal its symmetric part."""

    def __init__(self, a: SparseMatrix, split: HsSplitting, cfg: SmootherConfig):
        self.a = a
        self.cfg = cfg
        self.shifted_h = split.h.add_shift(cfg.alpha)

    def step(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        r = b - spmv(self.a, x)
        try:
            z, _ = pcg_solve(self.shifted_h, r, cfg.inner)
        except SparseError as exc:
            raise SmootherError(f"shifted solve failed: {exc}") from exc
        return x + (2.0 - cfg.omega) * z


class ExactSmoother:
    """Dense direct solve in place of smoothing; testing aid."""

    def __init__(self, a: SparseMatrix, split: HsSplitting, cfg=None):
        import scipy.linalg

        self.a = a
        self._lu = scipy.linalg.lu_factor(a.to_dense())

    def step(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        import scipy.linalg

        r = b - spmv(self.a, x)
        return x + scipy.linalg.lu_solve(self._lu, r)


def make_smoother(a: SparseMatrix, split: HsSplitting, cfg: SmootherConfig):
    cls = {
        "pgadi_hs": PgadiHsSmoother,
        "hss": HssSmoother,
        "spd_gadi": SpdGadiSmoother,
    }[cfg.kind]
    return cls(a, split, cfg)


# -- functional forms -----------------------------------------------------


def pgadi_hs_step(
    a: SparseMatrix,
    split: HsSplitting,
    cfg: SmootherConfig,
    x: np.ndarray,
    b: np.ndarray,
) -> np.ndarray:
    if cfg.kind != "pgadi_hs":
        raise ValueError("config kind must be pgadi_hs")
    return PgadiHsSmoother(a, split, cfg).step(np.asarray(x, dtype=float), np.asarray(b, dtype=float))


def hss_step(
    a: SparseMatrix,
    split: HsSplitting,
    alpha: float,
    inner: KrylovConfig,
    x: np.ndarray,
    b: np.ndarray,
) -> np.ndarray:
    cfg = SmootherConfig(kind="hss", alpha=alpha, inner=inner)
    return HssSmoother(a, split, cfg).step(np.asarray(x, dtype=float), np.asarray(b, dtype=float))


def spd_gadi_step(
    h: SparseMatrix,
    alpha: float,
    omega: float,
    inner: KrylovConfig,
    x: np.ndarray,
    b: np.ndarray,
) -> np.ndarray:
    """x + (2-omega) * solve(alpha I + h, b - h x); alpha may be zero here."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    r = b - spmv(h, x)
    z, _ = pcg_solve(h.add_shift(alpha), r, inner)
    return x + (2.0 - omega) * z


def hss_optimal_alpha(h: SparseMatrix, tol: float = 1e-6) -> float:
    """sqrt(lambda_min * lambda_max) of the symmetric part."""
    est = extreme_eigs(h, tol)
    if est.lambda_min <= 0 or est.lambda_max <= 0:
        raise SmootherError(
            f"symmetric part not positive definite (eigs {est.lambda_min}, {est.lambda_max})"
        )
    return sqrt(est.lambda_min * est.lambda_max)
