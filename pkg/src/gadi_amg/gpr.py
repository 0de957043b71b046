"""Gaussian process regression for splitting-parameter prediction.

Single-task GPR maps mesh size to one parameter; the multi-task variant
couples several parameters through a Kronecker task covariance. Inputs are
mesh sizes divided by 100 before kernel evaluation so unit length-scales
stay meaningful; the scale is stored with the model.

The default kernel evaluates sigma_f^2 * exp(-|x - y| / (2 iota^2)) with an
unsquared distance; the squared-exponential and a small kernel library are
available as alternatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

DEFAULT_NOISE = 1e-4
DEFAULT_INPUT_SCALE = 100.0

BASE_KERNELS = (
    "gauss_unsquared",
    "squared_exponential",
    "rational_quadratic",
    "matern_3_2",
    "periodic",
)


class GprError(Exception):
    pass


@dataclass(frozen=True)
class KernelSpec:
    base: str
    hyper: tuple[float, ...]  # (iota, sigma_f [, extra])

    def __post_init__(self):
        if self.base not in BASE_KERNELS and self.base != "combo":
            raise ValueError(f"unknown kernel base {self.base!r}")
        if any(h <= 0 for h in self.hyper):
            raise ValueError("kernel hyperparameters must be positive")


def kernel_eval(k, x, y):
    """Covariance between two (scaled) scalar inputs; vectorized."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(k, LibraryKernel):
        out = 0.0
        for w, mem in zip(k.weights, library_members(k.iota, k.sigma_f)):
            if w != 0.0:
                out = out + w * member_eval(mem, x, y)
        return out
    d = np.abs(x - y)
    iota, sigma_f = k.hyper[0], k.hyper[1]
    if k.base == "gauss_unsquared":
        return sigma_f**2 * np.exp(-d / (2.0 * iota**2))
    if k.base == "squared_exponential":
        return sigma_f**2 * np.exp(-(d**2) / (2.0 * iota**2))
    if k.base == "rational_quadratic":
        shape = k.hyper[2] if len(k.hyper) > 2 else 1.0
        return sigma_f**2 * (1.0 + d**2 / (2.0 * shape * iota**2)) ** (-shape)
    if k.base == "matern_3_2":
        s = math.sqrt(3.0) * d / iota
        return sigma_f**2 * (1.0 + s) * np.exp(-s)
    if k.base == "periodic":
        period = k.hyper[2] if len(k.hyper) > 2 else 1.0
        return sigma_f**2 * np.exp(-2.0 * np.sin(math.pi * d / period) ** 2 / iota**2)
    raise ValueError(f"kernel {k.base!r} has no direct evaluation")


def kernel_matrix(k: KernelSpec, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return kernel_eval(k, xs[:, None], ys[None, :])


def kernel_combo(library: list[KernelSpec], weights, x, y):
    """Nonnegative weighted sum over a kernel library."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(library):
        raise ValueError("weights length must match library length")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(weights > 0):
        raise GprError("all-zero kernel weights give a degenerate kernel")
    out = 0.0
    for w, k in zip(weights, library):
        if w != 0.0:
            out = out + w * kernel_eval(k, x, y)
    return out


@dataclass(frozen=True)
class ProductKernel:
    """Pointwise product of two base kernels (library building block)."""

    left: KernelSpec
    right: KernelSpec


def default_library(iota: float = 1.0, sigma_f: float = 1.0) -> list[KernelSpec]:
    """Four base kernels plus all pairwise products (N = 10).

    Products of two kernels with amplitude 1 are represented as combos of
    KernelSpec pairs; for evaluation we fold products into a callable-free
    spec by multiplying covariances.
    """
    bases = [
        KernelSpec("squared_exponential", (iota, sigma_f)),
        KernelSpec("rational_quadratic", (iota, sigma_f, 1.0)),
        KernelSpec("matern_3_2", (iota, sigma_f)),
        KernelSpec("periodic", (iota, sigma_f, 1.0)),
    ]
    return bases


def library_members(iota: float = 1.0, sigma_f: float = 1.0):
    """The N = 10 member evaluators: 4 bases and their pairwise products."""
    bases = default_library(iota, sigma_f)
    members: list = list(bases)
    for a, b in combinations(bases, 2):
        members.append(ProductKernel(a, b))
    return members


def member_eval(member, x, y):
    if isinstance(member, ProductKernel):
        return kernel_eval(member.left, x, y) * kernel_eval(member.right, x, y)
    return kernel_eval(member, x, y)


def library_matrix(members, weights, xs, ys):
    weights = np.asarray(weights, dtype=float)
    out = np.zeros((len(xs), len(ys)))
    for w, mem in zip(weights, members):
        if w != 0.0:
            out += w * member_eval(mem, xs[:, None], ys[None, :])
    return out


@dataclass(frozen=True)
class LibraryKernel:
    """Nonnegative weighted combination of the ten library members."""

    weights: tuple[float, ...]
    iota: float = 1.0
    sigma_f: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(library_members(self.iota, self.sigma_f)):
            raise ValueError("weight vector length must match the library size")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if not any(w > 0 for w in self.weights):
            raise GprError("all-zero kernel weights give a degenerate kernel")

    @property
    def base(self) -> str:
        return "library"

    @property
    def hyper(self) -> tuple[float, ...]:
        return (self.iota, self.sigma_f)


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float


@dataclass(frozen=True)
class GprModel:
    inputs: np.ndarray        # raw mesh sizes
    targets: np.ndarray
    kernel: KernelSpec
    noise_sigma: float
    input_scale: float
    chol: np.ndarray          # lower factor of K + sigma^2 I
    alpha_weights: np.ndarray  # (K + sigma^2 I)^-1 y

    @property
    def scaled_inputs(self) -> np.ndarray:
        return self.inputs / self.input_scale


def _build_model(inputs, targets, kernel, noise_sigma, input_scale) -> GprModel:
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    xs = inputs / input_scale
    k = kernel_matrix(kernel, xs, xs)
    cov = k + noise_sigma**2 * np.eye(len(xs))
    try:
        chol = scipy.linalg.cholesky(cov, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise GprError(f"covariance not positive definite: {exc}") from exc
    alpha = scipy.linalg.cho_solve((chol, True), targets)
    return GprModel(
        inputs=inputs,
        targets=targets,
        kernel=kernel,
        noise_sigma=noise_sigma,
        input_scale=input_scale,
        chol=chol,
        alpha_weights=alpha,
    )


def log_marginal_likelihood(model: GprModel) -> float:
    """-1/2 y^T (K+s^2 I)^-1 y - 1/2 log det(K+s^2 I) - (n/2) log 2 pi."""
    y = model.targets
    n = len(y)
    quad = y @ model.alpha_weights
    logdet = 2.0 * np.sum(np.log(np.diag(model.chol)))
    return float(-0.5 * quad - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi))


_MULTISTART = [(0.0, 0.0), (-2.0, -2.0), (-2.0, 2.0), (2.0, -2.0), (2.0, 2.0)]


def fit(
    inputs,
    targets,
    kernel_family: str = "gauss_unsquared",
    noise_sigma: float = DEFAULT_NOISE,
    input_scale: float = DEFAULT_INPUT_SCALE,
) -> GprModel:
    """Maximize the log marginal likelihood over (iota, sigma_f) in log
    space with L-BFGS from five fixed starting points."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(inputs) < 2:
        raise GprError("at least 2 training points required")
    if len(inputs) != len(targets):
        raise GprError("inputs and targets must have equal length")
    if not (1e-6 <= noise_sigma <= 1e-2):
        raise GprError("noise_sigma outside the supported range [1e-6, 1e-2]")

    if kernel_family == "library":
        return _fit_library(inputs, targets, noise_sigma, input_scale)

    extra = _kernel_extras(kernel_family)

    def neg_lml(log_theta):
        kernel = KernelSpec(kernel_family, tuple(np.exp(log_theta)) + extra)
        try:
            model = _build_model(inputs, targets, kernel, noise_sigma, input_scale)
        except GprError:
            return 1e12
        return -log_marginal_likelihood(model)

    best = None
    for start in _MULTISTART:
        res = minimize(
            neg_lml,
            np.array(start),
            method="L-BFGS-B",
            bounds=[(-8.0, 8.0), (-8.0, 8.0)],
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e12:
        raise GprError("all optimizer starts failed to factorize the covariance")
    kernel = KernelSpec(kernel_family, tuple(np.exp(best.x)) + extra)
    return _build_model(inputs, targets, kernel, noise_sigma, input_scale)


_N_LIBRARY = 10


def _fit_library(inputs, targets, noise_sigma, input_scale) -> GprModel:
    """Optimize the log-weights of the ten-member kernel combination."""

    def neg_lml(log_w):
        kernel = LibraryKernel(tuple(np.exp(log_w)))
        try:
            model = _build_model(inputs, targets, kernel, noise_sigma, input_scale)
        except GprError:
            return 1e12
        return -log_marginal_likelihood(model)

    starts = [
        np.zeros(_N_LIBRARY),
        np.full(_N_LIBRARY, -2.0),
        np.full(_N_LIBRARY, 2.0),
        np.array([0.0, -2.0] * (_N_LIBRARY // 2)),
        np.array([-2.0, 0.0] * (_N_LIBRARY // 2)),
    ]
    best = None
    for w0 in starts:
        res = minimize(neg_lml, w0, method="L-BFGS-B", bounds=[(-10.0, 6.0)] * _N_LIBRARY)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= 1e12:
        raise GprError("library-kernel fit failed at every restart")
    kernel = LibraryKernel(tuple(np.exp(best.x)))
    return _build_model(inputs, targets, kernel, noise_sigma, input_scale)


def _kernel_extras(kernel_family: str) -> tuple:
    if kernel_family == "rational_quadratic":
        return (1.0,)
    if kernel_family == "periodic":
        return (1.0,)
    return ()


def predict(model: GprModel, x_star: float) -> Posterior:
    xs = model.scaled_inputs
    xq = np.atleast_1d(np.asarray(x_star, dtype=float)) / model.input_scale
    kstar = kernel_eval(model.kernel, xq[:, None], xs[None, :])
    mean = kstar @ model.alpha_weights
    v = scipy.linalg.solve_triangular(model.chol, kstar.T, lower=True)
    kss = kernel_eval(model.kernel, xq, xq)
    var = kss - np.sum(v * v, axis=0)
    var = np.where(var < 0.0, 0.0, var)
    return Posterior(mean=float(mean[0]), variance=float(var[0]))


# -- multi-task ----------------------------------------------------------


@dataclass(frozen=True)
class MtGprModel:
    inputs: np.ndarray        # shared raw inputs, length n
    outputs: np.ndarray       # (M, n)
    kernel: KernelSpec
    task_cov: np.ndarray      # (M, M) SPD
    noises: np.ndarray        # per-task noise sigmas, length M
    input_scale: float
    chol: np.ndarray          # factor of Sigma = K^t x K^x + D x I
    alpha_weights: np.ndarray  # Sigma^-1 vec(Y), task-major
    weights: np.ndarray | None = None  # kernel library weight matrix (M, N)

    @property
    def task_count(self) -> int:
        return self.outputs.shape[0]

    @property
    def scaled_inputs(self) -> np.ndarray:
        return self.inputs / self.input_scale


def _mt_sigma(kernel, task_cov, noises, xs):
    kx = kernel_matrix(kernel, xs, xs)
    n = len(xs)
    return np.kron(task_cov, kx) + np.kron(np.diag(np.asarray(noises) ** 2), np.eye(n))


def mt_build(
    inputs,
    outputs,
    kernel: KernelSpec,
    task_cov,
    noises,
    input_scale: float = DEFAULT_INPUT_SCALE,
    weights=None,
) -> MtGprModel:
    """Assemble a multi-task model from explicit components."""
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    task_cov = np.asarray(task_cov, dtype=float)
    noises = np.asarray(noises, dtype=float)
    xs = inputs / input_scale
    sigma = _mt_sigma(kernel, task_cov, noises, xs)
    try:
        chol = scipy.linalg.cholesky(sigma, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise GprError(f"multi-task covariance not positive definite: {exc}") from exc
    y = outputs.reshape(-1)  # task-major
    alpha = scipy.linalg.cho_solve((chol, True), y)
    return MtGprModel(
        inputs=inputs,
        outputs=outputs,
        kernel=kernel,
        task_cov=task_cov,
        noises=noises,
        input_scale=input_scale,
        chol=chol,
        alpha_weights=alpha,
        weights=None if weights is None else np.asarray(weights, dtype=float),
    )


def mt_log_marginal_likelihood(model: MtGprModel) -> float:
    y = model.outputs.reshape(-1)
    quad = y @ model.alpha_weights
    logdet = 2.0 * np.sum(np.log(np.diag(model.chol)))
    return float(-0.5 * quad - 0.5 * logdet - 0.5 * len(y) * math.log(2.0 * math.pi))


def mt_fit(
    inputs,
    outputs,
    kernel_family: str = "gauss_unsquared",
    noise_init: float = DEFAULT_NOISE,
    input_scale: float = DEFAULT_INPUT_SCALE,
) -> MtGprModel:
    """Fit task covariance, kernel hyperparameters, and per-task noises by
    maximizing the joint marginal likelihood; the dense covariance limits
    this to small training sets (M * n up to a few hundred)."""
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    m, n = outputs.shape
    if n < 2:
        raise GprError("at least 2 training points required")
    if len(inputs) != n:
        raise GprError("inputs and outputs must share the data dimension")
    extra = _kernel_extras(kernel_family)
    n_kern = _N_LIBRARY if kernel_family == "library" else 2

    tril_idx = np.tril_indices(m)
    n_tril = len(tril_idx[0])

    def unpack(theta):
        log_hyper = theta[:n_kern]
        lvals = theta[n_kern:n_kern + n_tril]
        log_noise = theta[n_kern + n_tril:]
        lmat = np.zeros((m, m))
        lmat[tril_idx] = lvals
        # positive diagonal via exp keeps K^t nonsingular
        lmat[np.diag_indices(m)] = np.exp(np.diag(lmat))
        if kernel_family == "library":
            # one weight vector shared by all tasks (single data kernel K^x)
            kernel = LibraryKernel(tuple(np.exp(log_hyper)))
        else:
            kernel = KernelSpec(kernel_family, tuple(np.exp(log_hyper)) + extra)
        return kernel, lmat @ lmat.T, np.exp(log_noise)

    def neg_lml(theta):
        kernel, task_cov, noises = unpack(theta)
        try:
            model = mt_build(inputs, outputs, kernel, task_cov, noises, input_scale)
        except GprError:
            return 1e12
        return -mt_log_marginal_likelihood(model)

    starts = []
    kern_starts = (
        [np.zeros(n_kern), np.full(n_kern, -1.0), np.full(n_kern, 1.0)]
        if kernel_family == "library"
        else [np.array(s) for s in [(0.0, 0.0), (-1.0, 0.5), (1.0, -0.5)]]
    )
    for k0 in kern_starts:
        theta0 = np.concatenate(
            [k0, np.zeros(n_tril), np.full(m, math.log(noise_init))]
        )
        starts.append(theta0)

    bounds = (
        [(-8.0, 8.0)] * n_kern
        + [(-6.0, 6.0)] * n_tril
        + [(math.log(1e-6), math.log(1e-1))] * m
    )
    best = None
    for theta0 in starts:
        res = minimize(neg_lml, theta0, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= 1e12:
        raise GprError("multi-task fit failed at every restart")
    kernel, task_cov, noises = unpack(best.x)
    return mt_build(inputs, outputs, kernel, task_cov, noises, input_scale)


def mt_predict(model: MtGprModel, x_star: float, task: int) -> Posterior:
    if not (0 <= task < model.task_count):
        raise GprError(f"task index {task} out of range")
    xs = model.scaled_inputs
    xq = float(x_star) / model.input_scale
    kx = kernel_eval(model.kernel, np.full(len(xs), xq), xs)
    kt = model.task_cov[:, task]
    v = np.kron(kt, kx)
    mean = v @ model.alpha_weights
    kss = float(kernel_eval(model.kernel, np.array([xq]), np.array([xq]))[0])
    w = scipy.linalg.cho_solve((model.chol, True), v)
    var = model.task_cov[task, task] * kss - v @ w
    return Posterior(mean=float(mean), variance=float(max(var, 0.0)))


# -- serialization -------------------------------------------------------


def _kernel_to_dict(kernel) -> dict:
    doc = {"base": kernel.base, "hyper": list(kernel.hyper)}
    if isinstance(kernel, LibraryKernel):
        doc["weights"] = list(kernel.weights)
    return doc


def _kernel_from_dict(doc: dict):
    if doc["base"] == "library":
        return LibraryKernel(tuple(doc["weights"]), *doc["hyper"])
    return KernelSpec(doc["base"], tuple(doc["hyper"]))


def model_to_dict(model) -> dict:
    if isinstance(model, GprModel):
        return {
            "kernel": _kernel_to_dict(model.kernel),
            "noise_sigma": model.noise_sigma,
            "input_scale": model.input_scale,
            "inputs": model.inputs.tolist(),
            "targets": model.targets.tolist(),
        }
    if isinstance(model, MtGprModel):
        return {
            "kernel": _kernel_to_dict(model.kernel),
            "noise_sigma": model.noises.tolist(),
            "input_scale": model.input_scale,
            "inputs": model.inputs.tolist(),
            "targets": model.outputs.tolist(),
            "task_count": model.task_count,
            "task_cov": model.task_cov.tolist(),
            "weights": None if model.weights is None else model.weights.tolist(),
        }
    raise TypeError(f"not a GPR model: {type(model)!r}")


def model_from_dict(doc: dict):
    kernel = _kernel_from_dict(doc["kernel"])
    if "task_count" in doc and doc["task_count"] is not None:
        return mt_build(
            np.asarray(doc["inputs"], dtype=float),
            np.asarray(doc["targets"], dtype=float),
            kernel,
            np.asarray(doc["task_cov"], dtype=float),
            np.asarray(doc["noise_sigma"], dtype=float),
            input_scale=doc["input_scale"],
            weights=doc.get("weights"),
        )
    return _build_model(
        np.asarray(doc["inputs"], dtype=float),
        np.asarray(doc["targets"], dtype=float),
        kernel,
        doc["noise_sigma"],
        doc["input_scale"],
    )


def save_model(path, model) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
