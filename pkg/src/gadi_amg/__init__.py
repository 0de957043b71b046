"""Algebraic multigrid with alternating-splitting smoothers and GPR-based
splitting-parameter prediction."""

from .amg import (
    AmgHierarchy,
    CoarseningConfig,
    DivergenceError,
    SolveReport,
    estimate_contraction,
    setup,
    solve,
    vcycle,
    with_smoother,
)
from .problems import (
    AssembledSystem,
    ProblemSpec,
    assemble,
    discretization_error,
    example_problem,
)
from .smoothers import (
    SmootherConfig,
    hss_optimal_alpha,
    make_smoother,
)
from .sparse import (
    HsSplitting,
    KrylovConfig,
    SparseError,
    SparseMatrix,
    split_hs,
)

__version__ = "0.1.0"

__all__ = [
    "AmgHierarchy",
    "AssembledSystem",
    "CoarseningConfig",
    "DivergenceError",
    "HsSplitting",
    "KrylovConfig",
    "ProblemSpec",
    "SmootherConfig",
    "SolveReport",
    "SparseError",
    "SparseMatrix",
    "assemble",
    "discretization_error",
    "estimate_contraction",
    "example_problem",
    "hss_optimal_alpha",
    "make_smoother",
    "setup",
    "solve",
    "split_hs",
    "vcycle",
    "with_smoother",
    "__version__",
]
