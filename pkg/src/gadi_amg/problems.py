"""Model problems: P1 finite element assembly on structured triangulations.

Three benchmark PDEs with homogeneous Dirichlet data and known exact
solutions:

  poisson    -laplace(u) = f            on [-pi/6, pi/6] x [0, 1]
  reaction   -laplace(u) + k u = f      on the unit square, k = 0.2
  convdiff   -eps laplace(u) + b.grad u = f   on the unit square,
             b = (cos(phi), sin(phi)), eps = 0.01

Each rectangle cell of the uniform n x n grid is split along the same
diagonal into two triangles. All cells share the same geometry, so the
element matrices are constant and assembly reduces to stamping two 3x3
blocks over the mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .sparse import DimensionError, SparseMatrix

KINDS = ("poisson", "reaction", "convdiff")


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    domain: tuple[float, float, float, float]
    k: float = 0.0          # reaction coefficient
    epsilon: float = 1.0    # diffusion coefficient (convdiff)
    phi: float = 0.0        # convection direction (convdiff), radians

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        x_lo, x_hi, y_lo, y_hi = self.domain
        if not (x_lo < x_hi and y_lo < y_hi):
            raise ValueError("degenerate domain")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k < 0:
            raise ValueError("reaction coefficient must be nonnegative")

    @property
    def convection(self) -> tuple[float, float]:
        if self.kind == "convdiff":
            return (math.cos(self.phi), math.sin(self.phi))
        return (0.0, 0.0)

    @property
    def diffusion(self) -> float:
        return self.epsilon if self.kind == "convdiff" else 1.0

    @property
    def reaction(self) -> float:
        return self.k if self.kind == "reaction" else 0.0


def example_problem(kind: str, phi: float = 0.0) -> ProblemSpec:
    """The canonical benchmark instances."""
    if kind == "poisson":
        return ProblemSpec(kind="poisson", domain=(-math.pi / 6, math.pi / 6, 0.0, 1.0))
    if kind == "reaction":
        return ProblemSpec(kind="reaction", domain=(0.0, 1.0, 0.0, 1.0), k=0.2)
    if kind == "convdiff":
        return ProblemSpec(
            kind="convdiff", domain=(0.0, 1.0, 0.0, 1.0), epsilon=0.01, phi=phi
        )
    raise ValueError(f"unknown problem kind {kind!r}")


def exact_solution(spec: ProblemSpec) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if spec.kind == "poisson":
        c = 1.0 / (9.0 + math.pi**2)
        return lambda x, y: c * np.cos(3.0 * x) * np.sin(math.pi * y)
    # reaction and convdiff share the same manufactured solution
    return lambda x, y: x * (1.0 - x) * np.sin(math.pi * y)


def forcing(spec: ProblemSpec) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Continuous operator applied to the exact solution."""
    pi = math.pi
    if spec.kind == "poisson":
        return lambda x, y: np.cos(3.0 * x) * np.sin(pi * y)
    if spec.kind == "reaction":
        k = spec.k

        def f_reaction(x, y):
            u = x * (1.0 - x) * np.sin(pi * y)
            return (2.0 + pi**2 * x * (1.0 - x)) * np.sin(pi * y) + k * u

        return f_reaction
    eps = spec.epsilon
    bx, by = spec.convection

    def f_convdiff(x, y):
        lap = (-2.0 - pi**2 * x * (1.0 - x)) * np.sin(pi * y)
        ux = (1.0 - 2.0 * x) * np.sin(pi * y)
        uy = pi * x * (1.0 - x) * np.cos(pi * y)
        return -eps * lap + bx * ux + by * uy

    return f_convdiff


@dataclass(frozen=True)
class AssembledSystem:
    spec: ProblemSpec
    n: int
    matrix: SparseMatrix
    rhs: np.ndarray
    node_coords: np.ndarray  # (dim, 2) interior node coordinates
    exact: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def exact_nodal(self) -> np.ndarray:
        return self.exact(self.node_coords[:, 0], self.node_coords[:, 1])

    @property
    def mesh_h(self) -> float:
        x_lo, x_hi, y_lo, y_hi = self.spec.domain
        return math.sqrt((x_hi - x_lo) * (y_hi - y_lo)) / self.n


def _reference_triangles(hx: float, hy: float):
    """The two congruent triangles of a cell, with vertex offsets in (i, j)."""
    # lower triangle: (0,0) (1,0) (1,1); upper triangle: (0,0) (1,1) (0,1)
    lower = [(0, 0), (1, 0), (1, 1)]
    upper = [(0, 0), (1, 1), (0, 1)]
    tris = []
    for offsets in (lower, upper):
        pts = np.array([(dx * hx, dy * hy) for dx, dy in offsets])
        b = np.column_stack([pts[1] - pts[0], pts[2] - pts[0]])
        area = abs(np.linalg.det(b)) / 2.0
        grads = (np.linalg.inv(b).T @ np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]).T).T
        tris.append((offsets, area, grads))
    return tris


def _element_matrix(spec: ProblemSpec, area: float, grads: np.ndarray) -> np.ndarray:
    diff = spec.diffusion * area * (grads @ grads.T)
    bx, by = spec.convection
    conv = (area / 3.0) * np.tile(grads @ np.array([bx, by]), (3, 1))
    mass = spec.reaction * (area / 12.0) * (np.ones((3, 3)) + np.eye(3))
    return diff + conv + mass


def assemble(spec: ProblemSpec, n: int) -> AssembledSystem:
    """Assemble the interior-node system for an n x n cell grid.

    The right-hand side applies the continuous operator to the exact
    solution and integrates against the hat functions with the 3-point
    edge-midpoint rule (exact for quadratics).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    x_lo, x_hi, y_lo, y_hi = spec.domain
    hx = (x_hi - x_lo) / n
    hy = (y_hi - y_lo) / n
    m = n - 1  # interior nodes per dimension
    dim = m * m

    # interior numbering: lexicographic, x fastest
    def interior_index(ix, iy):
        return (iy - 1) * m + (ix - 1)

    ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ci = ci.ravel()
    cj = cj.ravel()

    f = forcing(spec)
    rows, cols, vals = [], [], []
    rhs = np.zeros(dim)

    for offsets, area, grads in _reference_triangles(hx, hy):
        ke = _element_matrix(spec, area, grads)
        # global (ix, iy) of the three vertices for every cell
        vx = [ci + dx for dx, _ in offsets]
        vy = [cj + dy for _, dy in offsets]
        inside = [
            (vx[t] >= 1) & (vx[t] <= m) & (vy[t] >= 1) & (vy[t] <= m) for t in range(3)
        ]
        gidx = [np.where(inside[t], interior_index(vx[t], vy[t]), -1) for t in range(3)]
        px = [x_lo + vx[t] * hx for t in range(3)]
        py = [y_lo + vy[t] * hy for t in range(3)]
        # edge midpoints, opposite vertex t sits on edge (t+1, t+2)
        fmid = {}
        for t1 in range(3):
            for t2 in range(t1 + 1, 3):
                mx = 0.5 * (px[t1] + px[t2])
                my = 0.5 * (py[t1] + py[t2])
                fmid[(t1, t2)] = f(mx, my)
        for t1 in range(3):
            mask1 = inside[t1]
            # stiffness/convection/mass stamping
            for t2 in range(3):
                mask = mask1 & inside[t2]
                if not mask.any():
                    continue
                rows.append(gidx[t1][mask])
                cols.append(gidx[t2][mask])
                vals.append(np.full(mask.sum(), ke[t1, t2]))
            # load vector: hat t1 is 1/2 on the two adjacent edge midpoints
            contrib = np.zeros(len(ci))
            for t2 in range(3):
                if t2 == t1:
                    continue
                key = (min(t1, t2), max(t1, t2))
                contrib += 0.5 * fmid[key]
            contrib *= area / 3.0
            np.add.at(rhs, gidx[t1][mask1], contrib[mask1])

    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    mat.sum_duplicates()

    xs = x_lo + hx * np.arange(1, n)
    ys = y_lo + hy * np.arange(1, n)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")  # y outer, x fastest
    coords = np.column_stack([gx.ravel(), gy.ravel()])

    return AssembledSystem(
        spec=spec,
        n=n,
        matrix=SparseMatrix.from_scipy(mat),
        rhs=rhs,
        node_coords=coords,
        exact=exact_solution(spec),
    )


def discretization_error(system: AssembledSystem, u_h: np.ndarray) -> tuple[float, float]:
    """Discrete L2 and nodal max error against the exact solution."""
    u_h = np.asarray(u_h, dtype=np.float64)
    if u_h.shape != (system.matrix.dim,):
        raise DimensionError("solution vector length mismatch")
    diff = u_h - system.exact_nodal
    l2 = system.mesh_h * np.linalg.norm(diff)
    return float(l2), float(np.max(np.abs(diff)))


def export_sidecar(system: AssembledSystem) -> dict:
    """JSON-serializable description accompanying a Matrix Market export."""
    spec = system.spec
    meta = {
        "kind": spec.kind,
        "n": system.n,
        "domain": list(spec.domain),
        "coefficients": {},
    }
    if spec.kind == "reaction":
        meta["coefficients"]["k"] = spec.k
    if spec.kind == "convdiff":
        meta["coefficients"]["epsilon"] = spec.epsilon
        meta["coefficients"]["phi"] = spec.phi
    return meta
