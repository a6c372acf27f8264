"""Singular linear solves  -(p y')' - lam q y = q r,  y'(0)=0,  Robin at b.

The equation is used in integrated form. With w = p y' and y(0) = c,

    w(x) = -int_0^x q(t) (r + lam y)(t) dt,
    y(x) = c - int_0^x q(t) K(x, t) (r + lam y)(t) dt,   K(x, t) = int_t^x ds/p(s),

so p(0) is never divided by and w(0) = 0 holds by construction. Nodal
values are interpolated by local cubics and integrated against the exact
weights q(t) and q(t) K(x_i, t) with Gauss rules (graded toward x = 0), which
gives two matrices:

    flux = -B @ (r + lam y),      y = c - A @ (r + lam y).

The right-hand side is passed as the density r = g / q, matching the form
q f(x, y, p y') of the nonlinear problem.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from .problem import ProblemSpec
from .quadrature import gauss_legendre, graded_edges

GAUSS_ORDER = 10
GRADED_LEVELS = 50
PICARD_TOL = 1e-12
PICARD_MAX = 200
CONTRACTION_LIMIT = 0.9


class LinearSolveError(RuntimeError):
    pass


class LambdaAtEigenvalue(LinearSolveError):
    def __init__(self, lam, functional):
        self.lam = lam
        self.functional = functional
        super().__init__(f"lambda_at_eigenvalue: Robin functional {functional:.3e} at lambda={lam:.17g}")


@dataclass(frozen=True, eq=False)
class MeshFunction:
    """Values y(x_i) and fluxes w(x_i) = p(x_i) y'(x_i) on a fixed grid."""

    nodes: np.ndarray
    values: np.ndarray
    flux: np.ndarray

    def __post_init__(self):
        if not (self.nodes.shape == self.values.shape == self.flux.shape):
            raise ValueError("nodes, values and flux must have the same shape")
        if self.nodes[0] != 0.0:
            raise ValueError("first node must be x=0")
        if self.flux[0] != 0.0:
            raise ValueError("flux at x=0 must vanish")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.flux))):
            raise ValueError("mesh function has non-finite entries")

    def __sub__(self, other: "MeshFunction") -> "MeshFunction":
        return MeshFunction(self.nodes, self.values - other.values, self.flux - other.flux)

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["x", "y", "w"])
            for row in zip(self.nodes, self.values, self.flux):
                out.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "MeshFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy())


# --------------------------------------------------------------------------
# discretization


def _lagrange(stencil: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Lagrange basis of ``stencil`` evaluated at ``t``; shape (len(t), len(stencil))."""
    n = len(stencil)
    out = np.ones((len(t), n))
    for j in range(n):
        for m in range(n):
            if m != j:
                out[:, j] *= (t - stencil[m]) / (stencil[j] - stencil[m])
    return out


@dataclass(frozen=True, eq=False)
class Operators:
    nodes: np.ndarray
    A: np.ndarray   # y = c - A (r + lam y)
    B: np.ndarray   # w = -B (r + lam y)

    @property
    def W(self) -> np.ndarray:
        """W(x_i) = int_0^{x_i} (1/p) int_0^s q, which is A @ 1."""
        return self.A.sum(axis=1)


@lru_cache(maxsize=16)
def operators(spec: ProblemSpec) -> Operators:
    """Product-integration matrices for the master mesh of ``spec``."""
    N = spec.mesh_size
    x = spec.nodes
    h = spec.b / N
    tg, wg = gauss_legendre(GAUSS_ORDER)

    # integration cells: graded sub-panels inside [0, h], then the regular panels
    sub = graded_edges(h, GRADED_LEVELS)
    lo = np.concatenate([sub[:-1], x[1:-1]])
    hi = np.concatenate([sub[1:], x[2:]])
    panel = np.concatenate([np.zeros(len(sub) - 1, dtype=int), np.arange(1, N)])
    width = hi - lo
    pts = lo[:, None] + width[:, None] * tg        # (cells, G)
    wts = width[:, None] * wg

    # P(t) = int_t^b ds/p(s): first the value at every cell's right edge ...
    w_cell = np.sum(wts / spec.p(pts), axis=1)
    P_hi = np.concatenate([np.cumsum(w_cell[::-1])[::-1][1:], [0.0]])
    # ... then the partial piece from each Gauss point to its cell edge
    span = hi[:, None] - pts
    inner = pts[..., None] + span[..., None] * tg   # (cells, G, G)
    P_pts = P_hi[:, None] + np.sum(span[..., None] * wg / spec.p(inner), axis=2)
    P_nodes = np.concatenate([[np.inf], P_hi[len(sub) - 2:]])

    # cubic interpolation stencils, clipped at the ends of the mesh
    start = np.clip(panel - 1, 0, N - 3)
    qw = spec.q(pts) * wts
    M1 = np.zeros((len(lo), 4))
    M0 = np.zeros((len(lo), 4))
    for c in range(len(lo)):
        s = start[c]
        L = _lagrange(x[s:s + 4], pts[c])
        M1[c] = qw[c] @ L
        M0[c] = (qw[c] * P_pts[c]) @ L

    # per-panel contributions scattered to columns, accumulated over panels
    D1 = np.zeros((N, N + 1))
    D0 = np.zeros((N, N + 1))
    for c in range(len(lo)):
        s = start[c]
        D1[panel[c], s:s + 4] += M1[c]
        D0[panel[c], s:s + 4] += M0[c]
    C1 = np.vstack([np.zeros(N + 1), np.cumsum(D1, axis=0)])
    C0 = np.vstack([np.zeros(N + 1), np.cumsum(D0, axis=0)])
    A = C0 - np.where(np.isfinite(P_nodes), P_nodes, 0.0)[:, None] * C1
    A[0] = 0.0
    return Operators(x, A, C1)


# --------------------------------------------------------------------------
# solves

RHS = Union[Callable, np.ndarray, float]


@dataclass(frozen=True, eq=False)
class LinearProblem:
    """-(p y')' - lam q y = q r with the Robin data of ``spec``.

    ``rhs`` is the density r (callable of x, nodal array, or constant);
    ``gamma1`` overrides the inhomogeneous Robin value of ``spec``.
    """

    spec: ProblemSpec
    lam: float
    rhs: RHS = 0.0
    gamma1: Optional[float] = None


def _nodal(rhs: RHS, x: np.ndarray) -> np.ndarray:
    if callable(rhs):
        vals = np.asarray(rhs(x), dtype=float)
    else:
        vals = np.asarray(rhs, dtype=float)
    return np.broadcast_to(vals, x.shape).astype(float)


@lru_cache(maxsize=8)
def _factor(spec: ProblemSpec, lam: float):
    ops = operators(spec)
    M = np.eye(len(ops.nodes)) + lam * ops.A
    return scipy.linalg.lu_factor(M)


def contraction_estimate(spec: ProblemSpec, lam: float) -> float:
    """|lam| * ||A||_inf, a bound on the Picard contraction factor (~ |lam| W(b))."""
    return abs(lam) * float(np.max(np.sum(np.abs(operators(spec).A), axis=1)))


def _volterra(spec: ProblemSpec, lam: float, c: float, r: np.ndarray) -> np.ndarray:
    """Solve y = c - A (r + lam y): Picard sweeps, or a direct solve when they
    would contract too slowly."""
    A = operators(spec).A
    base = c - A @ r
    if lam == 0.0:
        return base
    if contraction_estimate(spec, lam) <= CONTRACTION_LIMIT:
        y = base.copy()
        for _ in range(PICARD_MAX):
            y_new = base - lam * (A @ y)
            step = np.max(np.abs(y_new - y))
            y = y_new
            if step < PICARD_TOL * (1.0 + np.max(np.abs(y))):
                return y
    return scipy.linalg.lu_solve(_factor(spec, lam), base)


def _flux(spec: ProblemSpec, lam: float, r: np.ndarray, y: np.ndarray) -> np.ndarray:
    w = -(operators(spec).B @ (r + lam * y))
    w[0] = 0.0
    return w


def robin_functional(spec: ProblemSpec, u: MeshFunction) -> float:
    """alpha1 u(b) + beta1 p(b) u'(b)."""
    return spec.bc.alpha1 * float(u.values[-1]) + spec.bc.beta1 * float(u.flux[-1])


def homogeneous_u(spec: ProblemSpec, lam: float) -> MeshFunction:
    """Regular solution of L u = 0 with u(0) = 1."""
    zero = np.zeros(spec.mesh_size + 1)
    u = _volterra(spec, lam, 1.0, zero)
    return MeshFunction(spec.nodes, u, _flux(spec, lam, zero, u))


def solve_linear(lp: LinearProblem) -> MeshFunction:
    """Solve the linear problem by shooting on y(0).

    The Robin residual is affine in y(0), so one particular solve (y(0)=0)
    plus the homogeneous solution u (y(0)=1) fix it exactly.
    """
    spec, lam = lp.spec, float(lp.lam)
    gamma1 = spec.bc.gamma1 if lp.gamma1 is None else lp.gamma1
    x = spec.nodes
    r = _nodal(lp.rhs, x)
    y_p = _volterra(spec, lam, 0.0, r)
    w_p = _flux(spec, lam, r, y_p)
    u = homogeneous_u(spec, lam)
    ru = robin_functional(spec, u)
    if abs(ru) <= 1e-10:
        raise LambdaAtEigenvalue(lam, ru)
    rp = spec.bc.alpha1 * y_p[-1] + spec.bc.beta1 * w_p[-1]
    c = (gamma1 - rp) / ru
    y = y_p + c * u.values
    w = w_p + c * u.flux
    # one refinement pass against the affine split's round-off
    res = gamma1 - (spec.bc.alpha1 * y[-1] + spec.bc.beta1 * w[-1])
    y = y + (res / ru) * u.values
    w = w + (res / ru) * u.flux
    w[0] = 0.0
    return MeshFunction(x, y, w)


def integrated_defect(spec: ProblemSpec, lam: float, rhs: RHS, y: MeshFunction) -> float:
    """Max-norm defect of y in y = y(0) - A (r + lam y) and w = -B (r + lam y)."""
    ops = operators(spec)
    r = _nodal(rhs, spec.nodes)
    g = r + lam * y.values
    d_y = y.values - (y.values[0] - ops.A @ g)
    d_w = y.flux + ops.B @ g
    return float(max(np.max(np.abs(d_y)), np.max(np.abs(d_w))))


def nonnegativity_check(y: MeshFunction, tol: float = 0.0) -> bool:
    return bool(np.min(y.values) >= -tol)
