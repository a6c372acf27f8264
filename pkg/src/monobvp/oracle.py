"""Independent reference solvers.

These deliberately share no discretization with the primary path:
finite volumes on a fine uniform mesh, a tridiagonal matrix pencil solved by
inverse-power iteration for the first eigenvalue, and damped Newton with a
banded finite-difference Jacobian for the nonlinear problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linear import MeshFunction
from .problem import ProblemSpec

ORACLE_NODES = 4096
_GAUSS = np.polynomial.legendre.leggauss(8)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OracleSolution:
    solution: MeshFunction
    newton_iterations: int
    residual: float

    def resample(self, x) -> np.ndarray:
        """Cubic-spline values at ``x`` (e.g. the primary mesh)."""
        from scipy.interpolate import CubicSpline

        s = self.solution
        return CubicSpline(s.nodes, s.values)(x)


def _cell_integrals(fn, edges):
    t, w = _GAUSS
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * t
    return np.sum(fn(pts) * w, axis=1) * half


# --------------------------------------------------------------------------
# first eigenvalue


def _pencil(spec: ProblemSpec, cells: int):
    """Cell-centred pencil K y = lam M y; zero flux at x=0, Robin face at b."""
    b, h = spec.b, spec.b / cells
    faces = np.linspace(0.0, b, cells + 1)
    centres = 0.5 * (faces[:-1] + faces[1:])
    mass = _cell_integrals(spec.q, faces)
    pf = spec.p(faces[1:-1])
    diag = np.zeros(cells)
    off = -pf / h
    diag[:-1] += pf / h
    diag[1:] += pf / h
    # Robin face: flux F_b = -alpha y_{M-1} / (beta + alpha h / (2 p(b)))
    al, be, pb = spec.bc.alpha1, spec.bc.beta1, float(spec.p(b))
    diag[-1] += al / (be + al * h / (2.0 * pb))
    return centres, diag, off, mass


def _inverse_power(diag, off, mass, tol=1e-12, maxit=500):
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    y = np.ones(n)
    lam = np.inf
    for _ in range(maxit):
        My = mass * y
        z = scipy.linalg.solve_banded((1, 1), ab, My)
        # y'My / y'Mz avoids the cancellation in z'Kz
        lam_new = float(y @ My) / float(z @ My)
        y = z / np.max(np.abs(z))
        if not np.isfinite(lam_new):
            raise OracleError("pencil breakdown")
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new, y
        lam = lam_new
    raise OracleError("inverse-power iteration did not converge")


def oracle_lambda1(spec: ProblemSpec, cells: int = ORACLE_NODES) -> float:
    """Smallest eigenvalue of -(p y')' = lam q y from the discrete pencil.

    Two mesh levels (cells/2, cells) must agree to 1e-4; the fine value is
    returned.
    """
    coarse, _ = _inverse_power(*_pencil(spec, cells // 2)[1:])
    fine, _ = _inverse_power(*_pencil(spec, cells)[1:])
    if abs(fine - coarse) > 1e-4 * abs(fine):
        raise OracleError(f"pencil levels disagree: {coarse!r} vs {fine!r}")
    return fine


# --------------------------------------------------------------------------
# nonlinear BVP


class _FV:
    """Vertex-centred finite volumes on nodes 0..M (half cells at both ends)."""

    def __init__(self, spec: ProblemSpec, M: int):
        self.spec = spec
        self.M = M
        self.h = spec.b / M
        self.x = np.linspace(0.0, spec.b, M + 1)
        edges = np.concatenate([[0.0], 0.5 * (self.x[:-1] + self.x[1:]), [spec.b]])
        self.mass = _cell_integrals(spec.q, edges)
        self.p_half = spec.p(0.5 * (self.x[:-1] + self.x[1:]))
        self.pb = float(spec.p(spec.b))

    def fluxes(self, y):
        """Face fluxes F_{i+1/2}, plus the boundary flux at b."""
        F = self.p_half * np.diff(y) / self.h
        bc = self.spec.bc
        if bc.beta1 > 0:
            Fb = (bc.gamma1 - bc.alpha1 * y[-1]) / bc.beta1
        else:
            # y_M is pinned; close the last half-cell balance explicitly
            Fb = F[-1] - self.mass[-1] * self.spec.source(self.spec.b, y[-1], F[-1])
        return F, Fb

    def node_flux(self, y):
        F, Fb = self.fluxes(y)
        w = np.empty(self.M + 1)
        w[0] = 0.0
        w[1:-1] = 0.5 * (F[:-1] + F[1:])
        w[-1] = Fb
        return w

    def residual(self, y):
        F, Fb = self.fluxes(y)
        w = self.node_flux(y)
        f = self.spec.source(self.x, y, w)
        R = np.empty(self.M + 1)
        left = np.concatenate([[0.0], F])   # flux entering at the left face
        right = np.concatenate([F, [Fb]])
        R[:] = -(right - left) - self.mass * f
        bc = self.spec.bc
        if bc.beta1 == 0:
            R[-1] = bc.alpha1 * y[-1] - bc.gamma1
        return R

    def jacobian(self, y, R0):
        """Banded Jacobian by coloured finite differences (bandwidth 2)."""
        n = self.M + 1
        ab = np.zeros((5, n))
        for colour in range(5):
            idx = np.arange(colour, n, 5)
            dy = 1e-7 * (1.0 + np.abs(y[idx]))
            yp = y.copy()
            yp[idx] += dy
            dR = self.residual(yp) - R0
            for d in range(-2, 3):
                i = idx + d
                ok = (i >= 0) & (i < n)
                ab[2 + d, idx[ok]] = dR[i[ok]] / dy[ok]
        return ab


def oracle_solve(spec: ProblemSpec, initial_guess: MeshFunction, nodes: int = ORACLE_NODES,
                 tol: float = 1e-10, maxit: int = 100) -> OracleSolution:
    """Damped Newton on the finite-volume system, started from ``initial_guess``."""
    fv = _FV(spec, nodes)
    y = np.interp(fv.x, initial_guess.nodes, initial_guess.values)
    R = fv.residual(y)
    norm = np.max(np.abs(R))
    for it in range(1, maxit + 1):
        if norm < tol:
            return OracleSolution(MeshFunction(fv.x, y, fv.node_flux(y)), it - 1, float(norm))
        step = scipy.linalg.solve_banded((2, 2), fv.jacobian(y, R), -R)
        t = 1.0
        while True:
            try:
                y_try = y + t * step
                R_try = fv.residual(y_try)
                n_try = np.max(np.abs(R_try))
            except Exception:
                n_try = np.inf
            if n_try < (1 - 1e-4 * t) * norm or t < 1e-6:
                break
            t *= 0.5
        if not np.isfinite(n_try):
            raise OracleError("Newton line search failed")
        y, R, norm = y_try, R_try, n_try
    if norm < tol:
        return OracleSolution(MeshFunction(fv.x, y, fv.node_flux(y)), maxit, float(norm))
    raise OracleError(f"Newton stagnated after {maxit} iterations (residual {norm:.3e})")
