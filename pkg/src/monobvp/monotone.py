"""The monotone iteration and its runtime invariants.

Each step solves the linear problem

    -(p y_{n+1}')' - lam q y_{n+1} = q (f(x, y_n, p y_n') - lam y_n),
    y_{n+1}'(0) = 0,   alpha1 y_{n+1}(b) + beta1 p(b) y_{n+1}'(b) = gamma1,

once from an upper solution u0 and once from a lower solution v0. The upper
sequence must not increase, the lower must not decrease, they must stay
ordered, and every flux must stay below the Nagumo bound R0. A violation
aborts the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import expr
from .conditions import HypothesisReport, audit
from .linear import LinearProblem, MeshFunction, integrated_defect, solve_linear
from .problem import ProblemSpec

STEP_TOL = 1e-9
INVARIANT_TOL = 1e-9
MAX_ITER = 500
COLLAPSE_TOL = 1e-7


class MonotoneError(RuntimeError):
    pass


class InvariantViolation(MonotoneError):
    def __init__(self, invariant: str, node: int, step: int, amount: float):
        self.invariant, self.node, self.step, self.amount = invariant, node, step, amount
        super().__init__(f"invariant_violation({invariant}, node={node}, step={step}): by {amount:.3e}")


class MaxIterations(MonotoneError):
    pass


class Infeasible(MonotoneError):
    def __init__(self, report: HypothesisReport):
        self.report = report
        super().__init__(f"hypotheses not satisfied: {report.failure}")


class NodeDomainError(MonotoneError):
    def __init__(self, node: int, x: float, cause):
        self.node = node
        super().__init__(f"f not evaluable at node {node} (x={x:.17g}): {cause}")


@dataclass
class StepRecord:
    monotone_u: bool
    monotone_v: bool
    ordered: bool
    flux_bound_ok: bool
    residual: float
    step: float
    max_flux: float


@dataclass
class IterationTrace:
    u_seq: list = field(default_factory=list)
    v_seq: list = field(default_factory=list)
    per_step: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def u_tilde(self) -> MeshFunction:
        return self.u_seq[-1]

    @property
    def v_tilde(self) -> MeshFunction:
        return self.v_seq[-1]


@dataclass
class SolveResult:
    trace: IterationTrace
    report: HypothesisReport
    bracket_width: float

    @property
    def collapsed(self) -> bool:
        return self.bracket_width < COLLAPSE_TOL

    def summary(self) -> dict:
        t = self.trace
        return {
            "converged": t.converged,
            "iterations": t.iterations,
            "bracket_width": self.bracket_width,
            "bracket": "collapsed" if self.collapsed else "multiplicity_bracket",
            "lambda": self.report.lambda_chosen,
            "lambda_regime": self.report.lambda_regime,
            "R0": self.report.R0,
            "steps": [vars(s) for s in t.per_step],
        }


def _source_density(spec: ProblemSpec, y: MeshFunction) -> np.ndarray:
    try:
        return np.asarray(spec.source(y.nodes, y.values, y.flux), dtype=float)
    except expr.ExprDomainError as exc:
        for i, (x, v, w) in enumerate(zip(y.nodes, y.values, y.flux)):
            try:
                spec.source(float(x), float(v), float(w))
            except expr.ExprDomainError:
                raise NodeDomainError(i, float(x), exc) from exc
        raise


def initial_iterates(spec: ProblemSpec, N0: float):
    """u0, v0 solving -(p y')' = +N0 q and -N0 q with the Robin data."""
    u0 = solve_linear(LinearProblem(spec, 0.0, N0))
    v0 = solve_linear(LinearProblem(spec, 0.0, -N0))
    return u0, v0


def iterate_once(spec: ProblemSpec, y_n: MeshFunction, lam: float) -> MeshFunction:
    r = _source_density(spec, y_n) - lam * y_n.values
    return solve_linear(LinearProblem(spec, lam, r))


def nonlinear_residual(spec: ProblemSpec, y: MeshFunction) -> float:
    """Defect of y in the integrated nonlinear problem, Robin condition included."""
    d = integrated_defect(spec, 0.0, _source_density(spec, y), y)
    robin = spec.bc.alpha1 * y.values[-1] + spec.bc.beta1 * y.flux[-1] - spec.bc.gamma1
    return max(d, abs(float(robin)))


def _first_bad(excess: np.ndarray) -> int:
    return int(np.argmax(excess))


def solve(spec: ProblemSpec, max_iter: int = MAX_ITER, tol: float = STEP_TOL,
          report: Optional[HypothesisReport] = None, iterates=None) -> SolveResult:
    """Run both monotone sequences to convergence.

    Raises Infeasible when the audit fails, InvariantViolation naming the
    invariant when a monotonicity, ordering or flux-bound check breaks, and
    MaxIterations when ``max_iter`` steps do not converge.
    """
    if report is None:
        report, iterates = audit(spec)
    if not report.feasible:
        raise Infeasible(report)
    u, v = iterates
    lam, R0 = report.lambda_chosen, report.R0
    scale = 1.0 + max(np.max(np.abs(u.values)), np.max(np.abs(v.values)))
    trace = IterationTrace(u_seq=[u], v_seq=[v])

    if np.max(v.values - u.values) > INVARIANT_TOL:
        raise InvariantViolation("ordering", _first_bad(v.values - u.values), 0,
                                 float(np.max(v.values - u.values)))
    for n in range(1, max_iter + 1):
        u_new = iterate_once(spec, u, lam)
        v_new = iterate_once(spec, v, lam)
        du = u_new.values - u.values
        dv = v.values - v_new.values
        gap = v_new.values - u_new.values
        max_flux = float(max(np.max(np.abs(u_new.flux)), np.max(np.abs(v_new.flux))))
        rec = StepRecord(
            monotone_u=bool(np.max(du) <= INVARIANT_TOL),
            monotone_v=bool(np.max(dv) <= INVARIANT_TOL),
            ordered=bool(np.max(gap) <= INVARIANT_TOL),
            flux_bound_ok=max_flux < R0,
            residual=max(nonlinear_residual(spec, u_new), nonlinear_residual(spec, v_new)),
            step=float(max(np.max(np.abs(du)), np.max(np.abs(dv)))),
            max_flux=max_flux,
        )
        trace.per_step.append(rec)
        trace.u_seq.append(u_new)
        trace.v_seq.append(v_new)
        trace.iterations = n
        if not rec.monotone_u:
            raise InvariantViolation("upper_nonincreasing", _first_bad(du), n, float(np.max(du)))
        if not rec.monotone_v:
            raise InvariantViolation("lower_nondecreasing", _first_bad(dv), n, float(np.max(dv)))
        if not rec.ordered:
            raise InvariantViolation("ordering", _first_bad(gap), n, float(np.max(gap)))
        if not rec.flux_bound_ok:
            flux = np.maximum(np.abs(u_new.flux), np.abs(v_new.flux))
            raise InvariantViolation("flux_bound", _first_bad(flux), n, max_flux - R0)
        u, v = u_new, v_new
        # absolute step (the stricter reading), residual relative to the solution size
        if rec.step < tol and rec.residual < tol * scale:
            trace.converged = True
            break
    if not trace.converged:
        raise MaxIterations(f"max_iterations: no convergence in {max_iter} steps "
                            f"(last step {trace.per_step[-1].step:.3e})")
    width = float(np.max(trace.u_tilde.values - trace.v_tilde.values))
    return SolveResult(trace, report, width)


def reduce_lambda_zero(spec: ProblemSpec, rtol: float = 1e-12, atol: float = 1e-14) -> MeshFunction:
    """Solve via the flux IVP when f does not depend on y.

    -z' = q f(x, z), z(0) = 0 with z = p y'; then y(x) = y(b) - int_x^b z/p,
    where alpha1 y(b) = gamma1 - beta1 z(b).
    """
    if spec.source.depends_on("y"):
        x = spec.nodes
        c = spec.bc.gamma1 / spec.bc.alpha1
        X, Y, Wv = np.meshgrid(x[::16], c + np.linspace(-1, 1, 9), np.linspace(-10, 10, 9), indexing="ij")
        dq = (spec.source(X, Y + 1e-3, Wv) - spec.source(X, Y, Wv)) / 1e-3
        if np.max(np.abs(dq)) >= 1e-10:
            raise MonotoneError("reduce_lambda_zero needs f independent of y")

    def rhs(t, state):
        z = state[0]
        pt = float(spec.p(t))
        dz = -float(spec.q(t)) * float(spec.source(t, 0.0, z))
        dY = z / pt if pt > 0 else 0.0
        return [dz, dY]

    x = spec.nodes
    sol = solve_ivp(rhs, (0.0, spec.b), [0.0, 0.0], method="DOP853", t_eval=x, rtol=rtol, atol=atol)
    if not sol.success or sol.y.shape[1] != len(x):
        raise MonotoneError(f"flux IVP failed before b: {sol.message}")
    z, Y = sol.y
    z = z.copy()
    z[0] = 0.0
    yb = (spec.bc.gamma1 - spec.bc.beta1 * z[-1]) / spec.bc.alpha1
    y = yb - (Y[-1] - Y)
    return MeshFunction(x, y, z)
