"""Hypothesis checks for the monotone scheme.

Covers the one-sided Lipschitz / Lipschitz / bound constants of f sampled over
the bracket region D0 = [0,b] x [v0,u0] x R, the inequalities on the
shift lam, the Nagumo a-priori flux bound R0, and the choice of lam itself.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import expr
from .linear import MeshFunction
from .problem import ProblemSpec, ValidationReport, cumulative_q, nested_integral, validate
from .quadrature import gauss_legendre

DECLARED_TOL = 1e-9
ONE_SIDED_TOL = 1e-10
NAGUMO_SAFETY = 1.01
NAGUMO_TRUNCATION = 1e8


class HypothesisError(RuntimeError):
    """A hypothesis of the existence result fails; the run is infeasible."""

    code = "hypothesis_failed"


class NagumoViolated(HypothesisError):
    code = "nagumo_violated"


class NoFeasibleLambda(HypothesisError):
    code = "no_feasible_lambda"

    def __init__(self, message, best_positive, best_negative):
        self.best_positive = best_positive
        self.best_negative = best_negative
        super().__init__(f"no_feasible_lambda: {message} "
                         f"(best slack positive regime {best_positive:.6g}, negative regime {best_negative:.6g})")


class SampleDomainError(HypothesisError):
    code = "f_not_evaluable"

    def __init__(self, x, y, w, cause):
        self.point = (x, y, w)
        super().__init__(f"f not evaluable at (x={x:.17g}, y={y:.17g}, w={w:.17g}): {cause}")


# --------------------------------------------------------------------------
# regime inequalities


def check_lemma1(K1: float, L1: float, lam: float, Qb: float):
    """K1 - lam + lam L1 Q(b) >= 0, for lam < 0."""
    if not lam < 0:
        raise ValueError("negative regime needs lam < 0")
    slack = K1 - lam + lam * L1 * Qb
    return slack >= 0, slack


def check_lemma2(K1: float, L1: float, lam: float, Qb: float, Wb: float, lambda1: float):
    """Positive-regime conditions; returns (ok, slack_contraction, slack_positive)."""
    if not lam > 0:
        raise ValueError("positive regime needs lam > 0")
    s11 = 1.0 - lam * Wb
    s12 = (K1 - lam) * s11 - lam * L1 * Qb
    ok = lam < lambda1 and lam < K1 and s11 > 0 and s12 >= 0
    return ok, s11, s12


def negative_regime_feasible(K1: float, L1: float, Qb: float) -> bool:
    """Closed form of: some lam < 0 has K1 - lam (1 - L1 Q(b)) >= 0."""
    c = 1.0 - L1 * Qb
    if c > 0:
        return True
    if c == 0:
        return K1 >= 0
    return K1 > 0


def l1_upper_bound(K1: float, Qb: float) -> Optional[float]:
    """Largest admissible L1 (1/Q(b)) when K1 <= 0, else None."""
    return 1.0 / Qb if K1 <= 0 else None


def choose_lambda(spec: ProblemSpec, K1: float, L1: float, Qb: float, Wb: float, lambda1: float):
    """Pick the shift lam and name its regime ("positive", "negative", "zero")."""
    if L1 == 0:
        lam = min(K1, 0.9 * lambda1)
        return lam, "zero" if lam == 0 else ("positive" if lam > 0 else "negative")

    if K1 > 0:
        # s312(lam) = Wb lam^2 - (K1 Wb + 1 + L1 Qb) lam + K1 is convex with
        # s312(0) = K1 > 0; stay inside its smaller root
        B = K1 * Wb + 1.0 + L1 * Qb
        root = 2.0 * K1 / (B + math.sqrt(B * B - 4.0 * Wb * K1))  # cancellation-free form
        lam = 0.9 * min(root, K1, lambda1, 1.0 / Wb)
        return lam, "positive"

    if negative_regime_feasible(K1, L1, Qb):
        c = 1.0 - L1 * Qb
        edge = K1 / c if c > 0 else 0.0
        lam = 1.1 * edge if edge < 0 else -0.01 * lambda1
        return lam, "negative"

    best_neg = K1 if (1.0 - L1 * Qb) <= 0 else math.inf
    raise NoFeasibleLambda(
        f"K1={K1:.6g}, L1={L1:.6g} exceeds 1/Q(b)={1.0 / Qb:.6g}" if K1 <= 0 else "",
        best_positive=-math.inf, best_negative=best_neg,
    )


# --------------------------------------------------------------------------
# Nagumo bound


def _inverse_phi_integral(spec: ProblemSpec, R: float, order: int = 16) -> float:
    """int_0^R ds / phi(s) on panels [0,1] (uniform) and [1,R] (ratio <= 2)."""
    t, w = gauss_legendre(order)
    edges = list(np.linspace(0.0, min(R, 1.0), 9))
    if R > 1.0:
        k = int(np.ceil(np.log2(R)))
        edges += list((R ** (np.arange(1, k + 1) / k)))
    edges = np.asarray(edges)
    lo, width = edges[:-1], np.diff(edges)
    pts = (lo[:, None] + width[:, None] * t).ravel()
    wts = (width[:, None] * w).ravel()
    return float(np.sum(wts / spec.source.majorant(pts)))


def nagumo_R0(spec: ProblemSpec) -> float:
    """Smallest R with int_0^R ds/phi = Q(b), times the 1.01 safety factor.

    Raises NagumoViolated when int_0^inf ds/phi does not exceed Q(b).
    """
    Qb = cumulative_q(spec, spec.b)
    total = _inverse_phi_integral(spec, NAGUMO_TRUNCATION)
    if not total > Qb:
        raise NagumoViolated(
            f"nagumo_violated: int_0^inf ds/phi ~ {total:.10g} <= int_0^b q = {Qb:.10g}")
    R = brentq(lambda r: _inverse_phi_integral(spec, r) - Qb, 0.0, NAGUMO_TRUNCATION,
               xtol=1e-12, rtol=1e-14, maxiter=500)
    return NAGUMO_SAFETY * R


# --------------------------------------------------------------------------
# sampled constants


@dataclass
class SampledConstants:
    K1_eff: float
    L1_eff: float
    N0_eff: float


def _eval_f(spec, X, Y, V):
    try:
        return np.asarray(spec.source(X, Y, V), dtype=float)
    except expr.ExprDomainError as exc:
        for x, y, v in zip(X.ravel(), Y.ravel(), V.ravel()):
            try:
                spec.source(float(x), float(y), float(v))
            except expr.ExprDomainError as inner:
                raise SampleDomainError(float(x), float(y), float(v), inner) from exc
        raise


def sample_constants(spec: ProblemSpec, y_lo: MeshFunction, y_hi: MeshFunction, w_cap: float,
                     n0_w_cap: Optional[float] = None, nx: int = 33, ny: int = 33, nw: int = 33):
    """Empirical K1, L1, N0 over [0,b] x [y_lo, y_hi] x [-w_cap, w_cap].

    Difference quotients are taken between neighbouring grid values plus a
    short forward probe at every point; the extreme quotient over all pairs
    equals the extreme over neighbours, so the probes only add resolution.
    N0 is sampled with the flux limited to ``n0_w_cap`` (defaults to w_cap).
    """
    if np.any(y_lo.values > y_hi.values + 1e-12):
        raise ValueError("y_lo must not exceed y_hi")
    idx = np.unique(np.linspace(0, len(y_lo.nodes) - 1, nx).round().astype(int))
    x = y_lo.nodes[idx]
    lo, hi = y_lo.values[idx], y_hi.values[idx]
    ty = np.linspace(0.0, 1.0, ny)
    Y = lo[:, None, None] + (hi - lo)[:, None, None] * ty[None, :, None]
    shape = (len(x), ny, nw)
    V = np.broadcast_to(np.linspace(-w_cap, w_cap, nw)[None, None, :], shape)
    X = np.broadcast_to(x[:, None, None], shape)
    Y = np.broadcast_to(Y, shape)

    F = _eval_f(spec, X, Y, V)
    dy = 1e-6 * (1.0 + np.abs(Y))
    dv = 1e-6 * (1.0 + np.abs(V))
    Fy = _eval_f(spec, X, Y + dy, V)
    Fv = _eval_f(spec, X, Y, V + dv)

    k_probe = (Fy - F) / dy
    gaps = np.diff(Y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k_pairs = np.where(gaps > 0, np.diff(F, axis=1) / gaps, np.inf)
    K1_eff = float(min(np.min(k_probe), np.min(k_pairs)))
    l_pairs = np.abs(np.diff(F, axis=2)) / np.diff(V, axis=2)
    L1_eff = float(max(np.max(np.abs(Fv - F) / dv), np.max(l_pairs)))

    cap = w_cap if n0_w_cap is None else n0_w_cap
    Vn = np.broadcast_to(np.linspace(-cap, cap, nw)[None, None, :], X.shape)
    N0_eff = float(np.max(np.abs(_eval_f(spec, X, Y, Vn))))
    return SampledConstants(K1_eff, L1_eff, N0_eff)


def f4_expression(spec: ProblemSpec, u0: MeshFunction, v0: MeshFunction, lam: float) -> np.ndarray:
    x = u0.nodes
    fu = _eval_f(spec, x, u0.values, u0.flux)
    fv = _eval_f(spec, x, v0.values, v0.flux)
    return fu - fv - lam * (u0.values - v0.values)


def check_F4(spec: ProblemSpec, u0: MeshFunction, v0: MeshFunction, lam: float) -> bool:
    """f(x,u0,pu0') - f(x,v0,pv0') - lam (u0 - v0) >= 0 at interior nodes."""
    return bool(np.all(f4_expression(spec, u0, v0, lam)[1:] >= -ONE_SIDED_TOL))


def f4_lambda_max(spec: ProblemSpec, u0: MeshFunction, v0: MeshFunction) -> float:
    """Largest lam for which the one-sided condition holds."""
    d = (u0.values - v0.values)[1:]
    diff = f4_expression(spec, u0, v0, 0.0)[1:]
    if np.any((d <= 1e-14) & (diff < -ONE_SIDED_TOL)):
        return -math.inf
    pos = d > 1e-14
    return float(np.min(diff[pos] / d[pos])) if np.any(pos) else math.inf


# --------------------------------------------------------------------------
# report


@dataclass
class HypothesisReport:
    feasible: bool = False
    failure: Optional[str] = None
    lambda1: float = math.nan
    Qb: float = math.nan
    Wb: float = math.nan
    K1: float = math.nan
    L1: float = math.nan
    N0: float = math.nan
    K1_effective: float = math.nan
    L1_effective: float = math.nan
    N0_effective: float = math.nan
    cond_negative: Optional[bool] = None
    slack_negative: float = math.nan
    cond_contraction: Optional[bool] = None
    slack_contraction: float = math.nan
    cond_positive: Optional[bool] = None
    slack_positive: float = math.nan
    one_sided_holds: Optional[bool] = None
    one_sided_lambda_max: float = math.nan
    nagumo_margin: float = math.nan
    R0: float = math.nan
    w_cap: float = math.nan
    lambda_chosen: float = math.nan
    lambda_regime: Optional[str] = None
    L1_bound: Optional[float] = None
    upper_defect_min: float = math.nan
    lower_defect_max: float = math.nan
    validation: Optional[dict] = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _defects(spec, y: MeshFunction, density: float):
    """-(p y')'/q minus f(x, y, p y') for an initial iterate whose flux
    derivative density is the constant ``density``."""
    return density - _eval_f(spec, y.nodes, y.values, y.flux)[1:]


def audit(spec: ProblemSpec, eigen=None):
    """Assemble a HypothesisReport and the initial iterates.

    Returns (report, (u0, v0)); the iterates are None when the audit stops
    before they can be built.
    """
    from .monotone import initial_iterates
    from .spectral import first_eigenvalue

    rep = HypothesisReport()
    src = spec.source
    rep.K1, rep.L1 = src.K1, src.L1

    val: ValidationReport = validate(spec)
    rep.validation = val.to_dict()
    if not val.ok:
        rep.failure = "validation_failed"
        return rep, None
    rep.Qb = cumulative_q(spec, spec.b)
    rep.Wb = nested_integral(spec, spec.b)

    try:
        rep.R0 = nagumo_R0(spec)
    except NagumoViolated as exc:
        rep.failure = exc.code
        rep.warnings.append(str(exc))
        rep.nagumo_margin = _inverse_phi_integral(spec, NAGUMO_TRUNCATION) - rep.Qb
        return rep, None
    rep.nagumo_margin = _inverse_phi_integral(spec, NAGUMO_TRUNCATION) - rep.Qb
    rep.w_cap = max(2.0 * rep.R0, 10.0)

    est = eigen if eigen is not None else first_eigenvalue(spec)
    rep.lambda1 = est.lambda1
    rep.warnings.extend(est.warnings)

    try:
        if src.N0 is not None:
            N0 = src.N0
        else:
            N0 = estimate_N0(spec, rep.R0)
            rep.warnings.append(f"N0 not declared; sampled N0 = {N0:.10g}")
        rep.N0 = N0
        u0, v0 = initial_iterates(spec, N0)
        sc = sample_constants(spec, v0, u0, rep.w_cap, n0_w_cap=rep.R0)
    except SampleDomainError as exc:
        rep.failure = exc.code
        rep.warnings.append(str(exc))
        return rep, None
    rep.K1_effective, rep.L1_effective, rep.N0_effective = sc.K1_eff, sc.L1_eff, sc.N0_eff
    if src.K1 > sc.K1_eff + DECLARED_TOL:
        rep.warnings.append(f"declared K1={src.K1:.10g} exceeds sampled {sc.K1_eff:.10g}")
    if src.L1 < sc.L1_eff - DECLARED_TOL:
        rep.warnings.append(f"declared L1={src.L1:.10g} below sampled {sc.L1_eff:.10g}")
    if N0 < sc.N0_eff - DECLARED_TOL:
        rep.warnings.append(f"N0={N0:.10g} below sampled max|f|={sc.N0_eff:.10g}")

    rep.L1_bound = l1_upper_bound(src.K1, rep.Qb)
    rep.one_sided_lambda_max = f4_lambda_max(spec, u0, v0)
    ud = _defects(spec, u0, N0)
    vd = _defects(spec, v0, -N0)
    rep.upper_defect_min = float(np.min(ud))
    rep.lower_defect_max = float(np.max(vd))

    try:
        lam, regime = choose_lambda(spec, src.K1, src.L1, rep.Qb, rep.Wb, rep.lambda1)
    except NoFeasibleLambda as exc:
        rep.failure = exc.code
        rep.warnings.append(str(exc))
        return rep, (u0, v0)
    rep.lambda_chosen, rep.lambda_regime = lam, regime
    rep.slack_negative = src.K1 - lam + lam * src.L1 * rep.Qb
    rep.cond_negative = rep.slack_negative >= 0
    rep.slack_contraction = 1.0 - lam * rep.Wb
    rep.cond_contraction = rep.slack_contraction > 0
    rep.slack_positive = (src.K1 - lam) * rep.slack_contraction - lam * src.L1 * rep.Qb
    rep.cond_positive = rep.slack_positive >= 0
    rep.one_sided_holds = check_F4(spec, u0, v0, lam)

    failures = []
    if not lam < rep.lambda1:
        failures.append("lambda_not_below_lambda1")
    if regime == "negative" and not rep.cond_negative:
        failures.append("negative_regime_slack")
    if regime == "positive" and not (rep.cond_contraction and rep.cond_positive and lam < src.K1):
        failures.append("positive_regime_slack")
    if not rep.one_sided_holds:
        failures.append("one_sided_condition")
    if rep.upper_defect_min < -1e-9 or rep.lower_defect_max > 1e-9:
        failures.append("initial_iterates_not_upper_lower")
    rep.failure = ",".join(failures) or None
    rep.feasible = not failures
    return rep, (u0, v0)


def estimate_N0(spec: ProblemSpec, R0: float) -> float:
    """max |f| over a preliminary box, enlarged once to the resulting bracket."""
    from .monotone import initial_iterates

    nodes = spec.nodes
    centre = spec.bc.gamma1 / spec.bc.alpha1
    zero = np.zeros_like(nodes)
    lo = MeshFunction(nodes, np.full_like(nodes, centre - 1.0), zero)
    hi = MeshFunction(nodes, np.full_like(nodes, centre + 1.0), zero)
    N0 = sample_constants(spec, lo, hi, R0).N0_eff
    u0, v0 = initial_iterates(spec, N0)
    if np.any(u0.values > hi.values) or np.any(v0.values < lo.values):
        lo = MeshFunction(nodes, np.minimum(v0.values, lo.values), zero)
        hi = MeshFunction(nodes, np.maximum(u0.values, hi.values), zero)
        N0 = sample_constants(spec, lo, hi, R0).N0_eff
    return N0
