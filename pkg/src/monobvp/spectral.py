"""First eigenvalue of -(p y')' = lam q y, y'(0)=0, alpha1 y(b) + beta1 p(b) y'(b) = 0.

lam_1 is taken as the smallest positive root of the Robin functional of the
regular solution u(., lam) (normalized u(0) = 1). That functional equals
alpha1 > 0 at lam = 0 and first changes sign at lam_1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .linear import homogeneous_u, operators, robin_functional
from .problem import ProblemSpec

SCAN_FACTOR = 1.5
BISECT_RTOL = 1e-10


class EigenvalueNotFound(RuntimeError):
    pass


@dataclass
class EigenEstimate:
    lambda1: float
    bracket: tuple
    residual: float
    refinement_agreement: float
    oracle_lambda1: float = float("nan")
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "lambda1": self.lambda1,
            "bracket": list(self.bracket),
            "residual": self.residual,
            "refinement_agreement": self.refinement_agreement,
            "oracle_lambda1": self.oracle_lambda1,
            "warnings": list(self.warnings),
        }


def _functional(spec, lam):
    return robin_functional(spec, homogeneous_u(spec, lam))


def _root(spec: ProblemSpec):
    Wb = float(operators(spec).W[-1])
    lo, f_lo = 0.0, spec.bc.alpha1
    lam = 0.1 / Wb
    f = _functional(spec, lam)
    # a large beta1 can push lam_1 below the default start; walk down first
    while f <= 0:
        lam /= SCAN_FACTOR
        f = _functional(spec, lam)
    lo, f_lo = lam, f
    limit = 1e6 / Wb
    while True:
        hi = lo * SCAN_FACTOR
        if hi > limit:
            raise EigenvalueNotFound(f"eigenvalue_not_found: no sign change below {limit:.6g}")
        f_hi = _functional(spec, hi)
        if f_hi <= 0:
            break
        lo, f_lo = hi, f_hi
    while hi - lo > BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        f_mid = _functional(spec, mid)
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    # the functional is smooth near the root: finish with one secant step
    f_lo, f_hi = _functional(spec, lo), _functional(spec, hi)
    lam1 = lo - f_lo * (hi - lo) / (f_hi - f_lo) if f_hi != f_lo else 0.5 * (lo + hi)
    if not lo <= lam1 <= hi:
        lam1 = 0.5 * (lo + hi)
    return lam1, (lo, hi)


def first_eigenvalue(spec: ProblemSpec, cross_check: bool = True, refine: bool = True) -> EigenEstimate:
    """Scan in geometric steps from 0.1/W(b), then bisect to 1e-10 relative.

    With ``refine`` the mesh is doubled and the relative change recorded; with
    ``cross_check`` the matrix-pencil oracle is consulted and a warning is
    attached when the two disagree by more than 1e-3.
    """
    lam1, bracket = _root(spec)
    u = homogeneous_u(spec, lam1)
    scale = spec.bc.alpha1 + spec.bc.beta1 * float(abs(u.flux).max())
    residual = abs(robin_functional(spec, u)) / scale
    agreement = float("nan")
    if refine:
        lam_fine, _ = _root(spec.with_mesh(2 * spec.mesh_size))
        agreement = abs(lam_fine - lam1) / abs(lam1)
    est = EigenEstimate(lam1, bracket, residual, agreement)
    if cross_check:
        from .oracle import oracle_lambda1

        est.oracle_lambda1 = oracle_lambda1(spec)
        rel = abs(est.oracle_lambda1 - lam1) / abs(lam1)
        if rel > 1e-3:
            msg = f"oracle disagreement {rel:.2e} (oracle {est.oracle_lambda1:.10g})"
            est.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning)
    return est
