"""Problem data model: coefficients, boundary data, the nonlinearity.

A problem is

    -(p(x) y'(x))' = q(x) f(x, y, p y'),   0 < x <= b,
    y'(0) = 0,   alpha1 y(b) + beta1 p(b) y'(b) = gamma1,

with p(0) = 0 allowed. Throughout, ``w`` denotes the flux p(x) y'(x).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import expr
from .quadrature import QuadratureError, integrate_from_zero, integrate_log_panels

DEFAULT_MESH = 512
MIN_MESH = 16

_REQUIRED = ("p", "q", "b", "alpha1", "beta1", "gamma1", "f", "phi", "K1", "L1")
_OPTIONAL = ("N0", "mesh_size", "taylor_b0")


class SchemaError(ValueError):
    """Problem file does not follow the schema."""


class ValidationFailed(RuntimeError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        bad = [f.message for f in report.findings if not f.ok and f.severity == "error"]
        super().__init__("; ".join(bad))


@dataclass(frozen=True)
class Coefficient:
    """Either a power law x**exponent or an expression in x."""

    exponent: Optional[float] = None
    formula: Optional[expr.Expression] = None

    def __post_init__(self):
        if (self.exponent is None) == (self.formula is None):
            raise ValueError("give exactly one of exponent or formula")
        if self.exponent is not None and self.exponent < 0:
            raise ValueError("power-law exponent must be >= 0")

    @classmethod
    def power(cls, exponent: float) -> "Coefficient":
        return cls(exponent=float(exponent))

    @classmethod
    def parse(cls, text: str) -> "Coefficient":
        return cls(formula=expr.parse(text, ["x"]))

    @property
    def is_power_law(self) -> bool:
        return self.exponent is not None

    def __call__(self, x):
        if self.exponent is not None:
            x = np.asarray(x, dtype=float)
            out = np.ones_like(x) if self.exponent == 0 else x**self.exponent
            return out if out.ndim else float(out)
        return expr.evaluate(self.formula, {"x": x})

    def to_json(self):
        if self.exponent is not None:
            return {"power": self.exponent}
        return self.formula.source or str(self.formula)


@dataclass(frozen=True)
class CoefficientModel:
    p: Coefficient
    q: Coefficient
    b: float
    taylor_b: Optional[tuple] = None
    taylor_c: Optional[tuple] = None
    analyticity_radius: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise ValueError("domain endpoint b must be a finite positive number")
        if self.analyticity_radius is not None and not self.analyticity_radius > self.b:
            raise ValueError("analyticity radius must exceed b")

    @property
    def declared_b0(self) -> Optional[float]:
        if self.taylor_b:
            return self.taylor_b[0]
        if self.p.is_power_law:
            # x p'/p = exponent exactly
            return self.p.exponent
        return None


@dataclass(frozen=True)
class RobinBoundary:
    alpha1: float
    beta1: float
    gamma1: float

    def __post_init__(self):
        if not self.alpha1 > 0:
            raise ValueError("alpha1 must be > 0")
        if not self.beta1 >= 0:
            raise ValueError("beta1 must be >= 0")
        if not math.isfinite(self.gamma1):
            raise ValueError("gamma1 must be finite")


@dataclass(frozen=True)
class NonlinearSource:
    f: expr.Expression
    phi: expr.Expression
    K1: float
    L1: float
    N0: Optional[float] = None

    def __post_init__(self):
        if not self.L1 >= 0:
            raise ValueError("L1 must be >= 0")
        if self.N0 is not None and not self.N0 >= 0:
            raise ValueError("N0 must be >= 0")
        s = np.concatenate([[0.0], np.logspace(-6, 3, 46)])
        if np.any(expr.evaluate(self.phi, {"s": s}) <= 0):
            raise ValueError("phi must be positive on s >= 0")

    @classmethod
    def from_text(cls, f: str, phi: str, K1: float, L1: float, N0=None) -> "NonlinearSource":
        return cls(expr.parse(f, ["x", "y", "w"]), expr.parse(phi, ["s"]), float(K1), float(L1),
                   None if N0 is None else float(N0))

    def __call__(self, x, y, w):
        return expr.evaluate(self.f, {"x": x, "y": y, "w": w})

    def majorant(self, s):
        return expr.evaluate(self.phi, {"s": s})

    def depends_on(self, name: str) -> bool:
        return name in expr.variables(self.f)


@dataclass(frozen=True)
class ProblemSpec:
    coeffs: CoefficientModel
    bc: RobinBoundary
    source: NonlinearSource
    mesh_size: int = DEFAULT_MESH

    def __post_init__(self):
        if int(self.mesh_size) != self.mesh_size or self.mesh_size < MIN_MESH:
            raise ValueError(f"mesh_size must be an integer >= {MIN_MESH}")

    @property
    def b(self) -> float:
        return self.coeffs.b

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.b, self.mesh_size + 1)

    def p(self, x):
        return self.coeffs.p(x)

    def q(self, x):
        return self.coeffs.q(x)

    def with_mesh(self, mesh_size: int) -> "ProblemSpec":
        return ProblemSpec(self.coeffs, self.bc, self.source, mesh_size)

    def with_source(self, **changes) -> "ProblemSpec":
        kw = dict(f=self.source.f, phi=self.source.phi, K1=self.source.K1,
                  L1=self.source.L1, N0=self.source.N0)
        for k, v in changes.items():
            if k == "f" and isinstance(v, str):
                v = expr.parse(v, ["x", "y", "w"])
            if k == "phi" and isinstance(v, str):
                v = expr.parse(v, ["s"])
            kw[k] = v
        return ProblemSpec(self.coeffs, self.bc, NonlinearSource(**kw), self.mesh_size)

    def with_bc(self, alpha1=None, beta1=None, gamma1=None) -> "ProblemSpec":
        bc = RobinBoundary(
            self.bc.alpha1 if alpha1 is None else alpha1,
            self.bc.beta1 if beta1 is None else beta1,
            self.bc.gamma1 if gamma1 is None else gamma1,
        )
        return ProblemSpec(self.coeffs, bc, self.source, self.mesh_size)

    # ---- serialization --------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        if not isinstance(data, dict):
            raise SchemaError("problem must be a JSON object")
        unknown = sorted(set(data) - set(_REQUIRED) - set(_OPTIONAL))
        if unknown:
            raise SchemaError(f"unknown field(s): {', '.join(unknown)}")
        missing = [k for k in _REQUIRED if k not in data]
        if missing:
            raise SchemaError(f"missing field(s): {', '.join(missing)}")
        for k in ("b", "alpha1", "beta1", "gamma1", "K1", "L1", "N0", "taylor_b0"):
            if k in data and data[k] is not None and not _is_number(data[k]):
                raise SchemaError(f"field {k!r} must be a number")
        for k in ("f", "phi"):
            if not isinstance(data[k], str):
                raise SchemaError(f"field {k!r} must be a formula string")
        try:
            coeffs = CoefficientModel(
                p=_coefficient(data["p"], "p"),
                q=_coefficient(data["q"], "q"),
                b=float(data["b"]),
                taylor_b=(float(data["taylor_b0"]),) if data.get("taylor_b0") is not None else None,
            )
            bc = RobinBoundary(float(data["alpha1"]), float(data["beta1"]), float(data["gamma1"]))
            source = NonlinearSource.from_text(data["f"], data["phi"], data["K1"], data["L1"], data.get("N0"))
            mesh = data.get("mesh_size", DEFAULT_MESH)
            if not isinstance(mesh, int) or isinstance(mesh, bool):
                raise SchemaError("field 'mesh_size' must be an integer")
            return cls(coeffs, bc, source, mesh)
        except expr.ExprError as exc:
            raise SchemaError(str(exc)) from exc
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ProblemSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {
            "p": self.coeffs.p.to_json(),
            "q": self.coeffs.q.to_json(),
            "b": self.b,
            "alpha1": self.bc.alpha1,
            "beta1": self.bc.beta1,
            "gamma1": self.bc.gamma1,
            "f": self.source.f.source or str(self.source.f),
            "phi": self.source.phi.source or str(self.source.phi),
            "K1": self.source.K1,
            "L1": self.source.L1,
            "mesh_size": self.mesh_size,
        }
        if self.source.N0 is not None:
            out["N0"] = self.source.N0
        if self.coeffs.taylor_b:
            out["taylor_b0"] = self.coeffs.taylor_b[0]
        return out


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _coefficient(value, name) -> Coefficient:
    if isinstance(value, str):
        return Coefficient.parse(value)
    if isinstance(value, dict) and set(value) == {"power"} and _is_number(value["power"]):
        return Coefficient.power(value["power"])
    raise SchemaError(f"field {name!r} must be a formula string or {{\"power\": number}}")


# --------------------------------------------------------------------------
# singular integrals

_LEVELS = (60, 80)


def _q_integral(spec: ProblemSpec, x, levels: int):
    return integrate_from_zero(spec.q, x, levels=levels)


def _w_integral(spec: ProblemSpec, x, levels: int):
    def inner(s):
        Q = np.asarray(_q_integral(spec, s, levels), dtype=float)
        # Q underflows to 0 together with p at tiny s; that contributes nothing
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(Q == 0, 0.0, Q / np.asarray(spec.p(s), dtype=float))

    return integrate_from_zero(inner, x, levels=levels)


def _refined(fn, spec, x, what, tol=1e-8):
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(x_arr > spec.b * (1 + 1e-12)):
        raise ValueError(f"x must lie in [0, {spec.b}]")
    vals = [fn(spec, x_arr, lev) for lev in _LEVELS]
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise QuadratureError(f"{what} is not finite", [np.max(np.abs(v)) for v in vals])
    change = np.max(np.abs(vals[1] - vals[0]) / np.maximum(np.abs(vals[1]), 1e-300))
    if change > tol:
        raise QuadratureError(f"{what} does not converge under refinement",
                              [float(np.max(np.abs(v))) for v in vals])
    out = vals[-1]
    return float(out) if np.ndim(out) == 0 else out


def cumulative_q(spec: ProblemSpec, x):
    """Q(x) = int_0^x q(t) dt."""
    return _refined(_q_integral, spec, x, "int_0^x q")


def nested_integral(spec: ProblemSpec, x):
    """W(x) = int_0^x (1/p(s)) int_0^s q(t) dt ds."""
    return _refined(_w_integral, spec, x, "W(x)")


def limit_circle_cutoffs(spec: ProblemSpec, cutoffs=(1e-4, 1e-6, 1e-8)):
    """int_eps^b (1/p) (int_0^s q)^(1/2) ds for each relative cutoff eps."""

    def integrand(s):
        return np.sqrt(_q_integral(spec, s, _LEVELS[-1])) / spec.p(s)

    return [integrate_log_panels(integrand, c * spec.b, spec.b) for c in cutoffs]


def limit_circle_diverges(values) -> bool:
    """Divergence flag from the truncated values at three cutoffs.

    Successive increments of a convergent power-type tail shrink
    geometrically; a logarithmic or worse tail keeps them from shrinking.
    This is a heuristic flag, not a proof.
    """
    d1 = values[1] - values[0]
    d2 = values[2] - values[1]
    if d1 <= 0:
        return False
    return d2 >= 0.9 * d1


# --------------------------------------------------------------------------
# validation


@dataclass
class Finding:
    name: str
    ok: bool
    message: str
    severity: str = "error"
    value: Optional[object] = None

    def to_dict(self):
        return {"name": self.name, "ok": self.ok, "severity": self.severity,
                "message": self.message, "value": self.value}


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(f.ok for f in self.findings if f.severity == "error")

    def get(self, name: str) -> Finding:
        for f in self.findings:
            if f.name == name:
                return f
        raise KeyError(name)

    def raise_if_failed(self):
        if not self.ok:
            raise ValidationFailed(self)

    def to_dict(self):
        return {"ok": self.ok, "findings": [f.to_dict() for f in self.findings]}


def _positivity(spec, which, fn, x):
    try:
        vals = np.asarray(fn(x), dtype=float)
    except expr.ExprDomainError as exc:
        return Finding(f"{which}_positive", False, f"{which} cannot be evaluated on (0,b]: {exc}")
    bad = np.nonzero(~(vals > 0))[0]
    if bad.size:
        i = bad[0]
        return Finding(f"{which}_positive", False, f"{which} not positive at x={x[i]:.17g}",
                       value=float(vals[i]))
    return Finding(f"{which}_positive", True, f"{which} > 0 on sampled (0,b]")


def validate(spec: ProblemSpec) -> ValidationReport:
    """Check the decidable consequences of the coefficient hypotheses.

    Covers positivity of p and q, the sign of the leading Taylor coefficient
    of x p'/p when known, finiteness of int_0^b q and W(b) under refinement,
    and a divergence flag for the limit-circle integral.
    """
    rep = ValidationReport()
    x_nodes = spec.nodes[1:]
    x = np.sort(np.concatenate([x_nodes, x_nodes - 0.5 * spec.b / spec.mesh_size,
                                spec.b * np.logspace(-12, -3, 10)]))
    rep.findings.append(_positivity(spec, "p", spec.p, x))
    rep.findings.append(_positivity(spec, "q", spec.q, x))
    if not rep.ok:
        return rep

    b0 = spec.coeffs.declared_b0
    if b0 is not None:
        rep.findings.append(Finding("taylor_b0", b0 >= 0, f"b0 = {b0:.17g}", value=b0))
    else:
        rep.findings.append(Finding("taylor_b0", True, "no Taylor data declared", severity="info"))

    for name, fn in (("Q_b", _q_integral), ("W_b", _w_integral)):
        levels = (40, 60, 80)
        vals = [float(fn(spec, spec.b, lev)) for lev in levels]
        changes = [abs(vals[i + 1] - vals[i]) / max(abs(vals[i + 1]), 1e-300) for i in range(2)]
        finite = all(math.isfinite(v) for v in vals) and max(changes) < 1e-6
        what = "int_0^b q" if name == "Q_b" else "W(b)"
        msg = f"{what} = {vals[-1]:.17g}" if finite else f"{what} not finite (refinement: {vals})"
        rep.findings.append(Finding(name, finite, msg, value=vals[-1]))

    lc = limit_circle_cutoffs(spec)
    div = limit_circle_diverges(lc)
    rep.findings.append(Finding(
        "limit_circle", True,
        "limit-circle integral appears divergent" if div else "limit-circle integral finite",
        severity="info", value={"truncated": lc, "status": "appears divergent" if div else "finite"},
    ))
    return rep
