"""Gauss-Legendre rules on geometrically graded panels.

Integrands here are allowed an integrable algebraic singularity at the left
end of the interval (typically x = 0 where p vanishes). Panels halve in width
toward that end so every panel sees a bounded ratio right/left, which keeps
Gauss rules at full order.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    def __init__(self, message, trace=()):
        self.trace = tuple(trace)
        super().__init__(f"{message}; refinement trace: {list(self.trace)}")


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Nodes and weights on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


def graded_edges(length: float, levels: int) -> np.ndarray:
    """Edges 0 < length*2**-levels < ... < length/2 < length, plus 0."""
    inner = length * 2.0 ** -np.arange(levels, -1, -1)
    return np.concatenate([[0.0], inner])


def graded_rule(x, levels: int = 60, order: int = 16):
    """Points and weights integrating over [0, x] for every entry of ``x``.

    Returns arrays of shape ``x.shape + (m,)`` with m = (levels + 1) * order.
    """
    x = np.asarray(x, dtype=float)
    t, w = gauss_legendre(order)
    edges = graded_edges(1.0, levels)
    lo, width = edges[:-1], np.diff(edges)
    unit_pts = (lo[:, None] + width[:, None] * t[None, :]).ravel()
    unit_wts = (width[:, None] * w[None, :]).ravel()
    pts = x[..., None] * unit_pts
    wts = x[..., None] * unit_wts
    return pts, wts


def integrate_from_zero(func, x, levels: int = 60, order: int = 16):
    """int_0^x func(t) dt, vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    live = x != 0
    if np.any(live):
        pts, wts = graded_rule(x[live], levels, order)
        vals = np.asarray(func(pts.ravel()), dtype=float).reshape(pts.shape)
        out[live] = np.sum(vals * wts, axis=-1)
    return out if out.ndim else float(out)


def integrate_log_panels(func, a: float, b: float, order: int = 16):
    """int_a^b func(s) ds for 0 < a < b, panels with ratio at most 2."""
    k = max(1, int(np.ceil(np.log2(b / a))))
    edges = a * (b / a) ** (np.arange(k + 1) / k)
    t, w = gauss_legendre(order)
    lo, width = edges[:-1], np.diff(edges)
    pts = (lo[:, None] + width[:, None] * t).ravel()
    wts = (width[:, None] * w).ravel()
    return float(np.sum(np.asarray(func(pts), dtype=float) * wts))
