"""Small quadrature helpers used by several modules.

All rules are deterministic: fixed node counts, fixed panel layouts, no
adaptive randomness, so repeated runs produce identical floats.
"""
from __future__ import annotations

import numpy as np

from .errors import QuadratureError

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int, lo: float = 0.0, hi: float = 1.0):
    """Gauss-Legendre nodes and weights on [lo, hi]."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
    x, w = _GL_CACHE[n]
    mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + rad * x, rad * w


def panel_quadrature(f, edges, points_per_panel: int = 24) -> float:
    """Composite Gauss-Legendre over the given panel edges."""
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(points_per_panel, lo, hi)
        total += float(np.sum(w * f(x)))
    return total


def geometric_panels(inner: float, lo: float, hi: float) -> list[float]:
    """Panel edges [lo, hi] refined geometrically near lo at scale `inner`.

    The first panel has width `inner`; widths double until `hi` is reached.
    """
    if hi <= lo:
        return [lo, hi]
    edges = [lo]
    step = max(inner, (hi - lo) * 1e-14)
    while edges[-1] + step < hi:
        edges.append(edges[-1] + step)
        step *= 2.0
    edges.append(hi)
    return edges


def refining_quadrature(f, edges, rtol: float = 1e-11, start_points: int = 16,
                        max_doublings: int = 6) -> float:
    """Composite quadrature refined by doubling nodes until stable.

    Raises QuadratureError when the refinement budget is exhausted
    before two successive evaluations agree to `rtol` (relative).
    """
    prev = panel_quadrature(f, edges, start_points)
    pts = start_points
    for _ in range(max_doublings):
        pts *= 2
        cur = panel_quadrature(f, edges, pts)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureError(
        f"quadrature did not stabilize to rtol={rtol} after {max_doublings} refinements"
    )


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^{dim-1} in R^dim."""
    import math
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
