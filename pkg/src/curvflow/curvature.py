"""Ollivier-type curvatures of weighted graphs.

Covers the plain transport curvature kappa = 1 - W(mu_x, mu_y)/d(x, y),
its alpha-lazy variant, the Lin-Lu-Yau limit (slope of kappa^alpha at
alpha = 0), and the modified ball-transport curvature driving the
p-Laplace gradient estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CurvflowError, ValidationError
from .graphs import (
    DistanceMatrix,
    WeightedGraph,
    combinatorial_metric,
    connected_components,
    shortest_path_metric,
)
from .transport import ProbMeasure, constrained_transport_max, wasserstein

__all__ = [
    "CurvatureError",
    "CurvatureReport",
    "vertex_measure",
    "ollivier_kappa",
    "kappa_alpha",
    "kappa_lly",
    "modified_kappa_phi",
    "curvature_report",
]

DEG_TOL = 1e-12


class CurvatureError(CurvflowError):
    """A curvature evaluation could not be completed reliably."""


def vertex_measure(g: WeightedGraph, x: int, alpha: float | None = None) -> ProbMeasure:
    """One-step distribution of the random walk at x.

    With ``alpha=None`` each neighbor z gets w(x, z)/m(x) and the
    remainder 1 - deg(x) stays at x, which requires deg(x) <= 1.  With a
    numeric ``alpha`` the neighbor masses are scaled by alpha and
    1 - alpha deg(x) stays at x, which requires alpha deg(x) <= 1.
    """
    deg = g.degree(x)
    if alpha is None:
        if deg > 1.0 + DEG_TOL:
            raise ValidationError(
                f"vertex {x} has deg = {deg:g} > 1; the non-lazy measure needs deg <= 1")
        stay = max(1.0 - deg, 0.0)
        scale = 1.0
    else:
        if not 0.0 <= alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
        if alpha * deg > 1.0 + DEG_TOL:
            raise ValidationError(
                f"alpha * deg = {alpha * deg:g} > 1 at vertex {x}")
        stay = max(1.0 - alpha * deg, 0.0)
        scale = alpha
    masses = {int(z): scale * g.weights[x, z] / g.measure[x]
              for z in g.neighbors(x) if scale > 0.0}
    if stay > DEG_TOL or not masses:
        masses[x] = masses.get(x, 0.0) + stay
    return ProbMeasure.from_dict(masses)


def ollivier_kappa(g: WeightedGraph, d: DistanceMatrix, x: int, y: int) -> float:
    """kappa(x, y) = 1 - W(mu_x, mu_y) / d(x, y)."""
    if x == y:
        raise ValidationError("curvature needs two distinct vertices")
    dxy = d.value(x, y)
    cost, _ = wasserstein(vertex_measure(g, x), vertex_measure(g, y), d)
    return 1.0 - cost / dxy


def kappa_alpha(g: WeightedGraph, d: DistanceMatrix, x: int, y: int,
                alpha: float) -> float:
    """alpha-lazy curvature 1 - W(mu_x^alpha, mu_y^alpha) / d(x, y)."""
    if x == y:
        raise ValidationError("curvature needs two distinct vertices")
    dxy = d.value(x, y)
    cost, _ = wasserstein(vertex_measure(g, x, alpha), vertex_measure(g, y, alpha), d)
    return 1.0 - cost / dxy


def kappa_lly(g: WeightedGraph, d: DistanceMatrix, x: int, y: int, *,
              alpha: float = 1e-3, agree_tol: float = 1e-6) -> float:
    """Lin-Lu-Yau curvature as the slope of kappa^alpha at alpha = 0.

    kappa^alpha is piecewise linear and vanishes at alpha = 0, so the
    slope is read off at ``alpha`` and ``alpha/2``; the two values must
    agree within ``agree_tol`` (otherwise alpha sits beyond the first
    breakpoint — retry with a smaller alpha).
    """
    k1 = kappa_alpha(g, d, x, y, alpha) / alpha
    k2 = kappa_alpha(g, d, x, y, alpha / 2.0) / (alpha / 2.0)
    if abs(k1 - k2) > agree_tol:
        raise CurvatureError(
            f"kappa^alpha/alpha disagrees at alpha={alpha:g} ({k1:.9g}) and "
            f"alpha/2 ({k2:.9g}); retry with a smaller alpha")
    return k2


def modified_kappa_phi(g: WeightedGraph, x: int, y: int, phi_shape: str,
                       d0: DistanceMatrix | None = None) -> float:
    """Ball-transport curvature with the cycle exclusions of phi's shape.

    Convex phi forbids the diagonal of the plan (three-cycles); concave
    phi forbids hop-distance-2 cells off the anchors (five-cycles).  Uses
    the combinatorial distance.
    """
    if phi_shape not in ("convex", "concave"):
        raise ValidationError(f"phi_shape must be convex or concave, got {phi_shape!r}")
    if d0 is None:
        d0 = combinatorial_metric(g)
    forbid = "three-cycles" if phi_shape == "convex" else "five-cycles"
    value, _ = constrained_transport_max(x, y, g, d0, forbid)
    return value


@dataclass(frozen=True)
class CurvatureReport:
    """Per-edge curvatures with per-component min/max/spread."""

    values: dict[tuple[int, int], float]
    component_stats: dict[int, tuple[float, float, float]]  # root -> (min, max, spread)

    @property
    def min(self) -> float:
        return min((v[0] for v in self.component_stats.values()), default=0.0)

    @property
    def max(self) -> float:
        return max((v[1] for v in self.component_stats.values()), default=0.0)

    @property
    def max_spread(self) -> float:
        return max((v[2] for v in self.component_stats.values()), default=0.0)


def curvature_report(g: WeightedGraph, d: DistanceMatrix | None = None,
                     kind: str = "ollivier", alpha: float | None = None) -> CurvatureReport:
    """Curvature of every edge plus spread statistics per component.

    ``kind`` is one of "ollivier", "alpha" (needs ``alpha``), "lly".
    Components without edges contribute no statistics.
    """
    if d is None:
        d = shortest_path_metric(g)
    values: dict[tuple[int, int], float] = {}
    for u, v in g.edges():
        if kind == "ollivier":
            values[(u, v)] = ollivier_kappa(g, d, u, v)
        elif kind == "alpha":
            if alpha is None:
                raise ValidationError("kind='alpha' needs an alpha value")
            values[(u, v)] = kappa_alpha(g, d, u, v, alpha)
        elif kind == "lly":
            values[(u, v)] = kappa_lly(g, d, u, v)
        else:
            raise ValidationError(f"unknown curvature kind {kind!r}")
    stats: dict[int, tuple[float, float, float]] = {}
    for comp in connected_components(g):
        cset = set(comp)
        inside = [values[e] for e in values if e[0] in cset]
        if inside:
            lo, hi = min(inside), max(inside)
            stats[comp[0]] = (lo, hi, hi - lo)
    return CurvatureReport(values, stats)
