"""Quadrature rules on the reference triangle and unit interval.

Triangle rules come from a collapsed-coordinate (Duffy) map of a tensor
Gauss-Legendre grid on the unit square, which yields strictly positive
weights at any requested exactness degree. Edge rules are plain
Gauss-Legendre on [0, 1].

A graded composite rule is provided for integrands with a point
singularity at a triangle vertex (geometric subdivision toward that
vertex), used for error norms of the corner-singular benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights on the reference triangle (0,0),(1,0),(0,1).

    Weights sum to the reference area 1/2 and the rule integrates all
    bivariate monomials of total degree <= degree exactly.
    """

    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)
    degree: int


@lru_cache(maxsize=None)
def _gauss01(n: int):
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle, exact to total degree."""
    degree = max(degree, 0)
    n = (degree + 3) // 2 + 1
    xu, wu = _gauss01(n)
    xv, wv = _gauss01(n)
    U, V = np.meshgrid(xu, xv, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    # collapsed map (u, v) -> (u (1 - v), v) with Jacobian (1 - v)
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    w = (WU * WV * (1.0 - V)).ravel()
    pts = np.column_stack([x, y])
    return QuadratureRule(points=pts, weights=w, degree=degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int):
    """Gauss-Legendre rule on [0, 1] exact to the given degree.

    Returns (t, w) with sum(w) = 1.
    """
    n = max((degree + 2) // 2, 1)
    return _gauss01(n)


def map_to_physical(rule: QuadratureRule, verts: np.ndarray):
    """Map a reference rule to physical triangles.

    verts has shape (nelt, 3, 2). Returns points (nelt, nq, 2) and weights
    (nelt, nq) scaled by the Jacobian determinant.
    """
    a = verts[:, 0]
    ja = verts[:, 1] - verts[:, 0]
    jb = verts[:, 2] - verts[:, 0]
    det = ja[:, 0] * jb[:, 1] - ja[:, 1] * jb[:, 0]
    pts = (
        a[:, None, :]
        + rule.points[None, :, 0, None] * ja[:, None, :]
        + rule.points[None, :, 1, None] * jb[:, None, :]
    )
    wts = np.abs(det)[:, None] * rule.weights[None, :]
    return pts, wts


def graded_triangle_rule(verts: np.ndarray, corner: int, degree: int, levels: int = 30):
    """Composite rule on one physical triangle, graded toward one vertex.

    verts is (3, 2); corner indexes the singular vertex. The triangle is
    split into a geometric sequence of annular strips shrinking toward the
    corner (ratio 1/2); each strip is a trapezoid cut into two triangles
    carrying the base rule. The innermost tip triangle is kept as a single
    scaled triangle with the base rule, so the rule integrates any bounded
    integrand and resolves integrable power singularities r^s, s > -2, to
    high relative accuracy.

    Returns (points (nq, 2), weights (nq,)).
    """
    verts = np.asarray(verts, dtype=float)
    c = verts[corner]
    p = verts[(corner + 1) % 3]
    q = verts[(corner + 2) % 3]
    base = triangle_rule(degree)
    tris = []
    # strip between scale s_outer and s_inner relative to the corner
    s_outer = 1.0
    for _ in range(levels):
        s_inner = 0.5 * s_outer
        po, qo = c + s_outer * (p - c), c + s_outer * (q - c)
        pi, qi = c + s_inner * (p - c), c + s_inner * (q - c)
        tris.append((po, qo, qi))
        tris.append((po, qi, pi))
        s_outer = s_inner
    tris.append((c, c + s_outer * (p - c), c + s_outer * (q - c)))
    tri_arr = np.array(tris)
    pts, wts = map_to_physical(base, tri_arr)
    return pts.reshape(-1, 2), wts.ravel()
