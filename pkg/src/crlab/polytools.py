"""Legendre polynomials, Gauss-Legendre rules and triangle quadrature.

Barycentric coordinates are used throughout; the reference triangle has
vertices (-1, 0), (1, 0), (0, sqrt(3)), so triangle weights sum to sqrt(3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

REF_VERTICES = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, math.sqrt(3.0)]])
REF_AREA = math.sqrt(3.0)


@dataclass(frozen=True)
class QuadRule1D:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class QuadRuleTri:
    """Rule on the reference triangle.

    ``points`` has shape (n, 3) and holds barycentric triples; ``weights``
    sum to the reference area.
    """
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def unit_weights(self) -> np.ndarray:
        """Weights rescaled to sum to one (integral = |K| * sum)."""
        return self.weights / REF_AREA

    def cartesian(self) -> np.ndarray:
        return self.points @ REF_VERTICES


def legendre_table(n: int, x, derivatives: int = 0):
    """Values (and derivatives) of L_0..L_n at ``x``.

    Returns an array of shape (n+1, *x.shape), or a tuple of such arrays
    when ``derivatives`` is 1 or 2.
    """
    x = np.asarray(x, dtype=float)
    vals = np.empty((n + 1,) + x.shape)
    d1 = np.empty_like(vals) if derivatives >= 1 else None
    d2 = np.empty_like(vals) if derivatives >= 2 else None
    vals[0] = 1.0
    if d1 is not None:
        d1[0] = 0.0
    if d2 is not None:
        d2[0] = 0.0
    if n >= 1:
        vals[1] = x
        if d1 is not None:
            d1[1] = 1.0
        if d2 is not None:
            d2[1] = 0.0
    for k in range(1, n):
        a = (2 * k + 1) / (k + 1)
        b = k / (k + 1)
        vals[k + 1] = a * x * vals[k] - b * vals[k - 1]
        if d1 is not None:
            d1[k + 1] = a * (vals[k] + x * d1[k]) - b * d1[k - 1]
        if d2 is not None:
            d2[k + 1] = a * (2.0 * d1[k] + x * d2[k]) - b * d2[k - 1]
    if derivatives == 0:
        return vals
    if derivatives == 1:
        return vals, d1
    return vals, d1, d2


def legendre_eval(p: int, x):
    """L_p(x) by the three-term recurrence."""
    if p < 0:
        raise ValueError("degree must be nonnegative")
    out = legendre_table(p, x)[p]
    return float(out) if np.ndim(out) == 0 else out


def legendre_deriv(p: int, x):
    """L_p'(x) via the differentiated recurrence."""
    if p < 1:
        raise ValueError("derivative needs degree >= 1")
    out = legendre_table(p, x, derivatives=1)[1][p]
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def _gauss_legendre_cached(n: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        vals, d1 = legendre_table(n, x, derivatives=1)
        dx = vals[n] / d1[n]
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, d1 = legendre_table(n, x, derivatives=1)
    w = 2.0 / ((1.0 - x**2) * d1[n] ** 2)
    order = np.argsort(x)
    return tuple(x[order]), tuple(w[order])


def gauss_legendre(n: int) -> QuadRule1D:
    """n-point Gauss-Legendre rule on [-1, 1], exact up to degree 2n-1."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = _gauss_legendre_cached(n)
    return QuadRule1D(np.array(x), np.array(w))


@lru_cache(maxsize=None)
def _collapsed_rule(exactness: int):
    n = max(1, math.ceil((exactness + 2) / 2))
    g = gauss_legendre(n)
    xi, eta = np.meshgrid(g.nodes, g.nodes, indexing="ij")
    wxi, weta = np.meshgrid(g.weights, g.weights, indexing="ij")
    l3 = (1.0 + eta) / 2.0
    l1 = (1.0 - xi) / 2.0 * (1.0 - l3)
    l2 = (1.0 + xi) / 2.0 * (1.0 - l3)
    pts = np.stack([l1.ravel(), l2.ravel(), l3.ravel()], axis=1)
    w = ((1.0 - eta) / 4.0 * wxi * weta).ravel() * REF_AREA
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def triangle_rule(exactness: int, collapse_vertex: int = 2) -> QuadRuleTri:
    """Collapsed-coordinate (Duffy) product rule of the given exactness.

    The collapsed edge of the square is mapped onto ``collapse_vertex``,
    where points cluster; useful for integrands singular at a vertex.
    """
    if exactness < 0:
        raise ValueError("exactness must be nonnegative")
    pts, w = _collapsed_rule(int(exactness))
    if collapse_vertex != 2:
        perm = [0, 1, 2]
        perm[collapse_vertex], perm[2] = perm[2], perm[collapse_vertex]
        pts = pts[:, perm]
    return QuadRuleTri(pts, w, int(exactness))


@lru_cache(maxsize=None)
def _graded_rule(exactness: int, levels: int, sigma: float):
    base = triangle_rule(exactness, collapse_vertex=0)
    pieces = []
    # sub-triangles in barycentric coordinates of the parent, graded to vertex 0
    corner = np.array([1.0, 0.0, 0.0])
    a = np.array([0.0, 1.0, 0.0])
    b = np.array([0.0, 0.0, 1.0])
    for _ in range(levels):
        a2 = corner + sigma * (a - corner)
        b2 = corner + sigma * (b - corner)
        pieces.append((a2, a, b))
        pieces.append((a2, b, b2))
        a, b = a2, b2
    pieces.append((corner, a, b))
    pts, wts = [], []
    for tri in pieces:
        verts = np.array(tri)
        # ratio of sub-triangle area to the full barycentric simplex
        scale = abs(np.linalg.det(np.column_stack([verts[:, :2], np.ones(3)])))
        pts.append(base.points @ verts)
        wts.append(base.weights * scale)
    return np.vstack(pts), np.concatenate(wts)


def graded_triangle_rule(exactness: int, levels: int = 24, sigma: float = 0.5,
                         vertex: int = 0) -> QuadRuleTri:
    """Composite rule geometrically graded towards ``vertex``.

    Integrates functions with an algebraic point singularity at that vertex
    (e.g. gradients of r^(2/3)) to high accuracy.
    """
    pts, w = _graded_rule(int(exactness), int(levels), float(sigma))
    if vertex != 0:
        perm = [0, 1, 2]
        perm[vertex], perm[0] = perm[0], perm[vertex]
        pts = pts[:, perm]
    return QuadRuleTri(pts, w, int(exactness))


def dim_p(p: int) -> int:
    """Dimension of bivariate polynomials of total degree <= p (0 if p < 0)."""
    return 0 if p < 0 else (p + 1) * (p + 2) // 2
