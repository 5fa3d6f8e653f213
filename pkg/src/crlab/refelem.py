"""Modal shape functions and nonconforming bubbles on the reference triangle.

Points are barycentric triples (l0, l1, l2). Local indices are 0-based: local
edge F is the edge opposite local vertex F. Inside the library the local
vertices of every element are sorted by global index, so on every edge the
coordinate t = l_b - l_a (a < b) runs from the lower to the higher global
vertex and agrees on both sides.

Derivatives are returned with respect to the barycentrics treated as
independent variables; the physical gradient is sum_i d_i(phi) grad(l_i).
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .polytools import QuadRuleTri, dim_p, gauss_legendre, legendre_table, triangle_rule


class Shape(NamedTuple):
    """Descriptor of one local shape function.

    kind: 'const', 'hat' (a = vertex), 'edge' (a = local edge, b = j), 'elem' (a = r1,
    b = r2), 'ncedge' (a = local edge, b = q), 'ncelem' (a = p).
    """
    kind: str
    a: int
    b: int = 0


def edge_vertices(F: int) -> tuple[int, int]:
    """Local endpoints (low, high) of local edge F."""
    i, j = (F + 1) % 3, (F + 2) % 3
    return (i, j) if i < j else (j, i)


def _as_lam(pt) -> np.ndarray:
    lam = np.asarray(pt, dtype=float)
    if lam.shape[-1] != 3:
        raise ValueError("barycentric points need three coordinates")
    return lam


def _edge_coef(j: int) -> float:
    return 8.0 * math.sqrt(4 * j + 2) / (j * (j + 1))


def eval_hat(i: int, pt):
    return _as_lam(pt)[..., i]


def eval_edge_modal(F: int, j: int, pt):
    """8 sqrt(4j+2)/(j(j+1)) l_a l_b L_j'(l_b - l_a) on edge F."""
    if j < 1:
        raise ValueError("edge modal index starts at 1")
    lam = _as_lam(pt)
    a, b = edge_vertices(F)
    _, d1 = legendre_table(j, lam[..., b] - lam[..., a], derivatives=1)
    return _edge_coef(j) * lam[..., a] * lam[..., b] * d1[j]


def eval_element_modal(r1: int, r2: int, pt):
    """l0 l1 l2 L_r1(l1 - l0) L_r2(2 l2 - 1)."""
    if r1 < 0 or r2 < 0:
        raise ValueError("element modal indices must be nonnegative")
    lam = _as_lam(pt)
    P = legendre_table(r1, lam[..., 1] - lam[..., 0])[r1]
    Q = legendre_table(r2, 2.0 * lam[..., 2] - 1.0)[r2]
    return lam[..., 0] * lam[..., 1] * lam[..., 2] * P * Q


def eval_nc_edge_bubble(F: int, q: int, pt):
    """L_q(1 - 2 l_F); equals 1 on edge F. Only odd q is admissible."""
    if q < 1 or q % 2 == 0:
        raise ValueError(f"edge bubble degree must be odd, got {q}")
    lam = _as_lam(pt)
    return legendre_table(q, 1.0 - 2.0 * lam[..., F])[q]


def eval_nc_element_bubble(p: int, pt):
    """(-1 + sum_i L_p(1 - 2 l_i)) / 2. Only even p is admissible."""
    if p < 2 or p % 2:
        raise ValueError(f"element bubble degree must be even, got {p}")
    lam = _as_lam(pt)
    vals = legendre_table(p, 1.0 - 2.0 * lam)[p]
    return 0.5 * (-1.0 + vals.sum(axis=-1))


def modal_shapes(p: int, edge_degrees=None) -> list[Shape]:
    """Hierarchical modal basis of P_p: hats, edge modes, element modes.

    ``edge_degrees`` optionally raises the edge-mode count per edge.
    """
    if p == 0:
        return [Shape("const", 0)]
    pf = [p] * 3 if edge_degrees is None else list(edge_degrees)
    shapes = [Shape("hat", i) for i in range(3)]
    shapes += edge_and_element_shapes(p, pf)
    return shapes


def edge_and_element_shapes(p: int, edge_degrees) -> list[Shape]:
    shapes = [Shape("edge", F, j) for F in range(3) for j in range(1, edge_degrees[F])]
    shapes += element_shapes(p)
    return shapes


def element_shapes(p: int) -> list[Shape]:
    return [Shape("elem", r1, n - r1) for n in range(p - 2) for r1 in range(n + 1)]


def tabulate(shapes, lam) -> tuple[np.ndarray, np.ndarray]:
    """Values (n, m) and barycentric derivatives (n, 3, m) at points lam (m, 3)."""
    lam = np.atleast_2d(_as_lam(lam))
    m = len(lam)
    n = len(shapes)
    vals = np.zeros((n, m))
    ders = np.zeros((n, 3, m))
    if n == 0:
        return vals, ders
    maxdeg = 1 + max(max(s.a, s.b) for s in shapes)
    edge_tabs = {}
    for F in range(3):
        a, b = edge_vertices(F)
        edge_tabs[F] = legendre_table(maxdeg + 1, lam[:, b] - lam[:, a], derivatives=2)
    one_minus = legendre_table(maxdeg + 1, 1.0 - 2.0 * lam.T, derivatives=1)
    LP = legendre_table(maxdeg, lam[:, 1] - lam[:, 0], derivatives=1)
    LQ = legendre_table(maxdeg, 2.0 * lam[:, 2] - 1.0, derivatives=1)
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    for k, s in enumerate(shapes):
        if s.kind == "const":
            vals[k] = 1.0
        elif s.kind == "hat":
            vals[k] = lam[:, s.a]
            ders[k, s.a] = 1.0
        elif s.kind == "edge":
            F, j = s.a, s.b
            a, b = edge_vertices(F)
            c = _edge_coef(j)
            _, d1, d2 = edge_tabs[F]
            la, lb = lam[:, a], lam[:, b]
            vals[k] = c * la * lb * d1[j]
            ders[k, a] = c * (lb * d1[j] - la * lb * d2[j])
            ders[k, b] = c * (la * d1[j] + la * lb * d2[j])
        elif s.kind == "elem":
            r1, r2 = s.a, s.b
            P, dP = LP[0][r1], LP[1][r1]
            Q, dQ = LQ[0][r2], LQ[1][r2]
            B = l0 * l1 * l2
            vals[k] = B * P * Q
            ders[k, 0] = l1 * l2 * P * Q - B * dP * Q
            ders[k, 1] = l0 * l2 * P * Q + B * dP * Q
            ders[k, 2] = l0 * l1 * P * Q + 2.0 * B * P * dQ
        elif s.kind == "ncedge":
            F, q = s.a, s.b
            if q % 2 == 0:
                raise ValueError(f"edge bubble degree must be odd, got {q}")
            vals[k] = one_minus[0][q, F]
            ders[k, F] = -2.0 * one_minus[1][q, F]
        elif s.kind == "ncelem":
            p = s.a
            if p % 2:
                raise ValueError(f"element bubble degree must be even, got {p}")
            vals[k] = 0.5 * (-1.0 + one_minus[0][p].sum(axis=0))
            ders[k] = -one_minus[1][p]
        else:
            raise ValueError(f"unknown shape kind {s.kind!r}")
    return vals, ders


class LocalBasis:
    """Ordered list of shape descriptors with cached reference tables."""

    def __init__(self, shapes, degree: int):
        self.shapes = tuple(shapes)
        self.degree = int(degree)

    def __len__(self) -> int:
        return len(self.shapes)

    def __hash__(self) -> int:
        return hash(self.shapes)

    def __eq__(self, other) -> bool:
        return isinstance(other, LocalBasis) and self.shapes == other.shapes

    def __repr__(self) -> str:
        return f"LocalBasis(degree={self.degree}, n={len(self.shapes)})"

    def evaluate(self, lam):
        return tabulate(self.shapes, lam)

    def volume_tables(self, exactness: int):
        return _volume_tables(self.shapes, int(exactness))

    def edge_tables(self, F: int, n_points: int):
        return _edge_tables(self.shapes, int(F), int(n_points))


@lru_cache(maxsize=256)
def _volume_tables(shapes, exactness):
    rule = triangle_rule(exactness)
    vals, ders = tabulate(shapes, rule.points)
    return rule, vals, ders


def edge_points(F: int, t) -> np.ndarray:
    """Barycentric points on local edge F for edge coordinates t in [-1, 1]."""
    t = np.asarray(t, dtype=float)
    lam = np.zeros((len(t), 3))
    a, b = edge_vertices(F)
    lam[:, a] = 0.5 * (1.0 - t)
    lam[:, b] = 0.5 * (1.0 + t)
    return lam


@lru_cache(maxsize=512)
def _edge_tables(shapes, F, n_points):
    g = gauss_legendre(n_points)
    vals, ders = tabulate(shapes, edge_points(F, g.nodes))
    return g, vals, ders


def stiffness_tables(basis: LocalBasis, exactness: int) -> np.ndarray:
    """S[i, j] = mean over K-hat of d_i(phi_a) d_j(phi_b); shape (3, 3, n, n)."""
    rule, _, ders = basis.volume_tables(exactness)
    w = rule.unit_weights
    return np.einsum("aiq,bjq,q->ijab", ders, ders, w)


def mass_table(basis: LocalBasis, exactness: int) -> np.ndarray:
    rule, vals, _ = basis.volume_tables(exactness)
    return (vals * rule.unit_weights) @ vals.T


# ---------------------------------------------------------------------------
# degrees of freedom and unisolvence


def dof_set(p: int, kind: str) -> list[int]:
    """Edge moment orders: 'odd-set' uses 0..p-1, 'new-set' uses 0..p-2 and p."""
    if kind == "odd-set":
        return list(range(p))
    if kind == "new-set":
        return list(range(p - 1)) + [p]
    raise ValueError(f"unknown dof set {kind!r}")


def bulk_shapes(p: int) -> list[tuple[int, int]]:
    """Bulk moment weights L_r1(l1 - l0) L_r2(2 l2 - 1), r1 + r2 <= p - 3."""
    return [(s.a, s.b) for s in element_shapes(p)]


def dof_matrix(p: int, dofs: str = "odd-set") -> np.ndarray:
    """DOF functionals (rows) applied to the modal basis of P_p (columns).

    Edge rows are |F|^-1 (v, L_j^F)_F; bulk rows are |K|^-1 (v, m_beta)_K.
    """
    if p < 1:
        raise ValueError("degree must be >= 1")
    shapes = tuple(modal_shapes(p))
    orders = dof_set(p, dofs)
    rows = []
    g = gauss_legendre(p + 2)
    for F in range(3):
        vals, _ = tabulate(shapes, edge_points(F, g.nodes))
        Lt = legendre_table(max(orders), g.nodes)
        for j in orders:
            rows.append(0.5 * vals @ (g.weights * Lt[j]))
    rule: QuadRuleTri = triangle_rule(2 * p)
    vals, _ = tabulate(shapes, rule.points)
    lam = rule.points
    for r1, r2 in bulk_shapes(p):
        m = legendre_table(r1, lam[:, 1] - lam[:, 0])[r1] * legendre_table(r2, 2 * lam[:, 2] - 1)[r2]
        rows.append(vals @ (rule.unit_weights * m))
    A = np.array(rows)
    assert A.shape == (dim_p(p), dim_p(p))
    return A


def modal_combination(p: int, coeffs, lam) -> np.ndarray:
    """Evaluate sum_k coeffs[k] * phi_k of the modal P_p basis at points lam."""
    vals, _ = tabulate(tuple(modal_shapes(p)), lam)
    return np.asarray(coeffs) @ vals
