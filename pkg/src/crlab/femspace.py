"""Global DOF maps for the CR-type and DG spaces."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TriMesh, edge_degrees
from .polytools import dim_p, gauss_legendre, legendre_table
from .refelem import LocalBasis, Shape, edge_points, element_shapes, modal_shapes

VARIANTS = ("standard-odd", "standard-even", "new-even", "variable", "dg")


class SpaceError(ValueError):
    """Incompatible variant, degree or parity."""


@dataclass(frozen=True)
class ElementGeometry:
    """Per-element data with local vertices sorted by global index."""
    perm: np.ndarray          # (nk, 3) original local index of sorted vertex
    coords: np.ndarray        # (nk, 3, 2)
    grads: np.ndarray         # (nk, 3, 2) gradients of the barycentrics
    areas: np.ndarray
    edges: np.ndarray         # (nk, 3) global edge opposite sorted vertex F


def element_geometry(mesh: TriMesh) -> ElementGeometry:
    perm = np.argsort(mesh.elements, axis=1, kind="stable")
    verts = np.take_along_axis(mesh.elements, perm, axis=1)
    X = mesh.vertices[verts]
    M = np.concatenate([X.transpose(0, 2, 1), np.ones((len(X), 1, 3))], axis=1)
    Minv = np.linalg.inv(M)
    grads = Minv[:, :, :2]
    edges = np.take_along_axis(mesh.element_edges, perm, axis=1)
    return ElementGeometry(perm, X, grads, mesh.areas.copy(), edges)


@dataclass(eq=False)
class FeSpace:
    """Explicit span of one of the discrete spaces.

    Every element carries a ``LocalBasis`` (shared between elements with
    equal layout) and a local-to-global map ``local_dofs[k]`` (-1 marks a
    local function that is not part of the space, e.g. the dropped
    elemental bubble).
    """
    mesh: TriMesh
    variant: str
    element_degrees: np.ndarray
    edge_degrees: np.ndarray
    geometry: ElementGeometry
    layouts: list[LocalBasis]
    layout_of: np.ndarray
    local_dofs: np.ndarray            # (nk, nmax), -1 padded
    ndof: int
    dof_keys: list[tuple] = field(repr=False)
    dropped_bubble: int | None = None

    @property
    def max_degree(self) -> int:
        return int(max(self.element_degrees.max(), self.edge_degrees.max()))

    @property
    def uniform_degree(self) -> int | None:
        p = np.unique(self.element_degrees)
        return int(p[0]) if len(p) == 1 else None

    def elements_by_layout(self):
        """Yield (layout, element indices, dof map restricted to the layout size)."""
        for lid, basis in enumerate(self.layouts):
            ks = np.flatnonzero(self.layout_of == lid)
            if ks.size:
                yield basis, ks, self.local_dofs[ks, :len(basis)]

    def evaluate(self, coeffs, elements, lam) -> np.ndarray:
        """Values on given elements at barycentric points (sorted-vertex order); (len(elements), m)."""
        coeffs = np.asarray(coeffs)
        elements = np.asarray(elements)
        out = np.zeros((len(elements), len(lam)))
        for lid, basis in enumerate(self.layouts):
            sel = np.flatnonzero(self.layout_of[elements] == lid)
            if sel.size == 0:
                continue
            vals, _ = basis.evaluate(lam)
            dofs = self.local_dofs[elements[sel], :len(basis)]
            c = np.where(dofs >= 0, coeffs[np.maximum(dofs, 0)], 0.0)
            out[sel] = c @ vals
        return out

    def gradient(self, coeffs, elements, lam) -> np.ndarray:
        """Gradients on given elements at points; (len(elements), m, 2)."""
        coeffs = np.asarray(coeffs)
        elements = np.asarray(elements)
        out = np.zeros((len(elements), len(lam), 2))
        for lid, basis in enumerate(self.layouts):
            sel = np.flatnonzero(self.layout_of[elements] == lid)
            if sel.size == 0:
                continue
            _, ders = basis.evaluate(lam)
            ks = elements[sel]
            dofs = self.local_dofs[ks, :len(basis)]
            c = np.where(dofs >= 0, coeffs[np.maximum(dofs, 0)], 0.0)
            dl = np.einsum("ka,aiq->kiq", c, ders)
            out[sel] = np.einsum("kiq,kid->kqd", dl, self.geometry.grads[ks])
        return out

    def physical_points(self, elements, lam) -> np.ndarray:
        return np.einsum("qi,kid->kqd", lam, self.geometry.coords[np.asarray(elements)])

    def edge_side(self, edge: int, side: int):
        """(element, local edge F, n_K . n_F) for side 0/1 of an edge, or None."""
        k = int(self.mesh.edge_elements[edge, side])
        if k < 0:
            return None
        F = int(np.flatnonzero(self.geometry.edges[k] == edge)[0])
        orig = self.geometry.perm[k, F]
        sign = float(np.sign(self.mesh.element_normals[k, orig] @ self.mesh.normals[edge]))
        return k, F, sign


def _check_degree(variant: str, p: int) -> None:
    if p < (0 if variant == "dg" else 1):
        raise SpaceError("polynomial degree must be >= 1")
    if variant == "standard-odd" and p % 2 == 0:
        raise SpaceError(f"standard-odd needs odd p, got {p}")
    if variant in ("standard-even", "new-even") and p % 2:
        raise SpaceError(f"{variant} needs even p, got {p}")


def build_space(mesh: TriMesh, variant: str, degrees, drop_bubble: bool = True,
                _bubble_degrees=None) -> FeSpace:
    """Build the DOF map.

    ``degrees`` is an int (uniform) or a per-element array (variable only).
    Enumeration: vertices, then edges by index, then elements by index.
    ``_bubble_degrees`` (variable only) replaces the linear edge bubble by a
    per-element odd degree; it exists for the locking counterexample.
    """
    if variant not in VARIANTS:
        raise SpaceError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    nk, ne, nv = mesh.n_elements, mesh.n_edges, mesh.n_vertices
    if np.ndim(degrees) == 0:
        pk = np.full(nk, int(degrees), dtype=np.int64)
    else:
        pk = np.asarray(degrees, dtype=np.int64)
        if pk.shape != (nk,):
            raise SpaceError("per-element degrees must have one entry per element")
        if variant != "variable" and len(np.unique(pk)) > 1:
            raise SpaceError(f"{variant} needs a uniform degree")
    if variant != "variable":
        _check_degree(variant, int(pk[0]))
    elif pk.min() < 1:
        raise SpaceError("polynomial degree must be >= 1")
    pf = edge_degrees(mesh, pk)
    geo = element_geometry(mesh)

    keys: list[tuple] = []
    vertex_dof = -np.ones(nv, dtype=np.int64)
    if variant == "standard-even":
        vertex_dof[:] = np.arange(nv)
        keys += [("vertex", v, "hat", 0) for v in range(nv)]

    # per-edge: [bubble?] + modals j = 1..p_F - 1
    edge_start = np.zeros(ne + 1, dtype=np.int64)
    has_edge_bubble = variant in ("standard-odd", "new-even", "variable")
    if variant == "standard-odd":
        bubble_q = int(pk[0])
    elif variant == "new-even":
        bubble_q = int(pk[0]) - 1
    else:
        bubble_q = 1
    counter = len(keys)
    if variant != "dg":
        for e in range(ne):
            edge_start[e] = counter
            if has_edge_bubble:
                keys.append(("edge", e, "ncedge", bubble_q))
            keys += [("edge", e, "edge", j) for j in range(1, int(pf[e]))]
            counter = len(keys)
        edge_start[ne] = counter

    layouts: dict[tuple, int] = {}
    basis_list: list[LocalBasis] = []
    layout_of = np.zeros(nk, dtype=np.int64)
    rows: list[list[int]] = []
    dropped = None
    for k in range(nk):
        p = int(pk[k])
        if variant == "dg":
            shapes = modal_shapes(p)
            gl = list(range(len(keys), len(keys) + len(shapes)))
            keys += [("element", k, s.kind, (s.a, s.b)) for s in shapes]
        else:
            fdeg = [int(pf[geo.edges[k, F]]) for F in range(3)]
            shapes, gl = [], []
            if variant == "standard-even":
                verts = np.sort(mesh.elements[k])
                for i in range(3):
                    shapes.append(Shape("hat", i))
                    gl.append(int(vertex_dof[verts[i]]))
            for F in range(3):
                e = int(geo.edges[k, F])
                pos = int(edge_start[e])
                if has_edge_bubble:
                    q = bubble_q if _bubble_degrees is None else int(_bubble_degrees[k])
                    shapes.append(Shape("ncedge", F, q))
                    gl.append(pos)
                    pos += 1
                for j in range(1, fdeg[F]):
                    shapes.append(Shape("edge", F, j))
                    gl.append(pos)
                    pos += 1
            for s in element_shapes(p):
                shapes.append(s)
                gl.append(len(keys))
                keys.append(("element", k, "elem", (s.a, s.b)))
            if variant == "standard-even":
                shapes.append(Shape("ncelem", p))
                if drop_bubble and k == nk - 1:
                    gl.append(-1)
                    dropped = k
                else:
                    gl.append(len(keys))
                    keys.append(("element", k, "ncelem", p))
        key = tuple(shapes)
        if key not in layouts:
            layouts[key] = len(basis_list)
            local_deg = p if variant == "dg" else max(p, int(pf[geo.edges[k]].max()))
            basis_list.append(LocalBasis(shapes, local_deg))
        layout_of[k] = layouts[key]
        rows.append(gl)

    nmax = max(len(r) for r in rows)
    local = -np.ones((nk, nmax), dtype=np.int64)
    for k, r in enumerate(rows):
        local[k, :len(r)] = r
    return FeSpace(mesh, variant, pk, pf, geo, basis_list, layout_of, local, len(keys), keys, dropped)


def expected_dimension(mesh: TriMesh, variant: str, degrees) -> int:
    """Closed-form dimension counts."""
    nk, nt, ni, nv = mesh.n_elements, mesh.n_edges, mesh.n_interior_edges, mesh.n_vertices
    if variant == "variable":
        pk = np.broadcast_to(np.asarray(degrees, dtype=np.int64), (nk,))
        pf = edge_degrees(mesh, pk)
        return int(nt + np.sum(pf - 1) + sum(dim_p(int(p) - 3) for p in pk))
    p = int(degrees)
    if variant == "dg":
        return dim_p(p) * nk
    if variant == "standard-even":
        # dim X_n + dim Phi_n - 1
        return nv + (p - 1) * nt + dim_p(p - 3) * nk + nk - 1
    # implicit count: dim P_p * N_K - p * N_I
    return dim_p(p) * nk - p * ni


# ---------------------------------------------------------------------------
# edge traces and moments


def edge_trace(space: FeSpace, coeffs, edge: int, side: int, t) -> np.ndarray | None:
    info = space.edge_side(edge, side)
    if info is None:
        return None
    k, F, _ = info
    return space.evaluate(coeffs, [k], edge_points(F, t))[0]


def jump_moments(space: FeSpace, coeffs, edge: int, j: int) -> float:
    """(jump(v), L_j^F)_F with n_F-signed traces; the jump is the trace on boundary edges."""
    n = space.max_degree + j + 2
    g = gauss_legendre(n)
    Lj = legendre_table(j, g.nodes)[j]
    h = space.mesh.edge_lengths[edge]
    total = 0.0
    for side in (0, 1):
        info = space.edge_side(edge, side)
        if info is None:
            continue
        k, F, sign = info
        tr = space.evaluate(coeffs, [k], edge_points(F, g.nodes))[0]
        total += sign * 0.5 * h * np.dot(g.weights * Lj, tr)
    return float(total)


@dataclass(frozen=True)
class BoundaryData:
    """Multiplier space on boundary edges: one row per (edge, Legendre order)."""
    edges: np.ndarray
    orders: np.ndarray
    rhs: np.ndarray           # (g, L_j^F)_F

    @property
    def size(self) -> int:
        return len(self.edges)


def multiplier_orders(space: FeSpace, edge: int) -> list[int]:
    """Legendre orders of the boundary multiplier space on one edge."""
    pF = int(space.edge_degrees[edge])
    if space.variant == "variable":
        return [j for j in range(pF + 1) if j != 1]
    if space.variant == "new-even":
        return list(range(pF - 1)) + [pF]
    if space.variant == "dg":
        return []
    return list(range(pF))


def boundary_moments(space: FeSpace, g, edge: int, orders, n_points: int | None = None) -> np.ndarray:
    """(g, L_j^F)_F for the given orders; g is called with (m, 2) points."""
    orders = list(orders)
    if not orders:
        return np.zeros(0)
    if g is None:
        return np.zeros(len(orders))
    n = n_points or (space.max_degree + 12)
    gl = gauss_legendre(n)
    a, b = space.mesh.edges[edge]
    A, B = space.mesh.vertices[a], space.mesh.vertices[b]
    x = 0.5 * (1 - gl.nodes)[:, None] * A + 0.5 * (1 + gl.nodes)[:, None] * B
    vals = np.asarray(g(x), dtype=float)
    L = legendre_table(max(orders), gl.nodes)
    h = space.mesh.edge_lengths[edge]
    return np.array([0.5 * h * np.dot(gl.weights * L[j], vals) for j in orders])


def interpolate_boundary(g, space: FeSpace) -> BoundaryData:
    """Multiplier descriptors and right-hand side moments for Dirichlet data g."""
    edges, orders, rhs = [], [], []
    for e in np.flatnonzero(space.mesh.boundary):
        js = multiplier_orders(space, int(e))
        edges += [int(e)] * len(js)
        orders += js
        rhs.append(boundary_moments(space, g, int(e), js))
    rhs_arr = np.concatenate(rhs) if rhs else np.zeros(0)
    return BoundaryData(np.array(edges, dtype=np.int64), np.array(orders, dtype=np.int64), rhs_arr)


# ---------------------------------------------------------------------------
# brute-force checks


def sample_points(n: int = 6) -> np.ndarray:
    """Interior barycentric lattice points used for rank computations."""
    pts = [(i, j, n - i - j) for i in range(1, n) for j in range(1, n - i) if n - i - j > 0]
    pts += [(0.5, 0.25, 0.25), (0.2, 0.7, 0.1)]
    lam = np.array(pts, dtype=float)
    return lam / lam.sum(axis=1, keepdims=True)


def global_evaluation_matrix(space: FeSpace, lam: np.ndarray) -> np.ndarray:
    """Rows: (element, point); columns: global basis functions."""
    nk, m = space.mesh.n_elements, len(lam)
    E = np.zeros((nk * m, space.ndof))
    for basis, ks, dofs in space.elements_by_layout():
        vals, _ = basis.evaluate(lam)
        for row, k in enumerate(ks):
            for a, d in enumerate(dofs[row]):
                if d >= 0:
                    E[k * m:(k + 1) * m, d] += vals[a]
    return E


def brute_force_rank(space: FeSpace, lam: np.ndarray | None = None) -> int:
    from .linalg import dense_rank
    if lam is None:
        lam = sample_points(space.max_degree + 3)
    return dense_rank(global_evaluation_matrix(space, lam))


def embed(coarse: FeSpace, fine: FeSpace, coeffs) -> np.ndarray:
    """Coefficient embedding between hierarchical spaces via matching DOF keys."""
    index = {key: i for i, key in enumerate(fine.dof_keys)}
    out = np.zeros(fine.ndof)
    for i, key in enumerate(coarse.dof_keys):
        if key not in index:
            raise SpaceError(f"DOF {key} has no counterpart in the target space")
        out[index[key]] = coeffs[i]
    return out
