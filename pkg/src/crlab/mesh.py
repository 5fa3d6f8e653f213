"""Conforming triangulations: topology, refinement, graded L-shape meshes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Malformed mesh file or non-conforming topology."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh with derived edge topology.

    Elements are stored counterclockwise. Edges are vertex pairs with the
    lower global index first; this fixes the 1D coordinate on every edge.
    For interior edges ``normals`` is the tangent rotated by +90 degrees,
    for boundary edges it is the outward normal of the incident element.
    """
    vertices: np.ndarray
    elements: np.ndarray
    edges: np.ndarray = field(repr=False)
    edge_elements: np.ndarray = field(repr=False)     # (ne, 2), -1 if none
    element_edges: np.ndarray = field(repr=False)     # (nk, 3), edge opposite local vertex i
    normals: np.ndarray = field(repr=False)
    edge_lengths: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)
    diameters: np.ndarray = field(repr=False)
    element_normals: np.ndarray = field(repr=False)   # (nk, 3, 2) outward

    @classmethod
    def from_arrays(cls, vertices, elements) -> "TriMesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshError("elements must have shape (nk, 3)")
        nv = len(vertices)
        if elements.size and (elements.min() < 0 or elements.max() >= nv):
            raise MeshError("element refers to a nonexistent vertex")
        p = vertices[elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshError(f"inverted or degenerate element(s): {bad[:10].tolist()}")

        nk = len(elements)
        # local edge i is opposite local vertex i
        loc = np.array([[1, 2], [2, 0], [0, 1]])
        pairs = np.sort(elements[:, loc], axis=2).reshape(-1, 2)
        uniq, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two elements")
        ne = len(uniq)
        element_edges = inverse.reshape(nk, 3)
        edge_elements = -np.ones((ne, 2), dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        owner = order // 3
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_elements[inverse[order][first], 0] = owner[first]
        edge_elements[inverse[order][~first], 1] = owner[~first]
        boundary = edge_elements[:, 1] < 0

        tang = vertices[uniq[:, 1]] - vertices[uniq[:, 0]]
        lengths = np.hypot(tang[:, 0], tang[:, 1])
        normals = np.stack([-tang[:, 1], tang[:, 0]], axis=1) / lengths[:, None]

        # outward element normals
        a = p[:, loc[:, 0]]
        b = p[:, loc[:, 1]]
        t = b - a
        en = np.stack([t[..., 1], -t[..., 0]], axis=2)
        en /= np.linalg.norm(en, axis=2, keepdims=True)

        bidx = np.flatnonzero(boundary)
        if bidx.size:
            k = edge_elements[bidx, 0]
            li = np.argmax(element_edges[k] == bidx[:, None], axis=1)
            normals[bidx] = en[k, li]

        sides = np.linalg.norm(np.stack([e1, e2, p[:, 2] - p[:, 1]], axis=1), axis=2)
        diameters = sides.max(axis=1)
        return cls(vertices, elements, uniq, edge_elements, element_edges, normals,
                   lengths, boundary, areas, diameters, en)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_interior_edges(self) -> int:
        return int(np.count_nonzero(~self.boundary))

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def local_edge_index(self, edge: int, element: int) -> int:
        return int(np.flatnonzero(self.element_edges[element] == edge)[0])

    def shape_regularity(self) -> float:
        """Smallest rho with h_K <= rho * h_F for all edges F of K."""
        hf = self.edge_lengths[self.element_edges]
        return float(np.max(self.diameters[:, None] / hf))

    def euler_check(self) -> tuple[bool, bool]:
        """(N_I + N_T == 3 N_K, N_K - N_T + N_V == 1)."""
        nk, nt, ni, nv = self.n_elements, self.n_edges, self.n_interior_edges, self.n_vertices
        return ni + nt == 3 * nk, nk - nt + nv == 1

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary])


def load_mesh(path) -> TriMesh:
    """Read the plain-text format: ``nv ne``, nv lines ``x y``, ne lines ``i j k``.

    Comments start with ``#``; indices are 0-based, elements counterclockwise.
    """
    tokens: list[list[str]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    try:
        nv, ne = (int(t) for t in tokens[0])
        coords = np.array([[float(t) for t in row] for row in tokens[1:1 + nv]])
        tris = np.array([[int(t) for t in row] for row in tokens[1 + nv:1 + nv + ne]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    if coords.shape != (nv, 2) or tris.shape != (ne, 3) or len(tokens) != 1 + nv + ne:
        raise MeshError(f"mesh file {path}: counts do not match header {nv} {ne}")
    return TriMesh.from_arrays(coords, tris)


def save_mesh(mesh: TriMesh, path) -> None:
    lines = [f"{mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.elements.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def uniform_refine(mesh: TriMesh) -> TriMesh:
    """Red refinement: every triangle into four through edge midpoints."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    v = mesh.elements
    m = nv + mesh.element_edges      # m[:, i] is the midpoint opposite vertex i
    m01, m12, m20 = m[:, 2], m[:, 0], m[:, 1]
    children = np.stack([
        np.stack([v[:, 0], m01, m20], axis=1),
        np.stack([m01, v[:, 1], m12], axis=1),
        np.stack([m20, m12, v[:, 2]], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ], axis=1).reshape(-1, 3)
    return TriMesh.from_arrays(verts, children)


MESH_FAMILIES = ("diagonal", "unionjack", "crisscross")


def unit_square(n: int = 1, family: str = "diagonal", x0=(0.0, 0.0), size: float = 1.0) -> TriMesh:
    """Structured mesh of an n-by-n grid of squares.

    ``diagonal`` splits each square along the (0,0)-(1,1) diagonal,
    ``unionjack`` alternates the diagonal direction in a checkerboard pattern
    (for even n no triangle has two boundary edges), ``crisscross`` splits
    each square into four by both diagonals.
    """
    xs = x0[0] + size * np.linspace(0.0, 1.0, n + 1)
    ys = x0[1] + size * np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = [np.column_stack([X.ravel(), Y.ravel()])]
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    tris = []
    if family == "diagonal":
        for j in range(n):
            for i in range(n):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                tris += [(a, b, c), (a, c, d)]
    elif family == "unionjack":
        for j in range(n):
            for i in range(n):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                tris += [(a, b, c), (a, c, d)] if (i + j) % 2 == 0 else [(a, b, d), (b, c, d)]
    elif family == "crisscross":
        centers = []
        base = (n + 1) ** 2
        for j in range(n):
            for i in range(n):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                m = base + len(centers)
                centers.append(((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2))
                tris += [(a, b, m), (b, c, m), (c, d, m), (d, a, m)]
        verts.append(np.array(centers))
    else:
        raise ValueError(f"unknown mesh family {family!r}")
    return TriMesh.from_arrays(np.vstack(verts), np.array(tris))


@dataclass(frozen=True)
class LayerDecomposition:
    layers: np.ndarray          # per-element layer index
    corner: tuple[float, float]

    @property
    def n_layers(self) -> int:
        return int(self.layers.max()) + 1


def compute_layers(mesh: TriMesh, corner_vertex: int) -> np.ndarray:
    """Layer 0 touches the corner; layer i touches layer i-1 (vertex sharing)."""
    nk = mesh.n_elements
    layers = -np.ones(nk, dtype=np.int64)
    touching = np.any(mesh.elements == corner_vertex, axis=1)
    layers[touching] = 0
    level = 0
    while np.any(layers < 0):
        front = np.unique(mesh.elements[layers == level])
        nxt = (layers < 0) & np.any(np.isin(mesh.elements, front), axis=1)
        if not nxt.any():
            raise MeshError("mesh is not connected")
        level += 1
        layers[nxt] = level
    return layers


def _lshape_coarse():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [-1.0, 1.0],
                      [-1.0, 0.0], [-1.0, -1.0], [0.0, -1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 7]])
    return verts, tris


def _refine_corner(verts: np.ndarray, tris: np.ndarray, corner: int, sigma: float):
    verts = list(map(tuple, verts))
    new_pts: dict[int, int] = {}

    def scaled(v: int) -> int:
        if v not in new_pts:
            c = np.array(verts[corner])
            verts.append(tuple(c + sigma * (np.array(verts[v]) - c)))
            new_pts[v] = len(verts) - 1
        return new_pts[v]

    out = []
    for t in tris:
        if corner not in t:
            out.append(tuple(t))
            continue
        k = int(np.flatnonzero(t == corner)[0])
        o, a, b = t[k], t[(k + 1) % 3], t[(k + 2) % 3]
        a2, b2 = scaled(a), scaled(b)
        out.append((o, a2, b2))
        P = lambda i: np.array(verts[i])  # noqa: E731
        d1 = np.linalg.norm(P(a2) - P(b))
        d2 = np.linalg.norm(P(a) - P(b2))
        if d1 < d2 - 1e-12:
            out += [(a2, a, b), (a2, b, b2)]
        else:
            out += [(a2, a, b2), (a, b, b2)]
    return np.array(verts), np.array(out, dtype=np.int64)


def lshape_graded(levels: int, grading: float = 0.5) -> tuple[TriMesh, LayerDecomposition]:
    """Mesh of (-1,1)^2 minus [0,1)x(-1,0] graded towards the re-entrant corner.

    T_0 has six triangles (each quadrant square cut by its diagonal through
    the corner). T_{n+1} refines only the elements touching the corner: a
    triangle (O, a, b) is replaced by (O, a', b') with a' = O + s(a - O),
    b' = O + s(b - O), and the trapezoid a', a, b, b' cut along its shorter
    diagonal.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if not 0.0 < grading < 1.0:
        raise ValueError("grading must lie in (0, 1)")
    verts, tris = _lshape_coarse()
    for _ in range(levels):
        verts, tris = _refine_corner(verts, tris, 0, grading)
    mesh = TriMesh.from_arrays(verts, tris)
    layers = compute_layers(mesh, 0)
    return mesh, LayerDecomposition(layers, (0.0, 0.0))


def assign_degrees(layers: LayerDecomposition | np.ndarray) -> np.ndarray:
    """Per-element degree p_K = layer + 1."""
    lay = layers.layers if isinstance(layers, LayerDecomposition) else np.asarray(layers)
    return lay.astype(np.int64) + 1


def edge_degrees(mesh: TriMesh, element_degrees) -> np.ndarray:
    """p_F = max of the incident element degrees (the element degree on the boundary)."""
    pk = np.asarray(element_degrees, dtype=np.int64)
    ee = mesh.edge_elements
    p1 = pk[ee[:, 0]]
    p2 = np.where(ee[:, 1] >= 0, pk[np.maximum(ee[:, 1], 0)], 0)
    return np.maximum(p1, p2)
