import itertools

import numpy as np
import pytest

from crlab.mesh import (MESH_FAMILIES, MeshError, TriMesh, assign_degrees, compute_layers, edge_degrees,
                        load_mesh, lshape_graded, save_mesh, uniform_refine, unit_square)


def brute_force_edges(elements):
    edges = set()
    for tri in elements:
        for a, b in itertools.combinations(tri, 2):
            edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def counts(mesh):
    return mesh.n_vertices, mesh.n_elements, mesh.n_edges, mesh.n_interior_edges


def test_single_triangle(tmp_path):
    path = tmp_path / "tri.msh"
    path.write_text("# reference triangle\n3 1\n-1 0\n1 0\n0 1.7320508075688772\n0 1 2\n")
    mesh = load_mesh(path)
    assert mesh.n_edges == 3 and mesh.n_interior_edges == 0
    assert mesh.boundary.all()


def test_one_diagonal_square():
    mesh = unit_square(1, "diagonal")
    assert counts(mesh) == (4, 2, 5, 1)
    assert all(mesh.euler_check())


def test_crisscross_four_elements():
    mesh = unit_square(1, "crisscross")
    assert counts(mesh)[1:] == (4, 8, 4)


@pytest.mark.parametrize("family", MESH_FAMILIES)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_topology_matches_brute_force(family, n):
    mesh = unit_square(n, family)
    assert [tuple(e) for e in mesh.edges.tolist()] == brute_force_edges(mesh.elements.tolist())
    assert all(mesh.euler_check())
    assert mesh.areas.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("family", MESH_FAMILIES)
def test_normals(family):
    mesh = uniform_refine(unit_square(2, family))
    np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0, atol=1e-14)
    for e in np.flatnonzero(~mesh.boundary):
        s = 0.0
        for k in mesh.edge_elements[e]:
            i = int(np.flatnonzero(mesh.element_edges[k] == e)[0])
            s += mesh.element_normals[k, i] @ mesh.normals[e]
        assert abs(s) <= 1e-14
    for e in np.flatnonzero(mesh.boundary):
        k = mesh.edge_elements[e, 0] if mesh.edge_elements[e, 0] >= 0 else mesh.edge_elements[e, 1]
        i = int(np.flatnonzero(mesh.element_edges[k] == e)[0])
        np.testing.assert_allclose(mesh.element_normals[k, i], mesh.normals[e], atol=1e-14)


def test_refinement_cascade():
    mesh = unit_square(1, "diagonal")
    rho = mesh.shape_regularity()
    for _ in range(3):
        fine = uniform_refine(mesh)
        assert fine.n_elements == 4 * mesh.n_elements
        assert fine.h == pytest.approx(mesh.h / 2, rel=1e-14)
        assert fine.shape_regularity() == pytest.approx(rho, rel=1e-12)
        assert all(fine.euler_check())
        assert [tuple(e) for e in fine.edges.tolist()] == brute_force_edges(fine.elements.tolist())
        mesh = fine


def test_save_load_roundtrip(tmp_path):
    mesh = unit_square(2, "unionjack")
    path = tmp_path / "m.msh"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    np.testing.assert_allclose(back.vertices, mesh.vertices)


@pytest.mark.parametrize("text", ["3 1\n0 0\n1 0\n0 1\n0 1\n", "2 1\n0 0\n1 0\n0 1 2\n", "x y\n"])
def test_load_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.msh"
    path.write_text(text)
    with pytest.raises(MeshError):
        load_mesh(path)


def test_rejects_inverted_and_nonconforming():
    with pytest.raises(MeshError):
        TriMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    verts = [[0, 0], [1, 0], [0, 1], [1, 1], [0.2, -1]]
    with pytest.raises(MeshError):
        TriMesh.from_arrays(verts, [[0, 1, 2], [1, 3, 2], [1, 0, 4], [0, 1, 3]])


def test_lshape_coarse_and_cascade():
    mesh, layers = lshape_graded(0)
    assert mesh.n_elements == 6
    assert mesh.areas.sum() == pytest.approx(3.0)
    assert np.all(assign_degrees(layers) == 1)
    for n in range(1, 5):
        mesh, layers = lshape_graded(n)
        assert mesh.n_elements == 6 + 12 * n
        assert all(mesh.euler_check())
        assert mesh.areas.sum() == pytest.approx(3.0)
        assert layers.n_layers == n + 1
        hmin = mesh.diameters.min()
        assert 0.5 * 0.5**n <= hmin / lshape_graded(0)[0].diameters.min() <= 2 * 0.5**n


def test_layers_recursive_definition():
    mesh, layers = lshape_graded(3)
    corner = int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))
    lay = layers.layers
    np.testing.assert_array_equal(lay, compute_layers(mesh, corner))
    touches = np.any(mesh.elements == corner, axis=1)
    np.testing.assert_array_equal(lay == 0, touches)
    for k in range(mesh.n_elements):
        if lay[k] > 0:
            nbrs = [j for j in range(mesh.n_elements) if np.intersect1d(mesh.elements[j], mesh.elements[k]).size]
            assert min(lay[j] for j in nbrs) == lay[k] - 1


def test_degrees_and_edge_degrees():
    mesh, layers = lshape_graded(2)
    pk = assign_degrees(layers)
    assert set(pk.tolist()) == {1, 2, 3}
    pf = edge_degrees(mesh, pk)
    for e in range(mesh.n_edges):
        ks = [k for k in mesh.edge_elements[e] if k >= 0]
        assert pf[e] == max(pk[k] for k in ks)


def test_unknown_family():
    with pytest.raises(ValueError):
        unit_square(2, "hexagonal")
