import numpy as np
import pytest

from crlab.linalg import null_space
from crlab.polytools import dim_p, triangle_rule
from crlab.refelem import (Shape, dof_matrix, edge_points, eval_nc_edge_bubble, eval_nc_element_bubble,
                           modal_combination, modal_shapes, tabulate)

CENTROID = np.array([[1 / 3, 1 / 3, 1 / 3]])


@pytest.mark.parametrize("p", range(0, 7))
def test_modal_basis_size(p):
    assert len(modal_shapes(p)) == dim_p(p)


@pytest.mark.parametrize("q", [1, 3, 5])
def test_edge_bubble_is_one_on_its_edge(q):
    t = np.linspace(-1, 1, 9)
    for F in range(3):
        np.testing.assert_allclose(eval_nc_edge_bubble(F, q, edge_points(F, t)), 1.0, atol=1e-14)


@pytest.mark.parametrize("q", [1, 3, 5])
def test_edge_bubble_orthogonal_on_other_edges(q):
    # L_q(1 - 2 l_F) restricted to another edge is L_q(+-t), odd, orthogonal to P_{q-1}
    from crlab.polytools import gauss_legendre, legendre_table
    g = gauss_legendre(q + 2)
    L = legendre_table(q - 1, g.nodes)
    for F in range(3):
        for G in range(3):
            if G != F:
                v = eval_nc_edge_bubble(F, q, edge_points(G, g.nodes))
                np.testing.assert_allclose(L @ (g.weights * v), 0.0, atol=1e-13)


def test_element_bubble_centroid_value():
    # (-1 + 3 L_2(1/3)) / 2 with L_2(1/3) = -1/3
    assert eval_nc_element_bubble(2, CENTROID)[0] == pytest.approx(-1.0)


def test_bubble_parity_guards():
    with pytest.raises(ValueError):
        eval_nc_edge_bubble(0, 2, CENTROID)
    with pytest.raises(ValueError):
        eval_nc_element_bubble(3, CENTROID)
    with pytest.raises(ValueError):
        tabulate([Shape("ncedge", 0, 2)], CENTROID)


def test_tabulate_derivatives_by_finite_differences(rng):
    shapes = modal_shapes(5) + [Shape("ncedge", F, 3) for F in range(3)] + [Shape("ncelem", 4)]
    lam = rng.dirichlet([2, 2, 2], size=7)
    _, ders = tabulate(shapes, lam)
    h = 1e-6
    for i in range(3):
        lp, lm = lam.copy(), lam.copy()
        lp[:, i] += h
        lm[:, i] -= h
        fd = (tabulate(shapes, lp)[0] - tabulate(shapes, lm)[0]) / (2 * h)
        np.testing.assert_allclose(ders[:, i], fd, atol=1e-7)


@pytest.mark.parametrize("p,dofs", [(1, "odd-set"), (3, "odd-set"), (5, "odd-set"),
                                    (2, "new-set"), (4, "new-set"), (6, "new-set")])
def test_dof_matrix_nonsingular(p, dofs):
    A = dof_matrix(p, dofs)
    assert np.linalg.matrix_rank(A) == dim_p(p)


@pytest.mark.parametrize("p", [2, 4])
def test_dof_matrix_odd_set_kernel_dimension_one(p):
    assert null_space(dof_matrix(p, "odd-set")).shape[1] == 1


def test_p2_kernel_is_the_element_bubble():
    z = null_space(dof_matrix(2, "odd-set"))[:, 0]
    lam = triangle_rule(6).points
    v = modal_combination(2, z, lam)
    b = 2 - 3 * np.sum(lam**2, axis=1)
    scale = np.dot(v, b) / np.dot(b, b)
    np.testing.assert_allclose(v, scale * b, atol=1e-8)


def test_hats_lagrange_and_partition_of_unity(rng):
    from crlab.refelem import eval_hat
    assert eval_hat(0, [1, 0, 0]) == 1.0 and eval_hat(0, [0, 1, 0]) == 0.0
    assert eval_hat(2, CENTROID)[0] == pytest.approx(1 / 3)
    lam = rng.dirichlet([1, 1, 1], size=20)
    np.testing.assert_allclose(sum(eval_hat(i, lam) for i in range(3)), 1.0, atol=1e-14)


def test_edge_modal_vanishes_on_vertices_and_other_edges():
    from crlab.refelem import eval_edge_modal
    t = np.linspace(-1, 1, 7)
    for F in range(3):
        for j in range(1, 5):
            np.testing.assert_allclose(eval_edge_modal(F, j, np.eye(3)), 0.0, atol=1e-15)
            for G in range(3):
                if G != F:
                    np.testing.assert_allclose(eval_edge_modal(F, j, edge_points(G, t)), 0.0, atol=1e-15)


def test_edge_modal_trace_matches_1d_formula():
    import math
    from crlab.polytools import legendre_deriv
    from crlab.refelem import eval_edge_modal
    t = np.linspace(-0.9, 0.9, 10)
    for F in range(3):
        for j in range(1, 5):
            want = 8 * math.sqrt(4 * j + 2) / (j * (j + 1)) * 0.25 * (1 - t) * (1 + t) * legendre_deriv(j, t)
            np.testing.assert_allclose(eval_edge_modal(F, j, edge_points(F, t)), want, atol=1e-14)


def test_element_modal_bubble_property(rng):
    from crlab.refelem import element_shapes, eval_element_modal
    t = rng.uniform(-1, 1, 30)
    for F in range(3):
        for r1, r2 in [(0, 0), (1, 2), (3, 0)]:
            np.testing.assert_allclose(eval_element_modal(r1, r2, edge_points(F, t)), 0.0, atol=1e-15)
    assert eval_element_modal(0, 0, CENTROID)[0] == pytest.approx(1 / 27)
    rule = triangle_rule(12)
    vals, _ = tabulate(tuple(element_shapes(5)), rule.points)
    G = (vals * rule.unit_weights) @ vals.T
    assert np.linalg.matrix_rank(G) == len(element_shapes(5))


@pytest.mark.parametrize("q", [1, 3, 5])
def test_edge_bubble_opposite_vertex_and_odd_traces(q):
    for F in range(3):
        assert eval_nc_edge_bubble(F, q, np.eye(3)[F]) == pytest.approx(-1.0)
        for G in range(3):
            if G != F:
                ends = eval_nc_edge_bubble(F, q, edge_points(G, np.array([-1.0, 1.0])))
                assert ends[0] == pytest.approx(-ends[1])


@pytest.mark.parametrize("p", [2, 4, 6])
def test_element_bubble_traces_orthogonal_to_lower_degrees(p):
    from crlab.polytools import gauss_legendre, legendre_table
    g = gauss_legendre(p + 2)
    L = legendre_table(p - 1, g.nodes)
    for F in range(3):
        v = eval_nc_element_bubble(p, edge_points(F, g.nodes))
        np.testing.assert_allclose(L @ (g.weights * v), 0.0, atol=1e-13)


def test_fortin_soulie_function_has_vanishing_odd_set_dofs():
    # express 2 - 3 sum l_i^2 in the modal P_2 basis and apply the odd-set DOFs
    rule = triangle_rule(6)
    lam = rule.points
    vals, _ = tabulate(tuple(modal_shapes(2)), lam)
    target = 2 - 3 * np.sum(lam**2, axis=1)
    c, *_ = np.linalg.lstsq(vals.T, target, rcond=None)
    np.testing.assert_allclose(vals.T @ c, target, atol=1e-13)
    np.testing.assert_allclose(dof_matrix(2, "odd-set") @ c, 0.0, atol=1e-13)


def test_dof_matrix_p2_odd_rank_five():
    from crlab.linalg import dense_rank
    assert dense_rank(dof_matrix(2, "odd-set")) == 5


def test_unknown_dof_set():
    with pytest.raises(ValueError):
        dof_matrix(2, "bogus")
