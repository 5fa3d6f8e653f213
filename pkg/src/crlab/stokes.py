"""CR-type Stokes discretization with multipliers for the boundary and the pressure mean.

Unknowns are ordered (u, b, s, lambda): interleaved vector velocity (x and y
component per scalar DOF), boundary multipliers (interleaved likewise),
discontinuous P_{p-1} pressure and the scalar mean multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .analysis import error_parts, eoc
from .assembly import FormSpec, assemble_bc_blocks, assemble_load, assemble_stiffness, default_form
from .femspace import FeSpace, build_space
from .linalg import SparseSystem, assemble_blocks, solve
from .mesh import TriMesh, uniform_refine, unit_square
from .polytools import gauss_legendre, triangle_rule
from .refelem import edge_points

PI = math.pi


@dataclass(frozen=True)
class StokesCase:
    """Exact velocity (m, 2), its Jacobian (m, 2, 2), pressure, source and divergence."""
    name: str
    u: Callable
    jac: Callable
    s: Callable
    f: Callable
    div: Callable


def _ab(x):
    return PI * (x[..., 0] - 0.5), PI * (x[..., 1] - 0.5)


def _u4(x):
    a, b = _ab(x)
    return np.stack([-np.cos(a) ** 2 * np.cos(b) ** 2 * np.sin(b) ** 2,
                     np.cos(a) ** 2 * np.cos(b) ** 2 * np.sin(a) ** 2], axis=-1)


def _u4_jac(x):
    a, b = _ab(x)
    d1x = PI * np.sin(2 * a) * np.sin(2 * b) ** 2 / 4
    d1y = -np.cos(a) ** 2 * (PI / 2) * np.sin(4 * b)
    d2x = np.cos(b) ** 2 * (PI / 2) * np.sin(4 * a)
    d2y = -PI * np.sin(2 * b) * np.sin(2 * a) ** 2 / 4
    return np.stack([np.stack([d1x, d1y], axis=-1), np.stack([d2x, d2y], axis=-1)], axis=-2)


def _u4_lap(x):
    a, b = _ab(x)
    l1 = -(-2 * PI**2 * np.cos(2 * a) * np.sin(2 * b) ** 2 / 4 + 2 * PI**2 * np.cos(a) ** 2 * np.cos(4 * b))
    l2 = -2 * PI**2 * np.cos(2 * b) * np.sin(2 * a) ** 2 / 4 + 2 * PI**2 * np.cos(b) ** 2 * np.cos(4 * a)
    return np.stack([l1, l2], axis=-1)


def _s4(x):
    return x[..., 0] + x[..., 1] - 1.0


def _f4(x):
    # the weak form (grad u, grad v) + (div v, s) = (f, v) means f = -Lap u - grad s
    return -_u4_lap(x) - np.ones(x.shape)


def _div4(x):
    a, b = _ab(x)
    return PI / 4 * np.sin(2 * a) * np.sin(2 * b) * (np.sin(2 * b) - np.sin(2 * a))


U4 = StokesCase("u4-stokes", _u4, _u4_jac, _s4, _f4, _div4)


def _zero_case():
    z2 = lambda x: np.zeros(x.shape[:-1] + (2,))  # noqa: E731
    z1 = lambda x: np.zeros(x.shape[:-1])  # noqa: E731
    return StokesCase("zero", z2, lambda x: np.zeros(x.shape[:-1] + (2, 2)), z1, z2, z1)


ZERO = _zero_case()


def interleave(M: sp.spmatrix) -> sp.csr_matrix:
    """kron(M, I_2): scalar operator acting on both velocity components."""
    return sp.kron(M, sp.identity(2), format="csr")


def velocity_variant(p: int) -> str:
    return "new-even" if p % 2 == 0 else "standard-odd"


@dataclass
class StokesSystem:
    space_v: FeSpace
    space_q: FeSpace
    A: sp.csr_matrix
    C: sp.csr_matrix
    B: sp.csr_matrix
    D: sp.csr_matrix
    f: np.ndarray
    rhs_c: np.ndarray
    rhs_q: np.ndarray
    form: FormSpec

    def system(self) -> SparseSystem:
        blocks = [[self.A, self.C.T, self.B.T, None],
                  [self.C, None, None, None],
                  [self.B, None, None, self.D.T],
                  [None, None, self.D, sp.csr_matrix((1, 1))]]
        return assemble_blocks(blocks, [self.f, self.rhs_c, self.rhs_q, np.zeros(1)],
                               ["velocity", "boundary", "pressure", "mean"])

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return self.A.shape[0], self.C.shape[0], self.B.shape[0], 1


def divergence_block(space_v: FeSpace, space_q: FeSpace, exactness: int | None = None) -> sp.csr_matrix:
    """B[q, 2i + c] = (psi_q, d_c phi_i)_K."""
    q = exactness or (2 * space_v.max_degree + 2)
    rule = triangle_rule(q)
    geo = space_v.geometry
    qbasis = space_q.layouts[0]
    psi, _ = qbasis.evaluate(rule.points)
    rows, cols, vals = [], [], []
    for basis, ks, dofs in space_v.elements_by_layout():
        _, ders = basis.evaluate(rule.points)
        R = np.einsum("aq,bjq,q->jab", psi, ders, rule.unit_weights)   # (3, nq, nv)
        loc = np.einsum("kjc,jab,k->kabc", geo.grads[ks], R, geo.areas[ks])
        nq = loc.shape[1]
        qd = space_q.local_dofs[ks, :nq]
        vd = 2 * dofs[:, :, None] + np.arange(2)[None, None, :]
        vd = np.where(dofs[:, :, None] >= 0, vd, -1)
        rows.append(np.broadcast_to(qd[:, :, None, None], loc.shape).ravel())
        cols.append(np.broadcast_to(vd[:, None, :, :], loc.shape).ravel())
        vals.append(loc.ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    keep = (r >= 0) & (c >= 0)
    return sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(space_q.ndof, 2 * space_v.ndof)).tocsr()


def mean_row(space_q: FeSpace) -> sp.csr_matrix:
    return sp.csr_matrix(assemble_load(space_q, lambda x: np.ones(x.shape[:-1]))[None, :])


def assemble_stokes(mesh: TriMesh, p: int, case: StokesCase = U4, eta: float = 20.0,
                    form: FormSpec | None = None) -> StokesSystem:
    """Vector CR space of degree p (new-even or standard-odd), P_{p-1} pressure."""
    if p < 1:
        raise ValueError("velocity degree must be >= 1")
    space_v = build_space(mesh, velocity_variant(p), p)
    space_q = build_space(mesh, "dg", p - 1)
    form = form or default_form(space_v.variant, p, eta)
    A_s = assemble_stiffness(space_v, form)
    bc = [assemble_bc_blocks(space_v, lambda x, c=c: case.u(x)[..., c], form) for c in range(2)]
    C = interleave(bc[0].C)
    rhs_c = np.column_stack([bc[0].rhs_c, bc[1].rhs_c]).ravel()
    qexact = 2 * p + 8
    fv = np.column_stack([assemble_load(space_v, lambda x, c=c: case.f(x)[..., c], qexact) + bc[c].rhs_v
                          for c in range(2)]).ravel()
    B = divergence_block(space_v, space_q)
    rhs_q = assemble_load(space_q, case.div, qexact)
    return StokesSystem(space_v, space_q, interleave(A_s), C, B, mean_row(space_q), fv, rhs_c, rhs_q, form)


@dataclass
class StokesSolution:
    system: StokesSystem
    velocity: np.ndarray      # (ndof_v, 2)
    pressure: np.ndarray
    mean_multiplier: float


def solve_stokes(st: StokesSystem) -> StokesSolution:
    x = solve(st.system())
    nu, nb, nq, _ = st.sizes
    u = x[:nu].reshape(-1, 2)
    s = x[nu + nb:nu + nb + nq]
    return StokesSolution(st, u, s, float(x[-1]))


def pressure_mean(sol: StokesSolution) -> float:
    return float((mean_row(sol.system.space_q) @ sol.pressure)[0])


def divergence_projection_errors(sol: StokesSolution, div_exact=None, exactness: int | None = None) -> np.ndarray:
    """Per element ||Pi_{p-1}(div u_h - div u)||_{0,K}."""
    st = sol.system
    space_v, space_q = st.space_v, st.space_q
    q = exactness or (2 * space_v.max_degree + 8)
    rule = triangle_rule(q)
    nk = space_v.mesh.n_elements
    ks = np.arange(nk)
    gx = space_v.gradient(sol.velocity[:, 0], ks, rule.points)
    gy = space_v.gradient(sol.velocity[:, 1], ks, rule.points)
    div_h = gx[..., 0] + gy[..., 1]
    x = space_v.physical_points(ks, rule.points)
    err = div_h - (div_exact(x) if div_exact is not None else 0.0)
    basis = space_q.layouts[0]
    psi, _ = basis.evaluate(rule.points)
    Mref = (psi * rule.unit_weights) @ psi.T
    b = (err * rule.unit_weights) @ psi.T               # (nk, nq) divided by |K|
    coef = np.linalg.solve(Mref, b.T).T
    return np.sqrt(np.maximum(space_v.geometry.areas * np.einsum("ka,ka->k", coef, b), 0.0))


def element_flux(space_v: FeSpace, velocity, element: int, n_points: int = 12) -> float:
    """Boundary flux of the discrete velocity through the boundary of one element."""
    g = gauss_legendre(n_points)
    mesh = space_v.mesh
    total = 0.0
    for F in range(3):
        e = space_v.geometry.edges[element, F]
        orig = space_v.geometry.perm[element, F]
        n = mesh.element_normals[element, orig]
        lam = edge_points(F, g.nodes)
        ux = space_v.evaluate(velocity[:, 0], [element], lam)[0]
        uy = space_v.evaluate(velocity[:, 1], [element], lam)[0]
        total += 0.5 * mesh.edge_lengths[e] * np.dot(g.weights, ux * n[0] + uy * n[1])
    return float(total)


def stokes_errors(sol: StokesSolution, case: StokesCase = U4) -> tuple[float, float]:
    """Relative velocity DG-norm error and relative pressure L2 error.

    The pressure error is absolute when the exact pressure vanishes.
    """
    st = sol.system
    space_v, space_q = st.space_v, st.space_q
    num = den = 0.0
    for c in range(2):
        parts = error_parts(space_v, sol.velocity[:, c], lambda x, c=c: case.u(x)[..., c],
                            lambda x, c=c: case.jac(x)[..., c, :], exactness=2 * space_v.max_degree + 8)
        num += parts.dg ** 2
        zero = np.zeros(space_v.ndof)
        ref = error_parts(space_v, zero, lambda x, c=c: case.u(x)[..., c],
                          lambda x, c=c: case.jac(x)[..., c, :], exactness=24)
        den += ref.broken_h1 ** 2
    pp = error_parts(space_q, sol.pressure, case.s, lambda x: np.zeros(x.shape), exactness=2 * space_q.max_degree + 8)
    pref = error_parts(space_q, np.zeros(space_q.ndof), case.s, lambda x: np.zeros(x.shape), exactness=24)
    return math.sqrt(num / den), (pp.l2 / pref.l2 if pref.l2 > 0 else pp.l2)


def stokes_study(p: int, levels: int = 4, eta: float = 20.0, case: StokesCase = U4,
                 mesh: TriMesh | None = None) -> list[dict]:
    """h-study on the union-jack unit-square family; one row per mesh.

    The diagonal family is avoided: its corner triangles with two boundary
    edges carry a spurious P_1 pressure mode for p = 2.
    """
    mesh = mesh or unit_square(2, "unionjack")
    rows = []
    for level in range(levels):
        if level:
            mesh = uniform_refine(mesh)
        st = assemble_stokes(mesh, p, case, eta)
        sol = solve_stokes(st)
        ev, ep = stokes_errors(sol, case)
        divmax = float(divergence_projection_errors(sol, case.div).max())
        rows.append({"level": level, "h": mesh.h, "ndof": st.system().size, "e_velocity": ev,
                     "e_pressure": ep, "div_proj_max": divmax, "pressure_mean": pressure_mean(sol),
                     "eta": float(st.form.eta), "p": p})
    for key, ekey in (("e_velocity", "eoc_velocity"), ("e_pressure", "eoc_pressure")):
        for r, v in zip(rows, eoc([r[key] for r in rows])):
            r[ekey] = v
    return rows
