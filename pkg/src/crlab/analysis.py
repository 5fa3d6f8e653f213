"""Manufactured solutions, error measures and convergence studies."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .assembly import (FORM_KINDS, CoercivityError, FormSpec, assemble_poisson, assemble_stiffness,
                       check_coercivity, default_form)
from .femspace import VARIANTS, FeSpace, build_space, expected_dimension, global_evaluation_matrix
from .linalg import SingularSystemError, solve
from .mesh import MESH_FAMILIES, TriMesh, assign_degrees, lshape_graded, uniform_refine, unit_square
from .polytools import gauss_legendre, graded_triangle_rule, triangle_rule
from .refelem import edge_points

log = logging.getLogger(__name__)

PI = math.pi


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution u with gradient, source f = -Lap u and Dirichlet trace."""
    name: str
    u: Callable
    grad: Callable
    f: Callable
    domain: str = "square"
    singular_point: tuple[float, float] | None = None

    def g(self, x):
        return self.u(x)


def _u1(x):
    return x[..., 0] + x[..., 1]


def _g1(x):
    return np.ones(x.shape)


def _u2(x):
    return np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1])


def _g2(x):
    sx, sy = np.sin(PI * x[..., 0]), np.sin(PI * x[..., 1])
    cx, cy = np.cos(PI * x[..., 0]), np.cos(PI * x[..., 1])
    return PI * np.stack([cx * sy, sx * cy], axis=-1)


def _f2(x):
    return 2.0 * PI**2 * _u2(x)


def _polar(x):
    r = np.hypot(x[..., 0], x[..., 1])
    th = np.arctan2(x[..., 1], x[..., 0])
    th = np.where(th < 0.0, th + 2.0 * PI, th)
    return r, th


def _u3(x):
    r, th = _polar(x)
    return r ** (2.0 / 3.0) * np.sin(2.0 * th / 3.0)


def _g3(x):
    r, th = _polar(x)
    with np.errstate(divide="ignore"):
        s = (2.0 / 3.0) * np.where(r > 0, r, np.inf) ** (-1.0 / 3.0)
    return np.stack([-s * np.sin(th / 3.0), s * np.cos(th / 3.0)], axis=-1)


def _zero(x):
    return np.zeros(x.shape[:-1])


CASES = {
    "u1": ManufacturedCase("u1", _u1, _g1, _zero),
    "u2": ManufacturedCase("u2", _u2, _g2, _f2),
    "u3": ManufacturedCase("u3", _u3, _g3, _zero, domain="lshape", singular_point=(0.0, 0.0)),
}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {', '.join(CASES)}") from None


# ---------------------------------------------------------------------------
# quadrature helpers


def _singular_vertex(space: FeSpace, point) -> np.ndarray:
    """Sorted local index of the vertex at ``point`` per element, -1 if none."""
    out = -np.ones(space.mesh.n_elements, dtype=np.int64)
    if point is None:
        return out
    d = np.linalg.norm(space.geometry.coords - np.asarray(point), axis=2)
    hit = d < 1e-13
    rows = np.flatnonzero(hit.any(axis=1))
    out[rows] = np.argmax(hit[rows], axis=1)
    return out


def element_rules(space: FeSpace, exactness: int, point=None):
    """Yield (element indices, rule) covering all elements; graded near ``point``."""
    sv = _singular_vertex(space, point)
    plain = np.flatnonzero(sv < 0)
    if plain.size:
        yield plain, triangle_rule(exactness)
    for v in range(3):
        ks = np.flatnonzero(sv == v)
        if ks.size:
            yield ks, graded_triangle_rule(exactness, vertex=v)


def graded_line_rule(n: int, levels: int = 30, sigma: float = 0.5):
    """Composite GL rule on [-1, 1] graded towards t = -1."""
    g = gauss_legendre(n)
    nodes, weights = [], []
    a, b = -1.0 + 2.0 * sigma, 1.0
    for _ in range(levels):
        nodes.append(0.5 * (b - a) * g.nodes + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * g.weights)
        b = a
        a = -1.0 + sigma * (a + 1.0)
    nodes.append(0.5 * (b + 1.0) * g.nodes + 0.5 * (b - 1.0))
    weights.append(0.5 * (b + 1.0) * g.weights)
    return np.concatenate(nodes), np.concatenate(weights)


def exact_norms(space: FeSpace, case: ManufacturedCase, exactness: int = 24) -> tuple[float, float]:
    """(|u|_1, ||u||_0) by high-order element quadrature."""
    h1 = l2 = 0.0
    for ks, rule in element_rules(space, exactness, case.singular_point):
        x = space.physical_points(ks, rule.points)
        w = space.geometry.areas[ks, None] * rule.unit_weights[None]
        gu = case.grad(x)
        h1 += float(np.sum(w * np.sum(gu * gu, axis=-1)))
        l2 += float(np.sum(w * case.u(x) ** 2))
    return math.sqrt(h1), math.sqrt(l2)


def edge_traces(space: FeSpace, coeffs, edges, t):
    """Traces from both sides at edge coordinates t: (ne, 2, m) values and (ne, 2) signs."""
    mesh = space.mesh
    geo = space.geometry
    edges = np.asarray(edges, dtype=np.int64)
    vals = np.zeros((len(edges), 2, len(t)))
    signs = np.zeros((len(edges), 2))
    for side in (0, 1):
        ks = mesh.edge_elements[edges, side]
        idx = np.flatnonzero(ks >= 0)
        k = ks[idx]
        Fs = np.argmax(geo.edges[k] == edges[idx, None], axis=1)
        orig = geo.perm[k, Fs]
        signs[idx, side] = np.sign(np.einsum("kd,kd->k", mesh.element_normals[k, orig], mesh.normals[edges[idx]]))
        for F in range(3):
            sel = np.flatnonzero(Fs == F)
            if sel.size:
                vals[idx[sel], side] = space.evaluate(coeffs, k[sel], edge_points(F, t))
    return vals, signs


def _edge_points_phys(mesh: TriMesh, edges, t):
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return 0.5 * (1 - t)[None, :, None] * a[:, None] + 0.5 * (1 + t)[None, :, None] * b[:, None]


@dataclass(frozen=True)
class ErrorParts:
    broken_h1: float
    jump: float
    l2: float
    norm_h1: float
    norm_l2: float

    @property
    def dg(self) -> float:
        return math.sqrt(self.broken_h1**2 + self.jump**2)


def error_parts(space: FeSpace, coeffs, u, grad, singular_point=None, exactness: int | None = None,
                norms: tuple[float, float] | None = None) -> ErrorParts:
    """Absolute broken-H1, jump and L2 parts of u - u_h (full jump in the DG norm)."""
    p = space.max_degree
    q = 2 * p + 6 if exactness is None else int(exactness)
    e_h1 = e_l2 = 0.0
    for ks, rule in element_rules(space, q, singular_point):
        x = space.physical_points(ks, rule.points)
        w = space.geometry.areas[ks, None] * rule.unit_weights[None]
        uh = space.evaluate(coeffs, ks, rule.points)
        gh = space.gradient(coeffs, ks, rule.points)
        e_l2 += float(np.sum(w * (u(x) - uh) ** 2))
        e_h1 += float(np.sum(w * np.sum((grad(x) - gh) ** 2, axis=-1)))

    mesh = space.mesh
    e_jump = 0.0
    gl = gauss_legendre(p + 6)
    sing = None if singular_point is None else np.asarray(singular_point)
    edges = np.arange(mesh.n_edges)
    special = np.zeros(mesh.n_edges, dtype=bool)
    if sing is not None:
        ends = mesh.vertices[mesh.edges]
        special = np.linalg.norm(ends - sing, axis=2).min(axis=1) < 1e-13
    regular = edges[~special]
    if regular.size:
        e_jump += _jump_sq(space, coeffs, u, regular, gl.nodes, gl.weights)
    if special.any():
        # grade towards the singular end; flip t when it is the high vertex
        tg, wg = graded_line_rule(p + 6)
        for e in edges[special]:
            at_low = np.linalg.norm(mesh.vertices[mesh.edges[e, 0]] - sing) < 1e-13
            e_jump += _jump_sq(space, coeffs, u, np.array([e]), tg if at_low else -tg, wg)
    if norms is None:
        norms = (float("nan"), float("nan"))
    return ErrorParts(math.sqrt(e_h1), math.sqrt(e_jump), math.sqrt(e_l2), norms[0], norms[1])


def _jump_sq(space, coeffs, u, edges, t, w) -> float:
    mesh = space.mesh
    vals, signs = edge_traces(space, coeffs, edges, t)
    bnd = mesh.boundary[edges]
    jump_h = signs[:, 0, None] * vals[:, 0] + signs[:, 1, None] * vals[:, 1]
    x = _edge_points_phys(mesh, edges, t)
    ue = np.where(bnd[:, None], u(x), 0.0)
    # h_F^-1 * ||.||^2_F = h^-1 * (h/2) sum w (.)^2
    return float(np.sum(0.5 * (w[None] * (ue - jump_h) ** 2).sum(axis=1)))


def error_norms(space: FeSpace, coeffs, case: ManufacturedCase, exactness: int | None = None) -> tuple[float, float]:
    """Relative (DG-norm, L2) errors with the full jump in the DG norm."""
    n1, n0 = exact_norms(space, case)
    parts = error_parts(space, coeffs, case.u, case.grad, case.singular_point, exactness)
    return parts.dg / n1, parts.l2 / n0


# ---------------------------------------------------------------------------
# solving


@dataclass
class PoissonSolution:
    space: FeSpace
    form: FormSpec
    coeffs: np.ndarray
    ndof: int
    coercive: bool | None = None


def solve_poisson(space: FeSpace, form: FormSpec, case: ManufacturedCase, certify: bool = False) -> PoissonSolution:
    prob = assemble_poisson(space, form, case.f, case.g)
    coercive = None
    if certify:
        coercive = check_coercivity(prob)
        if coercive is False:
            raise CoercivityError(f"eta={form.eta} is below the coercivity threshold for {space.variant}")
    x = solve(prob.system())
    return PoissonSolution(space, form, x[:space.ndof], space.ndof, coercive)


def mesh_for_case(case: ManufacturedCase, family: str = "diagonal", n: int = 2) -> TriMesh:
    if case.domain == "square":
        return unit_square(n, family)
    return lshape_graded(0)[0]


def variant_for_degree(p: int) -> str:
    """CR variant used for a degree: new-even for even p, standard-odd for odd p."""
    return "new-even" if p % 2 == 0 else "standard-odd"


def eoc(errors) -> list[float]:
    e = np.asarray(errors, dtype=float)
    out = [float("nan")]
    for a, b in zip(e[:-1], e[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else float("nan"))
    return out


# ---------------------------------------------------------------------------
# studies


@dataclass
class StudyConfig:
    study: str = "h"
    case: str = "u2"
    variant: str = "new-even"
    p: int = 2
    eta: float | None = None
    form: str | None = None
    levels: int = 4
    mesh_family: str = "diagonal"
    mesh_n: int = 2
    p_values: tuple[int, ...] = ()
    eta_values: tuple[float, ...] = (0.5, 1, 2, 4, 8, 16, 32, 64)
    grading: float = 0.5
    output: str | None = None
    threads: int | None = None

    def resolved_eta(self, p: int | None = None) -> float:
        p = self.p if p is None else p
        if self.eta is not None:
            return float(self.eta)
        return 5.0 * p * p if self.variant == "dg" else 20.0


@dataclass
class StudyResult:
    config: StudyConfig
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in self.columns})
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def table(self) -> str:
        widths = {c: max(len(c), *(len(_fmt(r.get(c, ""))) for r in self.rows)) if self.rows else len(c)
                  for c in self.columns}
        lines = ["  ".join(c.rjust(widths[c]) for c in self.columns)]
        for r in self.rows:
            lines.append("  ".join(_fmt(r.get(c, "")).rjust(widths[c]) for c in self.columns))
        return "\n".join(lines + [f"# {n}" for n in self.notes])


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6e}"
    return str(v)


BASE_COLUMNS = ["level", "h", "ndof", "e_dg", "e_l2", "eoc_dg", "eoc_l2", "eta", "variant", "p_spec", "form"]


def _workers(config: StudyConfig) -> int:
    if config.threads is not None:
        return max(1, int(config.threads))
    env = os.environ.get("CRLAB_THREADS")
    return max(1, int(env)) if env else 1


def _map_rows(config: StudyConfig, fn, items) -> list:
    n = _workers(config)
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _resolve_form(config: StudyConfig, variant: str, p: int, eta: float) -> FormSpec:
    if config.form is None:
        return default_form(variant, p, eta)
    if config.form == "plain":
        return FormSpec("plain", 0.0)
    return FormSpec(config.form, eta)


def _h_meshes(config: StudyConfig, case: ManufacturedCase) -> list[TriMesh]:
    mesh = mesh_for_case(case, config.mesh_family, config.mesh_n)
    out = [mesh]
    for _ in range(config.levels - 1):
        out.append(uniform_refine(out[-1]))
    return out


def _finish(result: StudyResult) -> StudyResult:
    for key, ekey in (("e_dg", "eoc_dg"), ("e_l2", "eoc_l2")):
        if result.rows and key in result.rows[0]:
            for r, v in zip(result.rows, eoc([r[key] for r in result.rows])):
                r[ekey] = v
    return result


def run_h_study(config: StudyConfig) -> StudyResult:
    case = get_case(config.case)
    p = config.p
    eta = config.resolved_eta()
    meshes = _h_meshes(config, case)

    def row(item):
        level, mesh = item
        space = build_space(mesh, config.variant, p)
        form = _resolve_form(config, config.variant, p, eta)
        sol = solve_poisson(space, form, case)
        e_dg, e_l2 = error_norms(space, sol.coeffs, case)
        return {"level": level, "h": mesh.h, "ndof": space.ndof, "e_dg": e_dg, "e_l2": e_l2,
                "eta": float(form.eta), "variant": config.variant, "p_spec": str(p), "form": form.kind}

    rows = _map_rows(config, row, list(enumerate(meshes)))
    return _finish(StudyResult(config, list(BASE_COLUMNS), rows))


def run_patch_study(config: StudyConfig) -> StudyResult:
    cfg = replace(config, case="u1")
    res = run_h_study(cfg)
    res.notes.append(f"max e_dg = {max(res.column('e_dg')):.3e}")
    return res


def run_p_study(config: StudyConfig) -> StudyResult:
    case = get_case(config.case)
    mesh = mesh_for_case(case, config.mesh_family, config.mesh_n)
    ps = list(config.p_values) or list(range(1, 9))

    def row(item):
        level, p = item
        variant = config.variant if config.variant == "dg" else variant_for_degree(p)
        eta = config.resolved_eta(p) if config.eta is not None else 5.0 * p * p
        space = build_space(mesh, variant, p)
        form = _resolve_form(config, variant, p, eta)
        sol = solve_poisson(space, form, case)
        e_dg, e_l2 = error_norms(space, sol.coeffs, case)
        return {"level": level, "h": mesh.h, "ndof": space.ndof, "e_dg": e_dg, "e_l2": e_l2,
                "eta": float(form.eta), "variant": variant, "p_spec": str(p), "form": form.kind}

    rows = _map_rows(config, row, list(enumerate(ps)))
    res = StudyResult(config, list(BASE_COLUMNS), rows)
    res.notes.append(f"fixed mesh: {mesh.n_elements} elements ({config.mesh_family} {config.mesh_n}x{config.mesh_n})")
    # EOC is meaningless when h is fixed; report log-error decrements instead
    for r in rows:
        r["eoc_dg"] = r["eoc_l2"] = float("nan")
    return res


def run_hp_study(config: StudyConfig) -> StudyResult:
    case = get_case(config.case if config.case else "u3")
    eta = config.resolved_eta()

    def row(n):
        mesh, layers = lshape_graded(n, config.grading)
        pk = assign_degrees(layers)
        space = build_space(mesh, "variable", pk)
        form = _resolve_form(config, "variable", int(pk.max()), eta)
        sol = solve_poisson(space, form, case)
        e_dg, e_l2 = error_norms(space, sol.coeffs, case)
        return {"level": n, "h": mesh.h, "ndof": space.ndof, "ndof_cbrt": space.ndof ** (1.0 / 3.0),
                "e_dg": e_dg, "e_l2": e_l2, "eta": float(form.eta), "variant": "variable",
                "p_spec": "layer+1", "form": form.kind}

    rows = _map_rows(config, row, list(range(config.levels + 1)))
    cols = BASE_COLUMNS[:3] + ["ndof_cbrt"] + BASE_COLUMNS[3:]
    res = StudyResult(config, cols, rows)
    for r in rows:
        r["eoc_dg"] = r["eoc_l2"] = float("nan")
    slope, corr = exponential_fit(res.column("ndof_cbrt"), res.column("e_dg"))
    res.notes.append(f"log(e_dg) vs ndof^(1/3): slope {slope:.4f}, correlation {corr:.4f}")
    return res


def exponential_fit(x, e) -> tuple[float, float]:
    """Slope and correlation of the least-squares line of log(e) against x."""
    x = np.asarray(x, dtype=float)
    y = np.log(np.asarray(e, dtype=float))
    slope = float(np.polyfit(x, y, 1)[0])
    corr = float(np.corrcoef(x, y)[0, 1])
    return slope, corr


def eta_sweep(case_name: str = "u2", p_values=(2, 4), eta_values=(0.5, 1, 2, 4, 8, 16, 32, 64),
              mesh: TriMesh | None = None, threads: int | None = None) -> StudyResult:
    """Error against eta for stabilized CR and SIP-DG on a fixed mesh.

    Entries whose form fails the coercivity certificate are marked indefinite.
    """
    case = get_case(case_name)
    mesh = mesh or unit_square(4, "diagonal")
    cfg = StudyConfig(study="eta-sweep", case=case_name, threads=threads)
    items = [(method, p, eta) for method in ("cr", "dg") for p in p_values for eta in eta_values]

    def row(item):
        method, p, eta = item
        variant = "dg" if method == "dg" else variant_for_degree(p)
        space = build_space(mesh, variant, p)
        form = default_form(variant, p, float(eta))
        out = {"method": method, "p": p, "eta": float(eta), "ndof": space.ndof}
        try:
            sol = solve_poisson(space, form, case, certify=True)
        except (CoercivityError, SingularSystemError):
            out.update(status="indefinite", e_dg=float("nan"), e_l2=float("nan"))
            return out
        e_dg, e_l2 = error_norms(space, sol.coeffs, case)
        out.update(status="ok" if sol.coercive is not False else "indefinite", e_dg=e_dg, e_l2=e_l2)
        return out

    rows = _map_rows(cfg, row, items)
    res = StudyResult(cfg, ["method", "p", "eta", "ndof", "status", "e_dg", "e_l2"], rows)
    for method in ("cr", "dg"):
        for p in p_values:
            ratio = oscillation_ratio(res, method, p)
            res.notes.append(f"{method} p={p}: max/min error ratio over eta = {ratio:.3g}")
    return res


def oscillation_ratio(result: StudyResult, method: str, p: int) -> float:
    e = [r["e_dg"] for r in result.rows
         if r["method"] == method and r["p"] == p and r["status"] == "ok"]
    e = [v for v in e if np.isfinite(v)]
    return float(max(e) / min(e)) if e else float("nan")


# ---------------------------------------------------------------------------
# locking counterexample


def locking_mesh() -> tuple[TriMesh, np.ndarray]:
    """Four-element criss-cross unit square with degrees (1, 1, 1, 3); the left element has degree 3."""
    mesh = unit_square(1, "crisscross")
    centroids = mesh.vertices[mesh.elements].mean(axis=1)
    degrees = np.ones(mesh.n_elements, dtype=np.int64)
    degrees[np.argmin(centroids[:, 0])] = 3
    return mesh, degrees


def obvious_variable_space(mesh: TriMesh, degrees) -> FeSpace:
    """Variable space whose edge bubbles follow the element degree on each side.

    On each side of an edge the bubble has degree p~_K (p_K if odd, p_K - 1 if
    even); this is the natural but flawed extension of the uniform spaces.
    """
    pk = np.asarray(degrees, dtype=np.int64)
    ptilde = np.where(pk % 2 == 1, pk, pk - 1)
    return build_space(mesh, "variable", pk, _bubble_degrees=ptilde)


def fit_residual(space: FeSpace, u, exactness: int = 10) -> float:
    """Relative L2 residual of the least-squares fit of u in the span of the space."""
    rule = triangle_rule(exactness)
    E = global_evaluation_matrix(space, rule.points)
    ks = np.repeat(np.arange(space.mesh.n_elements), rule.size)
    x = space.physical_points(np.arange(space.mesh.n_elements), rule.points).reshape(-1, 2)
    w = np.sqrt(space.geometry.areas[ks] * np.tile(rule.unit_weights, space.mesh.n_elements))
    target = w * u(x)
    c, *_ = np.linalg.lstsq(E * w[:, None], target, rcond=None)
    return float(np.linalg.norm(E @ c * w - target) / np.linalg.norm(target))


def locking_demo() -> dict:
    mesh, pk = locking_mesh()
    fixed = build_space(mesh, "variable", pk)
    obvious = obvious_variable_space(mesh, pk)
    u1 = get_case("u1").u
    return {"degrees": pk.tolist(), "ndof_fixed": fixed.ndof, "ndof_obvious": obvious.ndof,
            "residual_fixed": fit_residual(fixed, u1), "residual_obvious": fit_residual(obvious, u1)}


def run_locking_demo(config: StudyConfig) -> StudyResult:
    d = locking_demo()
    rows = [{"space": "obvious", "ndof": d["ndof_obvious"], "residual": d["residual_obvious"]},
            {"space": "fixed", "ndof": d["ndof_fixed"], "residual": d["residual_fixed"]}]
    res = StudyResult(config, ["space", "ndof", "residual"], rows)
    res.notes.append(f"criss-cross unit square, element degrees {tuple(d['degrees'])}, target u1 = x + y")
    return res


def run_stokes_study(config: StudyConfig) -> StudyResult:
    from .stokes import stokes_study
    mesh = unit_square(config.mesh_n, config.mesh_family)
    rows = stokes_study(config.p, levels=config.levels, eta=config.resolved_eta(), mesh=mesh)
    cols = ["level", "h", "ndof", "e_velocity", "e_pressure", "eoc_velocity", "eoc_pressure",
            "div_proj_max", "pressure_mean", "eta", "p"]
    return StudyResult(config, cols, rows)


def run_eta_sweep(config: StudyConfig) -> StudyResult:
    ps = tuple(config.p_values) or (config.p,)
    mesh = unit_square(config.mesh_n, config.mesh_family)
    res = eta_sweep(config.case, ps, config.eta_values, mesh=mesh, threads=config.threads)
    res.config = config
    return res


STUDIES = {
    "h": run_h_study,
    "p": run_p_study,
    "hp": run_hp_study,
    "eta-sweep": run_eta_sweep,
    "stokes": run_stokes_study,
    "patch": run_patch_study,
    "locking-demo": run_locking_demo,
}


def validate_config(config: StudyConfig) -> list[str]:
    """Every violated constraint of a study description, checked before any assembly."""
    errs = []
    if config.study not in STUDIES:
        errs.append(f"study: unknown kind {config.study!r}; choose from {', '.join(STUDIES)}")
    if config.case not in CASES:
        errs.append(f"case: unknown case {config.case!r}; choose from {', '.join(CASES)}")
    if config.variant not in VARIANTS:
        errs.append(f"variant: unknown variant {config.variant!r}; choose from {', '.join(VARIANTS)}")
    if config.form is not None and config.form not in FORM_KINDS:
        errs.append(f"form: unknown form {config.form!r}; choose from {', '.join(FORM_KINDS)}")
    if config.mesh_family not in MESH_FAMILIES:
        errs.append(f"mesh_family: unknown family {config.mesh_family!r}; choose from {', '.join(MESH_FAMILIES)}")
    if config.levels < 1:
        errs.append(f"levels: must be >= 1, got {config.levels}")
    if config.mesh_n < 1:
        errs.append(f"mesh_n: must be >= 1, got {config.mesh_n}")
    if config.eta is not None and config.eta < 0:
        errs.append(f"eta: must be nonnegative, got {config.eta}")
    if not 0.0 < config.grading < 1.0:
        errs.append(f"grading: must lie in (0, 1), got {config.grading}")
    if config.threads is not None and config.threads < 1:
        errs.append(f"threads: must be >= 1, got {config.threads}")
    if any(p < 1 for p in config.p_values):
        errs.append("p_values: degrees must be >= 1")
    p = config.p
    kind = config.study
    if kind in ("h", "patch", "stokes") and p < 1:
        errs.append(f"p: must be >= 1, got {p}")
    if kind in ("h", "patch") and config.variant in VARIANTS:
        if config.variant == "standard-odd" and p % 2 == 0:
            errs.append(f"variant: standard-odd needs odd p, got p={p}")
        if config.variant in ("standard-even", "new-even") and p % 2 == 1:
            errs.append(f"variant: {config.variant} needs even p, got p={p}")
        if config.variant == "variable":
            errs.append("variant: variable spaces are used by the hp study only")
    if kind == "h" and config.case == "u3":
        errs.append("case: u3 lives on the L-shape; use the hp study")
    if kind == "hp" and config.case != "u3":
        errs.append(f"case: the hp study runs on u3, got {config.case!r}")
    if kind == "stokes" and p < 2:
        errs.append(f"p: the Stokes discretization needs p >= 2, got {p}")
    if kind == "stokes" and config.mesh_family == "diagonal":
        errs.append("mesh_family: the diagonal family carries a spurious pressure mode; use unionjack or crisscross")
    if kind == "eta-sweep" and config.case == "u3":
        errs.append("case: the eta sweep runs on the unit square (u1 or u2)")
    if config.form == "sip-dg" and config.variant != "dg":
        errs.append("form: sip-dg requires the dg variant")
    if config.variant == "dg" and config.form not in (None, "sip-dg"):
        errs.append("form: the dg variant requires the sip-dg form")
    if config.form == "sip-dg" and config.eta is not None and config.eta <= 0:
        errs.append("eta: sip-dg requires eta > 0")
    return errs


def validate_study(config: StudyConfig) -> list[str]:
    """Mesh conformity, dimension formulas and matrix symmetry for the first study mesh, without solving."""
    msgs = []
    case = get_case(config.case)
    if config.study == "hp":
        mesh, layers = lshape_graded(config.levels, config.grading)
        variant, degrees = "variable", assign_degrees(layers)
    elif config.study == "locking-demo":
        mesh, degrees = locking_mesh()
        variant = "variable"
    else:
        mesh = mesh_for_case(case, config.mesh_family, config.mesh_n)
        variant, degrees = config.variant, config.p
        if config.study in ("p", "eta-sweep", "stokes") and variant != "dg":
            variant = variant_for_degree(config.p)
    if not all(mesh.euler_check()):
        raise ValueError("mesh fails the Euler and edge-count identities")
    msgs.append(f"mesh: {mesh.n_elements} elements, {mesh.n_edges} edges, Euler characteristic ok")
    space = build_space(mesh, variant, degrees)
    want = expected_dimension(mesh, variant, degrees)
    if space.ndof != want:
        raise ValueError(f"space dimension {space.ndof} differs from formula {want}")
    msgs.append(f"space: {variant}, ndof {space.ndof} matches the dimension formula")
    pmax = space.max_degree
    form = _resolve_form(config, variant, pmax, config.resolved_eta(pmax))
    A = assemble_stiffness(space, form)
    asym = float(abs(A - A.T).max()) if A.nnz else 0.0
    scale = float(abs(A).max()) if A.nnz else 1.0
    if asym > 1e-12 * scale:
        raise ValueError(f"stiffness matrix asymmetric: {asym:.3e}")
    msgs.append(f"stiffness: {form.kind}, eta {form.eta:g}, symmetric (defect {asym:.1e})")
    return msgs


def run_study(config: StudyConfig) -> StudyResult:
    errs = validate_config(config)
    if errs:
        raise ValueError("invalid study configuration:\n  " + "\n  ".join(errs))
    try:
        return STUDIES[config.study](config)
    except (SingularSystemError, CoercivityError) as exc:
        raise type(exc)(f"{config.study} study on case {config.case}: {exc}") from exc
