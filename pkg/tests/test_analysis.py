import math

import numpy as np
import pytest

from crlab.analysis import (CASES, StudyConfig, eoc, error_norms, error_parts, eta_sweep, exponential_fit,
                            get_case, run_h_study, run_study, solve_poisson, validate_config, validate_study)
from crlab.assembly import FormSpec
from crlab.femspace import build_space
from crlab.mesh import lshape_graded, unit_square

H = 1e-4


def fd_laplacian(u, x, h=H):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return (u(x + ex) + u(x - ex) + u(x + ey) + u(x - ey) - 4 * u(x)) / h**2


def test_registry_sources(rng):
    x = rng.uniform(0.1, 0.9, (100, 2))
    for name in ("u1", "u2"):
        c = get_case(name)
        np.testing.assert_allclose(-fd_laplacian(c.u, x), c.f(x), atol=1e-4)


def test_u3_harmonic_away_from_corner(rng):
    c = get_case("u3")
    r = rng.uniform(0.2, 0.9, 100)
    th = rng.uniform(0.1, 1.5 * math.pi - 0.1, 100)
    x = np.c_[r * np.cos(th), r * np.sin(th)]

    def div_grad(h):
        ex, ey = np.array([h, 0.0]), np.array([0.0, h])
        return (c.grad(x + ex)[:, 0] - c.grad(x - ex)[:, 0] + c.grad(x + ey)[:, 1] - c.grad(x - ey)[:, 1]) / (2 * h)

    # Richardson-extrapolated central differences of the registry gradient
    lap = (4 * div_grad(5e-4) - div_grad(1e-3)) / 3
    assert np.abs(lap).max() <= 1e-7
    g = np.stack([(c.u(x + e) - c.u(x - e)) / 2e-6 for e in (np.array([1e-6, 0]), np.array([0, 1e-6]))], axis=-1)
    np.testing.assert_allclose(c.grad(x), g, atol=1e-7)


def test_u3_laplacian_high_precision(rng):
    # exact Laplacian in polar form: u_rr + u_r / r + u_thth / r^2 with u = r^a sin(a th), a = 2/3
    a = 2.0 / 3.0
    r = rng.uniform(0.1, 1.0, 100)
    th = rng.uniform(0.0, 1.5 * math.pi, 100)
    s = np.sin(a * th)
    lap = a * (a - 1) * r ** (a - 2) * s + a * r ** (a - 2) * s - a * a * r ** (a - 2) * s
    assert np.abs(lap).max() <= 1e-7
    x = np.c_[r * np.cos(th), r * np.sin(th)]
    np.testing.assert_allclose(get_case("u3").u(x), r**a * s, atol=1e-14)


def test_unknown_case():
    with pytest.raises(ValueError):
        get_case("u7")


def test_zero_coefficients_normalization():
    space = build_space(unit_square(2), "new-even", 2)
    e_dg, e_l2 = error_norms(space, np.zeros(space.ndof), CASES["u2"])
    assert e_dg == pytest.approx(1.0, abs=1e-10)
    assert e_l2 == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("variant,p", [("standard-odd", 1), ("new-even", 2), ("standard-odd", 3)])
def test_affine_interpolant_has_zero_error(variant, p):
    space = build_space(unit_square(2, "crisscross"), variant, p)
    sol = solve_poisson(space, FormSpec("stabilized", 20.0), CASES["u1"])
    assert error_norms(space, sol.coeffs, CASES["u1"])[0] <= 1e-10


@pytest.mark.parametrize("p", [2, 4])
def test_quadrature_sufficiency(p):
    case = CASES["u2"]
    space = build_space(unit_square(8), "new-even", p)
    sol = solve_poisson(space, FormSpec("stabilized", 20.0), case)
    lo = error_parts(space, sol.coeffs, case.u, case.grad, exactness=2 * p + 4)
    hi = error_parts(space, sol.coeffs, case.u, case.grad, exactness=2 * p + 8)
    assert abs(lo.dg - hi.dg) <= 1e-9 * hi.dg


def test_eoc():
    out = eoc([1.0, 0.25, 0.0625])
    assert math.isnan(out[0])
    assert out[1:] == [2.0, 2.0]


def test_exponential_fit():
    x = np.arange(1.0, 6.0)
    slope, corr = exponential_fit(x, np.exp(-0.5 * x))
    assert slope == pytest.approx(-0.5)
    assert corr == pytest.approx(-1.0)


def test_h_study_rate_and_csv_determinism():
    cfg = StudyConfig(study="h", case="u2", variant="new-even", p=2, eta=20, levels=4)
    res = run_h_study(cfg)
    assert len(res.rows) == 4
    assert 1.8 <= res.rows[-1]["eoc_dg"] <= 2.2
    assert res.to_csv() == run_h_study(cfg).to_csv()
    header = res.to_csv().splitlines()[0].split(",")
    assert header[:10] == ["level", "h", "ndof", "e_dg", "e_l2", "eoc_dg", "eoc_l2", "eta", "variant", "p_spec"]


def test_threaded_rows_identical(monkeypatch):
    cfg = StudyConfig(study="h", case="u2", variant="standard-odd", p=3, levels=3)
    serial = run_study(cfg).to_csv()
    monkeypatch.setenv("CRLAB_THREADS", "3")
    assert run_study(cfg).to_csv() == serial


def test_eta_sweep_small():
    res = eta_sweep("u2", p_values=(2,), eta_values=(4, 16, 64), mesh=unit_square(2))
    cr = [r for r in res.rows if r["method"] == "cr"]
    assert all(r["status"] == "ok" for r in cr)
    e = [r["e_dg"] for r in cr]
    assert max(e) / min(e) <= 10


def test_eta_sweep_dg_below_threshold():
    res = eta_sweep("u2", p_values=(8,), eta_values=(0.5, 320.0), mesh=unit_square(2))
    dg = {r["eta"]: r for r in res.rows if r["method"] == "dg"}
    assert dg[0.5]["status"] == "indefinite" or dg[0.5]["e_dg"] > 1.0
    assert dg[320.0]["status"] == "ok" and np.isfinite(dg[320.0]["e_dg"])


def test_validate_config_lists_all_errors():
    errs = validate_config(StudyConfig(study="bogus", case="u9", variant="x", levels=0, eta=-1.0))
    assert len(errs) >= 5
    assert not validate_config(StudyConfig())
    assert validate_config(StudyConfig(study="h", variant="new-even", p=3))
    assert validate_config(StudyConfig(study="hp", case="u2"))
    assert validate_config(StudyConfig(study="stokes", mesh_family="diagonal", p=2))


def test_validate_study_messages():
    msgs = validate_study(StudyConfig(study="hp", case="u3", levels=2))
    assert any("matches the dimension formula" in m for m in msgs)
    assert any("symmetric" in m for m in msgs)


def test_run_study_rejects_invalid():
    with pytest.raises(ValueError, match="invalid study configuration"):
        run_study(StudyConfig(study="h", case="u3"))


def test_hp_graded_exact_norms():
    from crlab.analysis import exact_norms
    mesh, _ = lshape_graded(4)
    space = build_space(mesh, "variable", 1)
    h1, l2 = exact_norms(space, CASES["u3"])
    # |u3|_1^2 = int_0^{3pi/2} u u_r dth on the boundary of the L-shape; compare with a finer grading
    mesh2, _ = lshape_graded(8)
    h1b, l2b = exact_norms(build_space(mesh2, "variable", 1), CASES["u3"])
    assert h1 == pytest.approx(h1b, rel=1e-8)
    assert l2 == pytest.approx(l2b, rel=1e-10)
