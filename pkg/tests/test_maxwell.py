import numpy as np
import pytest

from lowreg_fem.errors import IndefiniteSystemError
from lowreg_fem.fields import get_field
from lowreg_fem.interpolation import mass_matrix
from lowreg_fem.maxwell import (
    CoefficientPartition,
    Subdomain,
    _full_operator,
    assemble_nitsche,
    assemble_strong,
    export_vtk,
    form_with_field,
    manufactured_source,
    maxwell_errors,
    min_rayleigh_quotient,
    residual_exponent,
    solve,
)
from lowreg_fem.mesh import build_unit_cube_mesh, build_unit_square_mesh, refine_n

UNIT = CoefficientPartition.constant()


def _problem(n=2, field="smooth_trig", coeffs=UNIT):
    mesh = build_unit_cube_mesh(n)
    fld = get_field(field)
    return mesh, fld, manufactured_source(fld, coeffs)


def test_strong_system_is_spd():
    mesh, _, f = _problem()
    sys_ = assemble_strong(mesh, UNIT, f)
    A = sys_.matrix.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-13)
    assert min_rayleigh_quotient(sys_.matrix) > 0
    assert sys_.matrix.shape[0] == int(np.sum(~mesh.boundary_edges))


def test_curl_part_has_gradient_kernel():
    # with nu -> 0 the operator is singular on discrete gradients
    mesh = build_unit_cube_mesh(1)
    A = _full_operator(mesh, CoefficientPartition.constant(nu=1e-12))
    ev = np.linalg.eigvalsh(A.toarray())
    # gradients of the 8 vertex hats, minus the constant
    assert np.sum(np.abs(ev) < 1e-9) == 7


def test_galerkin_orthogonality():
    mesh, fld, f = _problem()
    sys_ = assemble_strong(mesh, UNIT, f)
    u = solve(sys_, tol=1e-12)
    A = _full_operator(mesh, UNIT)
    exact_form = form_with_field(mesh, UNIT, fld, degree=8)
    resid = (exact_form - A @ u.coeffs)[sys_.free]
    assert np.max(np.abs(resid)) < 1e-6 * np.max(np.abs(exact_form))
    assert sys_.info["iterations"] > 0 and sys_.info["residual"] < 1e-11


def test_nitsche_definite_for_default_and_detects_small_eta():
    mesh, _, f = _problem()
    sys_ = assemble_nitsche(mesh, UNIT, f, eta0=10.0)
    solve(sys_)
    assert sys_.info["min_rayleigh"] > 0
    bad = assemble_nitsche(mesh, UNIT, f, eta0=0.01)
    with pytest.raises(IndefiniteSystemError) as exc:
        solve(bad)
    assert exc.value.min_eigenvalue < 0
    with pytest.raises(ValueError):
        assemble_nitsche(mesh, UNIT, f, eta0=0.0)


def test_nitsche_approaches_strong_as_eta_grows():
    mesh, _, f = _problem()
    strong = solve(assemble_strong(mesh, UNIT, f), tol=1e-12)
    M = mass_matrix(mesh, "Nedelec0")
    dists = []
    for eta in (10.0, 100.0, 1000.0):
        u = solve(assemble_nitsche(mesh, UNIT, f, eta0=eta), tol=1e-12, check_definite=False)
        d = u.coeffs - strong.coeffs
        dists.append(float(np.sqrt(d @ (M @ d))))
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] < 0.05 * dists[0]


def test_first_order_convergence_with_coefficient_jump():
    coeffs = CoefficientPartition([Subdomain((0.5, 0, 0), (1, 1, 1), 2.0, 10.0)])
    fld = get_field("interface_trig")
    f = manufactured_source(fld, coeffs)
    errs = []
    base = build_unit_cube_mesh(2)
    for lev in range(2):
        mesh = refine_n(base, lev)
        u = solve(assemble_strong(mesh, coeffs, f))
        errs.append(maxwell_errors(u, fld)[0])
    assert errs[0] / errs[1] > 1.7


def test_two_dimensional_problem():
    mesh = build_unit_square_mesh(4)
    fld = get_field("smooth_trig", dim=2)
    f = manufactured_source(fld, UNIT)
    e = []
    for m in (mesh, refine_n(mesh, 1)):
        e.append(maxwell_errors(solve(assemble_nitsche(m, UNIT, f)), fld)[0])
    assert e[0] / e[1] > 1.7


def test_error_table_and_residual_terms():
    mesh, fld, f = _problem()
    u = solve(assemble_strong(mesh, UNIT, f))
    l2, hc, table = maxwell_errors(u, fld, UNIT, f)
    assert hc >= l2 > 0
    assert l2 == pytest.approx(np.sqrt(table["l2_sq"].sum()))
    assert len(table["residual"]) == int(mesh.boundary_faces.sum())
    assert np.all(table["residual"] >= 0)
    assert residual_exponent(3, 2.0) == pytest.approx(2.0)


def test_coefficient_partition():
    c = CoefficientPartition.from_dict({"nu": 2.0, "subdomains": [
        {"lower": [0, 0, 0], "upper": [0.5, 1, 1], "nu": 1.0, "kappa": 5.0}]})
    nu, kappa = c.lookup(np.array([[0.2, 0.5, 0.5], [0.8, 0.5, 0.5]]))
    np.testing.assert_array_equal(nu, [1.0, 2.0])
    np.testing.assert_array_equal(kappa, [5.0, 1.0])
    assert (c.nu_min, c.kappa_max) == (1.0, 5.0)
    with pytest.raises(ValueError):
        CoefficientPartition.constant(kappa=0.0)
    assert CoefficientPartition.from_dict(None).nu_default == 1.0


def test_source_needs_curl_curl():
    with pytest.raises(ValueError):
        manufactured_source(get_field("grad_power_line"), UNIT)


def test_export(tmp_path):
    mesh, _, f = _problem(1)
    u = solve(assemble_strong(mesh, UNIT, f))
    p = tmp_path / "sol.vtk"
    export_vtk(u, p)
    text = p.read_text()
    assert "A_h" in text and "curl_A_h" in text
