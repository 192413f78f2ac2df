import math

import numpy as np
import pytest

from lowreg_fem.fields import Locus, get_field, list_fields
from lowreg_fem.mesh import build_lprism_mesh, build_lshape_mesh, build_unit_cube_mesh
from lowreg_fem.quadrature import gauss_legendre01, simplex_rule

rng = np.random.default_rng(3)

FIELDS_3D = ["constant", "linear_non_nedelec", "smooth_trig", "smooth_trig_div",
             "interface_trig", "grad_power_line", "mixed_singular"]
FIELDS_2D = ["constant", "linear_non_nedelec", "smooth_trig", "smooth_trig_div", "lshape_grad"]


def _field(name, dim):
    if name in ("constant", "linear_non_nedelec", "smooth_trig", "smooth_trig_div"):
        return get_field(name, dim=dim)
    return get_field(name)


def _random_triangle(dim, centre_box=(0.3, 0.8), size=0.1):
    c = rng.uniform(*centre_box, size=dim)
    return c + size * rng.normal(size=(3, dim))


def _circulation(f, tri):
    s, w = gauss_legendre01(8)
    total = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        t = tri[b] - tri[a]
        pts = tri[a] + s[:, None] * t
        total += w @ (f.value(pts) @ t)
    return total


def _flux_of_curl(f, tri):
    rule = simplex_rule(2, 10)
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    pts = tri[0] + rule.points[:, :1] * e1 + rule.points[:, 1:] * e2
    if tri.shape[1] == 3:
        n = np.cross(e1, e2)                   # |n| = 2 area
        return rule.weights @ (f.curl(pts) @ n)
    det = e1[0] * e2[1] - e1[1] * e2[0]
    return det * (rule.weights @ f.curl(pts))


@pytest.mark.parametrize("name", FIELDS_3D)
def test_stokes_3d(name):
    f = _field(name, 3)
    for _ in range(5):
        tri = _random_triangle(3)
        assert _circulation(f, tri) == pytest.approx(_flux_of_curl(f, tri), abs=1e-6)


@pytest.mark.parametrize("name", FIELDS_2D)
def test_stokes_2d(name):
    f = _field(name, 2)
    for _ in range(5):
        tri = _random_triangle(2, centre_box=(0.2, 0.7))
        assert _circulation(f, tri) == pytest.approx(_flux_of_curl(f, tri), abs=1e-6)


@pytest.mark.parametrize("name,dim", [("smooth_trig_div", 2), ("smooth_trig_div", 3),
                                      ("rot_power_corner", 2), ("linear_non_nedelec", 3)])
def test_divergence_theorem(name, dim):
    f = _field(name, dim)
    # small simplex: outward flux against the volume integral of div
    c = rng.uniform(0.3, 0.7, size=dim)
    v = c + 0.1 * np.vstack([np.zeros(dim), np.eye(dim)])
    vol_rule = simplex_rule(dim, 10)
    pts, w = vol_rule.map_to(v)
    div_int = w @ f.div(pts)
    flux = 0.0
    centroid = v.mean(axis=0)
    for k in range(dim + 1):
        fv = np.delete(v, k, axis=0)
        if dim == 2:
            s, ws = gauss_legendre01(8)
            t = fv[1] - fv[0]
            n = np.array([t[1], -t[0]])
            q = fv[0] + s[:, None] * t
        else:
            r2 = simplex_rule(2, 10)
            n = np.cross(fv[1] - fv[0], fv[2] - fv[0]) / 2
            q = fv[0] + r2.points @ np.vstack([fv[1] - fv[0], fv[2] - fv[0]])
            ws = 2 * r2.weights
        if n @ (fv.mean(axis=0) - centroid) < 0:
            n = -n
        flux += ws @ (f.value(q) @ n)
    assert flux == pytest.approx(div_int, abs=1e-8)


@pytest.mark.parametrize("name", ["constant", "grad_power_line", "linear_non_nedelec"])
def test_gradient_fields_have_exactly_zero_curl(name):
    f = _field(name, 3)
    pts = rng.uniform(-1, 1, size=(20, 3))
    assert np.all(f.curl(pts) == 0.0)


def test_smooth_trig_tangential_components_vanish_on_x0():
    f = get_field("smooth_trig")
    pts = np.column_stack([np.zeros(10), rng.uniform(0, 1, (10, 2))])
    vals = f.value(pts)
    np.testing.assert_allclose(vals[:, 1:], 0.0, atol=1e-15)


def _tangential_trace_sq(f, mesh):
    rule = simplex_rule(mesh.dim - 1, 6)
    worst = 0.0
    for face in np.flatnonzero(mesh.boundary_faces):
        fv = mesh.vertices[mesh.faces[face]]
        if f.locus.meets(fv):
            continue
        e = fv[1:] - fv[0]
        pts = fv[0] + rule.points @ e
        n = mesh.face_normals_unit[face]
        vals = f.value(pts)
        if mesh.dim == 3:
            tang = np.cross(vals, n)
            sq = np.sum(tang ** 2, axis=1)
        else:
            sq = (vals[:, 0] * n[1] - vals[:, 1] * n[0]) ** 2
        worst = max(worst, float(rule.weights @ sq) * mesh.face_areas[face] / rule.weights.sum())
    return worst


@pytest.mark.parametrize("name,builder", [("smooth_trig", build_unit_cube_mesh),
                                          ("grad_power_line", build_lprism_mesh),
                                          ("mixed_singular", build_lprism_mesh),
                                          ("interface_trig", build_unit_cube_mesh)])
def test_tangential_trace_zero(name, builder):
    f = get_field(name)
    assert f.tangential_trace_zero
    assert _tangential_trace_sq(f, builder(2)) <= 1e-10


def test_normal_trace_zero_rot_power_corner():
    f = get_field("rot_power_corner")
    mesh = build_lshape_mesh(2)
    s, w = gauss_legendre01(6)
    for face in np.flatnonzero(mesh.boundary_faces):
        fv = mesh.vertices[mesh.faces[face]]
        if f.locus.meets(fv):
            continue
        pts = fv[0] + s[:, None] * (fv[1] - fv[0])
        flux = f.value(pts) @ mesh.face_normals_unit[face]
        assert w @ flux ** 2 <= 1e-10


def test_metadata():
    c = get_field("constant")
    assert math.isinf(c.r_star) and c.is_smooth
    g = get_field("grad_power_line", {"lam": 0.3})
    assert g.r_star == 0.3 and g.q_ok == 2.0 and g.locus.kind == "line"
    assert get_field("lshape_grad").r_star == pytest.approx(2 / 3)
    assert get_field("rot_power_corner").normal_trace_zero
    assert set(FIELDS_3D) <= set(list_fields())


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.2, 1.5])
def test_lambda_validated(lam):
    with pytest.raises(ValueError):
        get_field("grad_power_line", {"lam": lam})


def test_unknown_field_and_dimension():
    with pytest.raises(ValueError):
        get_field("vortex")
    with pytest.raises(ValueError):
        get_field("grad_power_line", dim=2)
    with pytest.raises(ValueError):
        get_field("constant", {"value": [1.0, 2.0]}, dim=3)


def test_singular_field_finite_off_locus_and_blows_up_near_it():
    f = get_field("grad_power_line", {"lam": 0.3})
    pts = rng.uniform(-1, 1, size=(200, 3))
    pts[:, 2] = rng.uniform(0.2, 0.8, 200)
    pts = pts[~((pts[:, 0] > 0) & (pts[:, 1] < 0))]
    assert np.all(np.isfinite(f.value(pts)))
    near = np.array([[1e-6, 1e-6, 0.5], [1e-3, 1e-3, 0.5]])
    mag = np.linalg.norm(f.value(near), axis=1)
    # |grad rho^lam| ~ rho^(lam - 1)
    assert mag[0] / mag[1] == pytest.approx(1e3 ** 0.7, rel=1e-2)


def test_locus_queries():
    line = Locus("line", (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    assert line.meets(np.array([[0, 0, 0.2], [1, 0, 0.2]]))
    assert not line.meets(np.array([[0.1, 0, 0.2], [1, 0, 0.2]]))
    mask = line.on_locus(np.array([[0, 0, 3.0], [1e-3, 0, 0]]))
    np.testing.assert_array_equal(mask, [True, False])
    assert not Locus().meets(np.zeros((2, 3)))


def test_jacobian_matches_finite_difference_of_linear_field():
    f = get_field("linear_non_nedelec")
    J = f.jacobian(rng.uniform(size=(4, 3)))
    np.testing.assert_allclose(J.reshape(4, 3, 3), np.tile(np.eye(3), (4, 1, 1)), atol=1e-8)
