import math
from itertools import product

import numpy as np
import pytest
from scipy import integrate

from lowreg_fem.norms import fractional_seminorm
from lowreg_fem.quadrature import (
    DEFAULT_PAIR_LEVEL,
    classify_adjacency,
    entity_graded_rule,
    graded_rule,
    identical_reference_rule,
    pair_rule,
    reference_measure,
    simplex_rule,
    singular_cell_rule,
)

# Reference values of int_K int_K |G(x - y)|^2 |x - y|^(-d-2r) from the simplex
# covariogram: int f(z) |K cap (K + z)| dz with the angular integral done by
# scipy quad/dblquad.  The 2D values were cross-checked with a second oracle in
# polar coordinates about x (agreement 1e-12).
TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]])
G2 = np.array([[1.0, 2.0], [0.5, -1.0]])
TRI_ORACLE = {0.2: 0.7850930403218912, 0.5: 2.1796716780046244, 0.9: 28.663365224271967}

TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, 0.9, 0.0], [0.1, 0.3, 0.8]])
G3 = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 1.0], [0.3, 0.2, -0.7]])
TET_ORACLE = {0.2: 0.24004041402532666, 0.5: 0.7855518684485037, 0.9: 13.400138974586737}

# touching pairs among the red-refinement children of TRI, r = 1/2, polar oracle
_M01, _M02, _M12 = (TRI[0] + TRI[1]) / 2, (TRI[0] + TRI[2]) / 2, (TRI[1] + TRI[2]) / 2
CHILDREN = np.array([[TRI[0], _M01, _M02], [_M01, TRI[1], _M12],
                     [_M02, _M12, TRI[2]], [_M01, _M12, _M02]])
EDGE_PAIR_ORACLE = 0.13694258768823123      # children 0 and 3
VERTEX_PAIR_ORACLE = 0.034994145829361355   # children 0 and 1


def _monomial_exact(alpha):
    # Dirichlet integral over the reference simplex
    d = len(alpha)
    return math.prod(math.factorial(a) for a in alpha) / math.factorial(sum(alpha) + d)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", range(0, 11))
def test_simplex_rule_exactness(dim, degree):
    rule = simplex_rule(dim, degree)
    assert rule.weights.sum() == pytest.approx(reference_measure(dim), rel=1e-14)
    assert np.all(rule.weights > 0)
    for alpha in product(range(degree + 1), repeat=dim):
        if sum(alpha) > degree:
            continue
        val = rule.weights @ np.prod(rule.points ** np.array(alpha), axis=1)
        assert val == pytest.approx(_monomial_exact(alpha), rel=1e-13, abs=1e-15)


def test_simplex_rule_examples():
    r = simplex_rule(3, 1)
    assert len(r) == 1 and r.weights[0] == pytest.approx(1 / 6)
    np.testing.assert_allclose(r.points[0], 0.25)
    assert len(simplex_rule(2, 2)) == 3
    with pytest.raises(ValueError):
        simplex_rule(3, 11)
    with pytest.raises(ValueError):
        simplex_rule(4, 2)


def test_map_to_physical():
    pts, w = simplex_rule(2, 4).map_to(TRI)
    assert w.sum() == pytest.approx(0.4)
    assert pts[:, 0].max() < 1.0


def test_graded_rule_integrates_end_singularity():
    t, w = graded_rule(12, 6)
    assert w.sum() == pytest.approx(1.0, rel=1e-13)
    assert w @ t ** -0.5 == pytest.approx(2.0, rel=2e-5)
    assert w @ t ** 0.3 == pytest.approx(1 / 1.3, rel=1e-6)
    # with the exponent hint the innermost layer is exact
    t, w = graded_rule(1, 6, ratio=0.5, beta=-0.7)
    inner = t < 0.5
    assert w[inner] @ t[inner] ** -0.7 == pytest.approx(0.5 ** 0.3 / 0.3, rel=1e-12)
    with pytest.raises(ValueError):
        graded_rule(4, 3, beta=-1.0)


def test_singular_cell_rule_edge_integral():
    rule = singular_cell_rule(3, (0, 1), 6)
    assert rule.weights.sum() == pytest.approx(1 / 6, rel=1e-12)
    # int over the reference tet of 1/dist(x, x-axis) = sqrt(2) log(1 + sqrt(2)) / 2
    rho = np.hypot(rule.points[:, 1], rule.points[:, 2])
    exact = math.sqrt(2.0) * math.log(1.0 + math.sqrt(2.0)) / 2.0
    assert rule.weights @ (1 / rho) == pytest.approx(exact, rel=2e-5)
    with pytest.raises(ValueError):
        entity_graded_rule(3, (0, 1, 2, 3), 4, 3, 4)


def test_classify_adjacency():
    assert classify_adjacency([0, 1, 2, 3], [0, 1, 2, 3]) == "identical"
    assert classify_adjacency([0, 1, 2, 3], [1, 2, 3, 4]) == "face"
    assert classify_adjacency([0, 1, 2, 3], [2, 3, 4, 5]) == "edge"
    assert classify_adjacency([0, 1, 2, 3], [3, 4, 5, 6]) == "vertex"
    assert classify_adjacency([0, 1, 2], [3, 4, 5]) == "disjoint"
    with pytest.raises(ValueError):
        pair_rule(TRI, TRI, "adjacent")


# --------------------------------------------------------------- d = 1 cases
UNIT = np.array([[0.0], [1.0]])


def test_identical_interval_constant_kernel():
    rule = pair_rule(UNIT, UNIT, "identical")
    assert rule.integrate(lambda x, y: np.ones(len(x))) == pytest.approx(1.0, rel=1e-13)


def test_d1_linear_seminorm_half():
    # |x - y|^2 / |x - y|^2 = 1 over the unit square
    assert fractional_seminorm(lambda x: x, 0.5, UNIT) == pytest.approx(1.0, abs=1e-3)


def test_disjoint_intervals_against_scipy():
    b = np.array([[2.0], [3.0]])
    rule = pair_rule(UNIT, b, "disjoint", level=4)
    f = lambda x, y: np.abs(x - y)[:, 0] ** -1.5  # noqa: E731
    ref = integrate.dblquad(lambda y, x: abs(x - y) ** -1.5, 0, 1, 2, 3, epsabs=1e-13)[0]
    assert rule.integrate(f) == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("s", [-0.2, -0.5, -0.9])
def test_touching_intervals_converge(s):
    b = np.array([[1.0], [2.0]])
    # int_0^1 int_1^2 (y - x)^s dy dx in closed form
    exact = (2.0 ** (s + 2) - 2.0) / ((s + 1) * (s + 2))
    f = lambda x, y: np.abs(x - y)[:, 0] ** s  # noqa: E731
    default = DEFAULT_PAIR_LEVEL[1]
    vals = [pair_rule(UNIT, b, "vertex", level=lev, singularity=s).integrate(f)
            for lev in (1, default, 2 * default)]
    assert abs(vals[1] / exact - 1) < 1e-4
    # doubling the level changes the value by less than ten times the target
    assert abs(vals[2] - vals[1]) < 10 * 1e-4 * exact
    assert abs(vals[2] / exact - 1) < abs(vals[0] / exact - 1)


@pytest.mark.parametrize("r", [0.1, 0.5, 0.9])
def test_identical_interval_singular_kernel(r):
    # g(x) = x: |x - y|^(1 - 2r) over the unit square, closed form 2 / ((2-2r)(3-2r))
    exact = 2.0 / ((2 - 2 * r) * (3 - 2 * r))
    assert fractional_seminorm(lambda x: x, r, UNIT) ** 2 == pytest.approx(exact, rel=1e-6)


# ---------------------------------------------------------- d = 2, d = 3
@pytest.mark.parametrize("r", sorted(TRI_ORACLE))
def test_triangle_seminorm_oracle(r):
    val = fractional_seminorm(lambda x: x @ G2.T, r, TRI) ** 2
    assert val == pytest.approx(TRI_ORACLE[r], rel=1e-4)


@pytest.mark.parametrize("r", sorted(TET_ORACLE))
def test_tetrahedron_seminorm_oracle(r):
    val = fractional_seminorm(lambda x: x @ G3.T, r, TET) ** 2
    assert val == pytest.approx(TET_ORACLE[r], rel=5e-4)


def test_identical_rule_node_counts_polynomial():
    sizes = [len(identical_reference_rule(3, lev)) for lev in (1, 2, 3)]
    assert sizes == sorted(sizes)
    assert sizes[2] / sizes[1] < 10


def _pair_value(a, b, kind, level, r=0.5):
    rule = pair_rule(a, b, kind, level, singularity=-2 * r)

    def f(x, y):
        d = x - y
        return np.sum((d @ G2.T) ** 2, axis=1) * np.linalg.norm(d, axis=1) ** (-2 - 2 * r)
    return rule.integrate(f)


def test_touching_triangles_against_polar_oracle():
    # the angular rule is not graded, so touching pairs are only accurate to a
    # few 1e-3 at the default level (see the decisions ledger)
    errs = {}
    for kind, (i, j), ref in (("edge", (0, 3), EDGE_PAIR_ORACLE),
                              ("vertex", (0, 1), VERTEX_PAIR_ORACLE)):
        errs[kind] = [abs(_pair_value(CHILDREN[i], CHILDREN[j], kind, lev) / ref - 1)
                      for lev in (1, DEFAULT_PAIR_LEVEL[2])]
    assert errs["edge"][1] < 3e-3 and errs["edge"][1] < errs["edge"][0]
    assert errs["vertex"][1] < 1e-3


def test_refined_triangle_sum_matches_parent():
    val = fractional_seminorm(lambda x: x @ G2.T, 0.5, CHILDREN) ** 2
    assert val == pytest.approx(TRI_ORACLE[0.5], rel=1e-3)


@pytest.mark.parametrize("kind,i,j", [("edge", 0, 3), ("vertex", 0, 1), ("disjoint", 0, None)])
def test_pair_rule_symmetry(kind, i, j):
    a = CHILDREN[i]
    b = CHILDREN[j] if j is not None else CHILDREN[0] + np.array([3.0, 0.0])
    ab = _pair_value(a, b, kind, 2)
    ba = _pair_value(b, a, kind, 2)
    assert ab == pytest.approx(ba, rel=1e-12)
    rule = pair_rule(a, b, kind, 2)
    sw = rule.swapped()
    np.testing.assert_array_equal(sw.x, rule.y)


def test_touching_nodes_avoid_diagonal():
    rule = pair_rule(CHILDREN[0], CHILDREN[3], "edge")
    assert np.linalg.norm(rule.x - rule.y, axis=1).min() > 0
    rule = identical_reference_rule(3)
    assert np.linalg.norm(rule.x - rule.y, axis=1).min() > 0
