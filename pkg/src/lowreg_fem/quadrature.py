"""Simplex quadrature and singular pair rules for double integrals.

Single-simplex rules live on the reference simplex
``{x_i >= 0, sum(x) <= 1}`` (measure ``1/d!``).

Pair rules approximate ``int_{K_a} int_{K_b} F(x, y) dy dx`` for kernels that
blow up like ``|x - y|^{-(d + 2r)}``.  For every outer point ``x`` in ``K_a``
the inner cell ``K_b`` is split into cones with apex ``z`` (``z = x`` for
identical cells, otherwise the point of ``K_b`` closest to ``x``) over the
facets of ``K_b``.  Along each cone ray ``y = z + t (p - z)`` the radial
variable ``t`` is integrated with a geometrically graded composite Gauss
rule, which resolves algebraic end-point singularities of any exponent
greater than ``-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import roots_jacobi

ADJACENCY_CLASSES = ("identical", "face", "edge", "vertex", "disjoint")

MAX_DEGREE = 10

# per-dimension default pair levels; d=1 and d=2 meet 1e-4 on the identical-cell oracle tests
DEFAULT_PAIR_LEVEL = {1: 4, 2: 3, 3: 2}

GRADING_RATIO = 0.15


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    def map_to(self, vertices):
        """Points and weights on the physical simplex with the given vertices."""
        vertices = np.asarray(vertices, dtype=float)
        jac = (vertices[1:] - vertices[0]).T
        vol_scale = abs(np.linalg.det(jac)) if jac.shape[0] == jac.shape[1] else _gram_scale(jac)
        return vertices[0] + self.points @ jac.T, self.weights * vol_scale


@dataclass(frozen=True)
class PairRule:
    """Nodes ``(x_i, y_i)`` and weights ``w_i`` for ``int int F(x, y)``.

    ``x_index`` maps each pair to a row of ``x_points`` so that callers can
    evaluate an integrand factor at the outer points only once.
    """

    x_points: np.ndarray
    x_index: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    adjacency: str

    @property
    def x(self):
        return self.x_points[self.x_index]

    def __len__(self):
        return len(self.weights)

    def integrate(self, func):
        """``sum_i w_i func(x_i, y_i)`` for a vectorised ``func``."""
        return float(np.dot(self.weights, func(self.x, self.y)))

    def swapped(self):
        return PairRule(self.y, np.arange(len(self.y)), self.x, self.weights, self.adjacency)


def _gram_scale(jac):
    return math.sqrt(abs(np.linalg.det(jac.T @ jac)))


def reference_measure(dim):
    return 1.0 / math.factorial(dim)


def gauss_jacobi01(n, alpha=0.0, beta=0.0):
    """Gauss-Jacobi rule on [0, 1] for the weight ``(1 - u)^alpha u^beta``."""
    t, w = roots_jacobi(n, alpha, beta)
    u = 0.5 * (1.0 + t)
    return u, w / 2.0 ** (alpha + beta + 1.0)


def gauss_legendre01(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (1.0 + t), 0.5 * w


@lru_cache(maxsize=None)
def graded_rule(n_layers, points_per_layer, ratio=GRADING_RATIO, beta=0.0):
    """Composite Gauss rule on (0, 1) refined geometrically toward 0.

    The layer breakpoints are ``ratio**k``.  The innermost layer
    ``(0, ratio**n_layers)`` uses Gauss-Jacobi points for the weight ``t^beta``
    so that integrands behaving like ``t^beta * smooth`` are integrated
    accurately there; the returned weights still approximate ``int f dt``.
    """
    if beta <= -1.0:
        raise ValueError("radial exponent must exceed -1")
    u, w = gauss_legendre01(points_per_layer)
    edges = ratio ** np.arange(n_layers, -1, -1, dtype=float)
    lengths = np.diff(edges)
    pts = (edges[:-1, None] + lengths[:, None] * u[None, :]).ravel()
    wts = (lengths[:, None] * w[None, :]).ravel()
    eps = edges[0]
    uj, wj = gauss_jacobi01(points_per_layer, 0.0, beta)
    inner_t = eps * uj
    inner_w = eps * wj / uj ** beta
    pts = np.concatenate([inner_t, pts])
    wts = np.concatenate([inner_w, wts])
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def _conical_rule(dim, n):
    """Collapsed-coordinate (Stroud) product rule with ``n`` points per axis."""
    if dim == 1:
        u, w = gauss_legendre01(n)
        return u[:, None], w
    if dim == 2:
        a, wa = gauss_jacobi01(n, 1.0, 0.0)
        b, wb = gauss_legendre01(n)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.stack([A, (1.0 - A) * B], axis=-1).reshape(-1, 2)
        return pts, np.outer(wa, wb).ravel()
    a, wa = gauss_jacobi01(n, 2.0, 0.0)
    b, wb = gauss_jacobi01(n, 1.0, 0.0)
    c, wc = gauss_legendre01(n)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    pts = np.stack([A, (1.0 - A) * B, (1.0 - A) * (1.0 - B) * C], axis=-1).reshape(-1, 3)
    return pts, np.einsum("i,j,k->ijk", wa, wb, wc).ravel()


def _symmetric_low_order(dim, degree):
    if degree <= 1:
        return np.full((1, dim), 1.0 / (dim + 1)), np.array([reference_measure(dim)])
    if dim == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return pts, np.full(3, 1 / 6)
    a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    b = (5.0 - math.sqrt(5.0)) / 20.0
    pts = np.array([[b, b, b], [a, b, b], [b, a, b], [b, b, a]])
    return pts, np.full(4, 1 / 24)


@lru_cache(maxsize=None)
def _simplex_rule_cached(dim, degree):
    if dim in (2, 3) and degree <= 2:
        pts, wts = _symmetric_low_order(dim, degree)
    else:
        pts, wts = _conical_rule(dim, max(1, (degree + 2) // 2))
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, pts, wts, degree)


def simplex_rule(dim, degree):
    """Quadrature rule on the reference ``dim``-simplex exact to ``degree``.

    Degrees 1 and 2 in 2D/3D use the classical symmetric rules; higher degrees
    use collapsed Gauss-Jacobi products (positive weights, interior points).
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (0..{MAX_DEGREE})")
    return _simplex_rule_cached(dim, max(int(degree), 1))


def facet_rule(dim, degree):
    """Rule on the reference ``(dim - 1)``-simplex; a single unit point for dim 1."""
    if dim == 1:
        return np.zeros((1, 0)), np.ones(1)
    rule = simplex_rule(dim - 1, degree)
    return rule.points, rule.weights


def reference_vertices(dim):
    return np.vstack([np.zeros(dim), np.eye(dim)])


@dataclass(frozen=True)
class PairLevel:
    radial_points: int
    direction_degree: int
    relative_degree: int
    outer_layers: int
    outer_points: int
    inner_layers: int
    inner_points: int
    facet_degree: int
    disjoint_degree: int


def pair_level(level):
    """Node-count parameters for a pair rule level (all grow linearly)."""
    if level < 1:
        raise ValueError("pair rule level must be >= 1")
    level = int(level)
    return PairLevel(radial_points=1 + level,
                     direction_degree=min(2 * level + 2, MAX_DEGREE),
                     relative_degree=min(2 * level, MAX_DEGREE),
                     outer_layers=level, outer_points=1 + level,
                     inner_layers=2 + 2 * level, inner_points=1 + level,
                     facet_degree=min(level + 1, MAX_DEGREE),
                     disjoint_degree=min(2 * level + 1, MAX_DEGREE))


def _barycentric(vertices, pts):
    """Barycentric coordinates of ``pts`` w.r.t. a full-dimensional simplex."""
    jac = (vertices[1:] - vertices[0]).T
    lam = np.linalg.solve(jac, (pts - vertices[0]).T).T
    return np.hstack([1.0 - lam.sum(axis=1, keepdims=True), lam])


def _cone_nodes(apex, apex_bary, vertices, lev, beta=0.0):
    """Cone decomposition of the simplex ``vertices`` seen from ``apex``.

    Returns ``(apex_row, y, w)`` where the weights integrate over the simplex
    (measure ``|K|``) for each apex separately.
    """
    dim = vertices.shape[1]
    volume = abs(np.linalg.det((vertices[1:] - vertices[0]).T)) / math.factorial(dim)
    t, wt = graded_rule(lev.inner_layers, lev.inner_points, GRADING_RATIO, beta)
    s_pts, s_wts = facet_rule(dim, lev.facet_degree)
    s_bary = np.hstack([1.0 - s_pts.sum(axis=1, keepdims=True), s_pts])
    jac_t = t ** (dim - 1) * wt
    rows, ys, ws = [], [], []
    n_apex = len(apex)
    for i in range(dim + 1):
        facet = np.delete(vertices, i, axis=0)
        p = s_bary @ facet                                  # (ns, dim)
        # y = z + t (p - z) for every apex z, facet point p, radial node t
        diff = p[None, :, :] - apex[:, None, :]             # (na, ns, dim)
        y = apex[:, None, None, :] + t[None, None, :, None] * diff[:, :, None, :]
        w = (math.factorial(dim) * volume * apex_bary[:, i])[:, None, None] \
            * s_wts[None, :, None] * jac_t[None, None, :]
        rows.append(np.broadcast_to(np.arange(n_apex)[:, None, None], w.shape))
        ys.append(y)
        ws.append(w)
    # order pairs by apex so each apex block is contiguous
    rows = np.concatenate([r.reshape(n_apex, -1) for r in rows], axis=1).ravel()
    ys = np.concatenate([y.reshape(n_apex, -1, dim) for y in ys], axis=1).reshape(-1, dim)
    ws = np.concatenate([w.reshape(n_apex, -1) for w in ws], axis=1).ravel()
    # drop nodes that collapse onto the apex in floating point
    diam = np.max(np.linalg.norm(vertices[:, None] - vertices[None], axis=-1))
    sep = np.linalg.norm(ys - apex[rows], axis=1)
    keep = (ws > 0.0) & (sep > 1e-12 * diam)
    return rows[keep], ys[keep], ws[keep]


@lru_cache(maxsize=None)
def entity_graded_rule(dim, entity, n_layers, points_per_layer, degree, beta=0.0):
    """Reference-simplex rule refined geometrically toward the sub-simplex ``entity``.

    ``entity`` is a sorted tuple of local vertex ids (a vertex or an edge).
    Points are ``(1 - t) e + t c`` with ``e`` on the entity and ``c`` on the
    opposite sub-simplex; ``t`` uses :func:`graded_rule` with hint ``beta``.
    """
    entity = tuple(sorted(int(i) for i in entity))
    verts = reference_vertices(dim)
    comp = [i for i in range(dim + 1) if i not in entity]
    m = len(entity)
    if not (1 <= m <= dim) or not comp:
        raise ValueError(f"invalid entity {entity} for dimension {dim}")
    a_pts, a_w = _subsimplex_rule(m - 1, degree)
    c_pts, c_w = _subsimplex_rule(len(comp) - 1, degree)
    a_bary = np.hstack([1.0 - a_pts.sum(axis=1, keepdims=True), a_pts])
    c_bary = np.hstack([1.0 - c_pts.sum(axis=1, keepdims=True), c_pts])
    e = a_bary @ verts[list(entity)]
    c = c_bary @ verts[comp]
    t, wt = graded_rule(n_layers, points_per_layer, GRADING_RATIO, beta)
    jac = wt * (1.0 - t) ** (m - 1) * t ** (dim - m)
    pts = ((1.0 - t)[None, None, :, None] * e[:, None, None, :]
           + t[None, None, :, None] * c[None, :, None, :])
    wts = a_w[:, None, None] * c_w[None, :, None] * jac[None, None, :]
    pts, wts = pts.reshape(-1, dim), wts.ravel()
    keep = wts > 0.0
    pts, wts = pts[keep], wts[keep]
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, pts, wts, degree)


def singular_cell_rule(dim, entity, degree, layers=10):
    """Cell rule for integrands singular on a vertex or edge of the cell.

    The angular and per-layer orders are raised above ``degree``: the
    integrand is only analytic in the angle, and ``|x|^-1/2``-type radial
    factors need about six points per geometric layer for 1e-5.
    """
    return entity_graded_rule(dim, tuple(entity), layers, max(6, (degree + 6) // 2),
                              min(degree + 4, MAX_DEGREE))


def _radial_exponent(dim, singularity):
    # F ~ |x - y|^s along a ray picks up t^(d-1) from the cone Jacobian
    return float(singularity) + dim - 1.0


@lru_cache(maxsize=None)
def boundary_graded_rule(dim, lev):
    """Reference-simplex rule graded toward the boundary.

    Cones from the barycentre over each facet; the radial coordinate is
    graded toward the facet.  Used as the outer rule of identical pairs,
    whose inner integral is only finitely smooth near the cell boundary.
    """
    verts = reference_vertices(dim)
    centre = verts.mean(axis=0)
    t, wt = graded_rule(lev.outer_layers, lev.outer_points)
    tau = 1.0 - t
    s_pts, s_wts = facet_rule(dim, lev.facet_degree)
    s_bary = np.hstack([1.0 - s_pts.sum(axis=1, keepdims=True), s_pts])
    pts, wts = [], []
    for i in range(dim + 1):
        p = s_bary @ np.delete(verts, i, axis=0)
        x = centre + tau[None, :, None] * (p - centre)[:, None, :]
        w = (s_wts[:, None] * (tau ** (dim - 1) * wt)[None, :]) / (dim + 1)
        pts.append(x.reshape(-1, dim))
        wts.append(w.ravel())
    pts, wts = np.vstack(pts), np.concatenate(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def _subsimplex_rule(k, degree):
    """Rule on the reference ``k``-simplex; ``k = 0`` is a single unit point."""
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    rule = simplex_rule(k, degree)
    return rule.points, rule.weights


def _relative_rule(dim, rho, w_rho, xi, direction_degree):
    # Relative coordinates z = x - y.  For a simplex K the set of admissible x
    # for given z is K ∩ (K + z), a homothetic copy of K scaled by 1 - s(z),
    # where s is the gauge of the difference body K - K.  The difference body
    # has one facet F_P - F_Q per splitting of the vertex set into a face P
    # and its complement Q; on the cone over that facet s is linear, and
    # z = rho * w with w on the facet gives a radial factor
    # rho^(d-1) (1 - rho)^d times F, which carries |x - y|^s = rho^s |w|^s.
    # ``w_rho`` must include rho^(d-1) (1 - rho)^d.
    verts = reference_vertices(dim)
    xi_bary = np.hstack([1.0 - xi.points.sum(axis=1, keepdims=True), xi.points])
    xi_w = xi.weights      # d! |K_hat| = 1
    xs, ys, ws = [], [], []
    everything = range(dim + 1)
    for k in range(1, dim + 1):
        for P in combinations(everything, k):
            Q = [i for i in everything if i not in P]
            a_pts, a_w = _subsimplex_rule(len(P) - 1, direction_degree)
            b_pts, b_w = _subsimplex_rule(len(Q) - 1, direction_degree)
            a_bary = np.hstack([1.0 - a_pts.sum(axis=1, keepdims=True), a_pts])
            b_bary = np.hstack([1.0 - b_pts.sum(axis=1, keepdims=True), b_pts])
            vp, vq = verts[list(P)], verts[list(Q)]
            frame = np.vstack([vp[0] - vq[0], vp[1:] - vp[0], vq[1:] - vq[0]])
            jac_p = abs(np.linalg.det(frame))
            # barycentric weights of x: rho * a on P plus (1 - rho) * xi
            lam_a = np.zeros((len(a_w), dim + 1))
            lam_a[:, list(P)] = a_bary
            w_dir = (a_bary @ vp)[:, None, :] - (b_bary @ vq)[None, :, :]
            w_dir = w_dir.reshape(-1, dim)
            lam_a = np.repeat(lam_a, len(b_w), axis=0)
            w_ab = np.outer(a_w, b_w).ravel() * jac_p
            # nodes indexed (direction, rho, xi)
            lam = (rho[None, :, None, None] * lam_a[:, None, None, :]
                   + (1.0 - rho)[None, :, None, None] * xi_bary[None, None, :, :])
            x = lam @ verts
            y = x - rho[None, :, None, None] * w_dir[:, None, None, :]
            w = w_ab[:, None, None] * w_rho[None, :, None] * xi_w[None, None, :]
            xs.append(x.reshape(-1, dim))
            ys.append(y.reshape(-1, dim))
            ws.append(w.ravel())
    x = np.vstack(xs)
    y = np.vstack(ys)
    w = np.concatenate(ws)
    keep = w > 0.0
    x, y, w = x[keep], y[keep], w[keep]
    idx = np.arange(len(w))
    for arr in (x, idx, y, w):
        arr.setflags(write=False)
    return PairRule(x, idx, y, w, "identical")


@lru_cache(maxsize=None)
def _identical_reference(dim, level, singularity):
    lev = pair_level(level)
    beta = float(singularity) + dim - 1.0
    if beta <= -1.0:
        raise ValueError("kernel singularity is not integrable")
    # Gauss-Jacobi carries (1 - rho)^d rho^beta; rho^-s leaves rho^(d-1)
    rho, w_rho = gauss_jacobi01(lev.radial_points, float(dim), beta)
    w_rho = w_rho * rho ** (-float(singularity))
    xi = simplex_rule(dim, lev.relative_degree)
    return _relative_rule(dim, rho, w_rho, xi, lev.direction_degree)


def identical_reference_rule(dim, level=None, singularity=0.0):
    """Pair rule for ``K_hat x K_hat`` on the reference simplex.

    ``singularity`` is the expected power ``s`` in ``F(x, y) ~ |x - y|^s`` near
    the diagonal; it only tunes the radial Gauss-Jacobi weight.
    """
    level = DEFAULT_PAIR_LEVEL[dim] if level is None else int(level)
    return _identical_reference(dim, level, float(singularity))


def closest_point_on_simplex(vertices, pts):
    """Euclidean projection of ``pts`` onto the simplex spanned by ``vertices``.

    Brute force over all sub-simplices; intended for d <= 3.
    """
    pts = np.atleast_2d(pts)
    nv = len(vertices)
    best = np.full(len(pts), np.inf)
    out = np.empty_like(pts)
    for k in range(1, nv + 1):
        for sub in combinations(range(nv), k):
            sv = vertices[list(sub)]
            if k == 1:
                cand = np.broadcast_to(sv[0], pts.shape)
                ok = np.ones(len(pts), dtype=bool)
            else:
                e = (sv[1:] - sv[0]).T
                coef = np.linalg.lstsq(e, (pts - sv[0]).T, rcond=None)[0].T
                ok = (coef >= -1e-14).all(axis=1) & (coef.sum(axis=1) <= 1 + 1e-14)
                cand = sv[0] + coef @ e.T
            dist = np.linalg.norm(pts - cand, axis=1)
            better = ok & (dist < best - 1e-15)
            best = np.where(better, dist, best)
            out[better] = cand[better]
    return out


def _oriented_touching(va, vb, lev, beta):
    x_ref, w_ref = boundary_graded_rule(va.shape[1], lev)
    jac = (va[1:] - va[0]).T
    xa = va[0] + x_ref @ jac.T
    wa = w_ref * abs(np.linalg.det(jac))
    z = closest_point_on_simplex(vb, xa)
    bary = np.clip(_barycentric(vb, z), 0.0, None)
    rows, y, w = _cone_nodes(z, bary, vb, lev, beta)
    return xa, rows, y, w * wa[rows]


def classify_adjacency(cell_a, cell_b):
    """Adjacency class of two cells of a matching mesh from their vertex ids."""
    shared = len(set(map(int, cell_a)) & set(map(int, cell_b)))
    dim = len(cell_a) - 1
    if shared == dim + 1:
        return "identical"
    if shared == 0:
        return "disjoint"
    if shared == dim:
        return "face"
    if shared == 1:
        return "vertex"
    return "edge"


def pair_rule(cell_a, cell_b, adjacency, level=None, singularity=0.0):
    """Quadrature nodes for ``int_{K_a} int_{K_b} F(x, y) dy dx``.

    ``cell_a`` and ``cell_b`` are ``(d+1, d)`` vertex coordinate arrays.
    Touching pairs use the cone rule in both orientations with half weights,
    so the rule for ``(b, a)`` is exactly the swap of the rule for ``(a, b)``.
    ``singularity`` is the power ``s`` in ``F ~ |x - y|^s`` (must exceed ``-d``).
    """
    va = np.asarray(cell_a, dtype=float)
    vb = np.asarray(cell_b, dtype=float)
    dim = va.shape[1]
    if adjacency not in ADJACENCY_CLASSES:
        raise ValueError(f"unknown adjacency class {adjacency!r}")
    level = DEFAULT_PAIR_LEVEL[dim] if level is None else level
    lev = pair_level(level)
    if adjacency == "identical":
        ref = identical_reference_rule(dim, level, singularity)
        jac = (va[1:] - va[0]).T
        scale = abs(np.linalg.det(jac)) ** 2
        return PairRule(va[0] + ref.x_points @ jac.T, ref.x_index,
                        va[0] + ref.y @ jac.T, ref.weights * scale, adjacency)
    if adjacency == "disjoint":
        rule = simplex_rule(dim, lev.disjoint_degree)
        xa, wa = rule.map_to(va)
        yb, wb = rule.map_to(vb)
        idx = np.repeat(np.arange(len(xa)), len(yb))
        return PairRule(xa, idx, np.tile(yb, (len(xa), 1)),
                        np.outer(wa, wb).ravel(), adjacency)
    beta = _radial_exponent(dim, singularity)
    xa, rows, y, w = _oriented_touching(va, vb, lev, beta)
    xb, rows_b, y_b, w_b = _oriented_touching(vb, va, lev, beta)
    x_all = np.vstack([xa, y_b])
    idx = np.concatenate([rows, len(xa) + np.arange(len(y_b))])
    y_all = np.vstack([y, xb[rows_b]])
    return PairRule(x_all, idx, y_all, 0.5 * np.concatenate([w, w_b]), adjacency)
