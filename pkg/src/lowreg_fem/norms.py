"""Error norms, fractional seminorms, jump norms and localized bound terms.

All per-cell quantities are returned as arrays indexed by cell; global values
are square roots of ascending-index sums of squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from itertools import combinations_with_replacement

import numpy as np

from . import kernels
from .interpolation import NEDELEC, RT, normalize_space, quadrature_groups
from .mesh import Patch
from .quadrature import (
    classify_adjacency,
    gauss_legendre01,
    identical_reference_rule,
    pair_rule,
    simplex_rule,
)

CELL_DEGREE = 6
_CHUNK_BYTES = 48 * 2**20


# ------------------------------------------------------------------ helpers
def check_q(q, dim):
    """Reject exponents outside ``(2d/(2+d), 2]``."""
    lo = 2.0 * dim / (2.0 + dim)
    if not (lo < q <= 2.0):
        raise ValueError(f"q={q} outside the admissible interval ({lo:.6g}, 2]")
    return float(q)


def check_r(r, allow_one=True):
    hi_ok = r <= 1.0 if allow_one else r < 1.0
    if not (r > 0.0 and hi_ok):
        raise ValueError(f"r={r} outside {'(0, 1]' if allow_one else '(0, 1)'}")
    return float(r)


def lq_exponent(dim, q):
    """Power of ``h`` multiplying the ``L^q`` derivative term: ``1 + d(1/2 - 1/q)``."""
    return 1.0 + dim * (0.5 - 1.0 / q)


def _as_values(arr, n):
    arr = np.asarray(arr, dtype=float)
    return arr.reshape(n, -1)


# fields are evaluated in blocks of this many points so temporaries stay in cache
_EVAL_BLOCK = 8192


def _call(g, pts):
    fn = getattr(g, "value", g)
    if len(pts) <= _EVAL_BLOCK:
        return fn(pts)
    first = _as_values(fn(pts[:_EVAL_BLOCK]), min(len(pts), _EVAL_BLOCK))
    out = np.empty((len(pts), first.shape[1]))
    out[:_EVAL_BLOCK] = first
    for i in range(_EVAL_BLOCK, len(pts), _EVAL_BLOCK):
        blk = pts[i:i + _EVAL_BLOCK]
        out[i:i + _EVAL_BLOCK] = _as_values(fn(blk), len(blk))
    return out


def _mapped_points(mesh, ref_points, cells):
    pts = ref_points @ mesh.jacobians[cells].transpose(0, 2, 1)
    pts += mesh.vertices[mesh.cells[cells, 0]][:, None, :]
    return pts


def _eval_cells(g, mesh, ref_points, cells):
    pts = _mapped_points(mesh, ref_points, cells)
    nc, npt, d = pts.shape
    vals = _as_values(_call(g, pts.reshape(-1, d)), nc * npt)
    return pts, vals.reshape(nc, npt, -1)


def _cells_arg(mesh, cells):
    if cells is None:
        return np.arange(mesh.n_cells)
    return np.atleast_1d(np.asarray(cells, dtype=np.int64))


# ------------------------------------------------------------ cell norms
def _groups(mesh, degree, locus, cells):
    """Quadrature groups restricted to ``cells`` (positions refer to ``cells``)."""
    pos = np.full(mesh.n_cells, -1, dtype=np.int64)
    pos[cells] = np.arange(len(cells))
    for group, rule in quadrature_groups(mesh, degree, locus):
        sel = group[pos[group] >= 0]
        if len(sel):
            yield sel, pos[sel], rule


def lq_norm_cells(g, mesh, q=2.0, degree=CELL_DEGREE, cells=None, check=True, locus=None):
    """``||g||_{L^q(K)}`` per cell (``|.|`` is the Euclidean norm for vectors).

    Cells touching ``locus`` (default: ``g.locus`` when present) use a rule
    refined toward the singular vertex or edge.
    """
    if check:
        check_q(q, mesh.dim)
    cells = _cells_arg(mesh, cells)
    locus = getattr(g, "locus", None) if locus is None else locus
    out = np.zeros(len(cells))
    for sel, pos, rule in _groups(mesh, degree, locus, cells):
        _, vals = _eval_cells(g, mesh, rule.points, sel)
        mag = np.sqrt(np.einsum("kpa,kpa->kp", vals, vals))
        w = rule.weights[None, :] * np.abs(mesh.det[sel])[:, None]
        out[pos] = np.einsum("kp,kp->k", w, mag ** q)
    return out ** (1.0 / q)


def lq_norm_cell(g, q, mesh, K, degree=CELL_DEGREE):
    return float(lq_norm_cells(g, mesh, q, degree, cells=[K])[0])


def l2_error_cells(field, fefun, degree=CELL_DEGREE, cells=None, backend=None):
    """``||v - v_h||_{L^2(K)}`` per cell."""
    mesh = fefun.mesh
    cells = _cells_arg(mesh, cells)
    out = np.zeros(len(cells))
    for sel, pos, rule in _groups(mesh, degree, getattr(field, "locus", None), cells):
        _, exact = _eval_cells(field, mesh, rule.points, sel)
        approx = fefun.evaluate_ref(rule.points, sel)
        w = rule.weights[None, :] * np.abs(mesh.det[sel])[:, None]
        out[pos] = kernels.weighted_sq_sums(exact, approx, w, backend=backend)
    return np.sqrt(out)


def l2_error_cell(field, fefun, K, degree=CELL_DEGREE):
    return float(l2_error_cells(field, fefun, degree, cells=[K])[0])


def l2_error(field, fefun, degree=CELL_DEGREE):
    return float(math.sqrt(np.sum(l2_error_cells(field, fefun, degree) ** 2)))


def field_derivative(field, space):
    """Curl (3D), scalar rot (2D) or divergence evaluator matching ``space``."""
    space = normalize_space(space)
    fn = field.curl if space == NEDELEC else field.div
    if fn is None:
        kind = "curl" if space == NEDELEC else "div"
        raise ValueError(f"field {getattr(field, 'name', field)!r} has no {kind} evaluator")
    return fn


def derivative_error_cells(field, fefun, degree=CELL_DEGREE):
    """``||rot v - rot v_h||_{L^2(K)}`` (Nedelec) or the div analogue (RT)."""
    mesh = fefun.mesh
    deriv = field_derivative(field, fefun.space)
    dh = fefun.derivative().reshape(mesh.n_cells, 1, -1)
    cells = np.arange(mesh.n_cells)
    out = np.zeros(mesh.n_cells)
    for sel, pos, rule in _groups(mesh, degree, getattr(field, "locus", None), cells):
        _, exact = _eval_cells(deriv, mesh, rule.points, sel)
        diff = exact - dh[sel]
        w = rule.weights[None, :] * np.abs(mesh.det[sel])[:, None]
        out[pos] = np.einsum("kp,kpa,kpa->k", w, diff, diff)
    return np.sqrt(out)


def hcurl_norm(l2, curl, length):
    """``(||v||^2 + l_D^2 ||rot v||^2)^{1/2}`` from the two global norms."""
    return float(math.sqrt(l2 ** 2 + (length * curl) ** 2))


def hcurl_error(field, fefun, degree=CELL_DEGREE):
    """Global ``H(curl)`` error with the domain diameter as length scale."""
    e0 = l2_error_cells(field, fefun, degree)
    e1 = derivative_error_cells(field, fefun, degree)
    return hcurl_norm(np.sqrt(np.sum(e0 ** 2)), np.sqrt(np.sum(e1 ** 2)),
                      fefun.mesh.domain_diameter)


def hcurl_field_norm(field, mesh, degree=CELL_DEGREE):
    l2 = np.sqrt(np.sum(lq_norm_cells(field, mesh, 2.0, degree, check=False) ** 2))
    rot = np.sqrt(np.sum(lq_norm_cells(field.curl, mesh, 2.0, degree, check=False) ** 2))
    return hcurl_norm(l2, rot, mesh.domain_diameter)


# ------------------------------------------------------ fractional seminorms
def _h1_seminorms(g, mesh, cells, degree):
    jac = getattr(g, "jacobian", None)
    if jac is None:
        raise ValueError("r = 1 needs a field with a jacobian evaluator")
    rule = simplex_rule(mesh.dim, degree)
    pts = _mapped_points(mesh, rule.points, cells)
    nc, npt, d = pts.shape
    J = np.asarray(jac(pts.reshape(-1, d))).reshape(nc, npt, -1)
    w = rule.weights[None, :] * np.abs(mesh.det[cells])[:, None]
    return np.sqrt(np.einsum("kp,kpa,kpa->k", w, J, J))


def cell_seminorm_squares(g, mesh, r, level=None, cells=None, backend=None):
    """``|g|^2_{H^r(K)}`` per cell via the singular reference pair rule (``0 < r < 1``)."""
    r = check_r(r, allow_one=False)
    d = mesh.dim
    cells = _cells_arg(mesh, cells)
    ref = identical_reference_rule(d, level, singularity=2.0 - d - 2.0 * r)
    xr, yr, w = ref.x, ref.y, ref.weights
    per_cell = max(1, 4 * len(w) * max(d, 3) * 8)
    chunk = max(1, _CHUNK_BYTES // per_cell)
    out = np.empty(len(cells))
    for start in range(0, len(cells), chunk):
        sel = cells[start:start + chunk]
        X, GX = _eval_cells(g, mesh, xr, sel)
        Y, GY = _eval_cells(g, mesh, yr, sel)
        sums = kernels.pair_sums(X, Y, GX, GY, w, d + 2.0 * r, backend=backend)
        out[start:start + len(sel)] = sums * mesh.det[sel] ** 2
    return np.maximum(out, 0.0)


def cell_seminorms(g, mesh, r, level=None, cells=None, degree=CELL_DEGREE, backend=None):
    """``|g|_{H^r(K)}`` per cell; ``r = 1`` gives the ``H^1`` seminorm."""
    r = check_r(r)
    if r == 1.0:
        return _h1_seminorms(g, mesh, _cells_arg(mesh, cells), degree)
    return np.sqrt(cell_seminorm_squares(g, mesh, r, level, cells, backend))


def _pair_integral(g, va, vb, adjacency, r, level):
    d = va.shape[1]
    rule = pair_rule(va, vb, adjacency, level, singularity=2.0 - d - 2.0 * r)
    gx = _as_values(_call(g, rule.x_points), len(rule.x_points))[rule.x_index]
    gy = _as_values(_call(g, rule.y), len(rule.y))
    num = np.einsum("pa,pa->p", gx - gy, gx - gy)
    dist = np.linalg.norm(rule.x - rule.y, axis=1)
    return float(rule.weights @ (num * dist ** (-(d + 2.0 * r))))


def _coord_ids(simplices):
    """Vertex ids for a list of simplices given by coordinates (shared points coincide)."""
    flat = np.round(np.asarray(simplices, dtype=float).reshape(-1, simplices.shape[-1]), 12)
    _, inv = np.unique(flat, axis=0, return_inverse=True)
    return inv.reshape(simplices.shape[:2])


def fractional_seminorm(g, r, region, mesh=None, level=None):
    """``(int_R int_R |g(x)-g(y)|^2 / |x-y|^(d+2r) dx dy)^(1/2)``.

    ``region`` is a cell index, a :class:`Patch` or a sequence of cell indices
    of ``mesh``; without a mesh it is a ``(d+1, d)`` simplex or an
    ``(m, d+1, d)`` array of simplices sharing vertices exactly.
    """
    r = check_r(r, allow_one=False)
    if mesh is not None:
        if isinstance(region, Patch):
            members = np.asarray(region.members, dtype=np.int64)
        else:
            members = np.atleast_1d(np.asarray(region, dtype=np.int64))
        simplices = mesh.vertices[mesh.cells[members]]
        ids = mesh.cells[members]
    else:
        simplices = np.asarray(region, dtype=float)
        if simplices.ndim == 2:
            simplices = simplices[None]
        ids = _coord_ids(simplices)
    total = 0.0
    for a, b in combinations_with_replacement(range(len(simplices)), 2):
        adjacency = classify_adjacency(ids[a], ids[b])
        val = _pair_integral(g, simplices[a], simplices[b], adjacency, r, level)
        total += val if a == b else 2.0 * val
    return math.sqrt(max(total, 0.0))


# ---------------------------------------------------------------- jumps
def _face_quadrature(mesh, degree=4):
    if mesh.dim == 2:
        s, w = gauss_legendre01(3)
        ref = np.stack([1.0 - s, s], axis=1)
        return ref, w
    rule = simplex_rule(2, degree)
    ref = np.hstack([1.0 - rule.points.sum(axis=1, keepdims=True), rule.points])
    return ref, 2.0 * rule.weights


def _trace(vals, n, space):
    if space == RT:
        return np.einsum("...a,...a->...", vals, n)[..., None]
    if vals.shape[-1] == 2:
        return (vals[..., 0] * n[..., 1] - vals[..., 1] * n[..., 0])[..., None]
    return np.cross(vals, n)


def jump_norms(fun, faces=None, degree=4):
    """``L^2(F)`` norm of the tangential (Nedelec) or normal (RT) jump per face.

    The jump uses the fixed global face normal; boundary faces get the
    single-sided trace.
    """
    mesh = fun.mesh
    faces = np.arange(mesh.n_faces) if faces is None else np.atleast_1d(faces)
    bary, w = _face_quadrature(mesh, degree)
    fv = mesh.vertices[mesh.faces[faces]]
    pts = np.einsum("pj,fjd->fpd", bary, fv)
    n = mesh.face_normals_unit[faces][:, None, :]
    n = np.broadcast_to(n, pts.shape)
    nf, npt, d = pts.shape
    jump = np.zeros(pts.shape[:2] + ((1,) if fun.space == RT or d == 2 else (3,)))
    for side, sign in ((0, 1.0), (1, -1.0)):
        cells = mesh.face_cells[faces, side]
        ok = cells >= 0
        if not ok.any():
            continue
        cc = np.repeat(cells[ok], npt)
        vals = fun.evaluate(pts[ok].reshape(-1, d), cc).reshape(-1, npt, d)
        jump[ok] += sign * _trace(vals, n[ok], fun.space)
    area = mesh.face_areas[faces]
    return np.sqrt(area * np.einsum("p,fpa,fpa->f", w, jump, jump))


def jump_norm_face(fun, F, degree=4):
    return float(jump_norms(fun, [F], degree)[0])


# ----------------------------------------------------------- bound terms
def bound_cell_terms(field, mesh, r, q, space, level=None, degree=CELL_DEGREE, backend=None):
    """Per-cell ``(h^r |v|_{H^r(K)}, h^{1+d(1/2-1/q)} ||D v||_{L^q(K)})``.

    ``D`` is the curl / rot for Nedelec and the divergence for RT.
    """
    r = check_r(r)
    q = check_q(q, mesh.dim)
    h = mesh.h_cells
    semi = cell_seminorms(field, mesh, r, level, degree=degree, backend=backend)
    deriv = lq_norm_cells(field_derivative(field, space), mesh, q, degree)
    return h ** r * semi, h ** lq_exponent(mesh.dim, q) * deriv


def _adjacency(mesh, space):
    return mesh.edge_adjacency if normalize_space(space) == NEDELEC else mesh.face_adjacency


def bound_rhs_cells(field, mesh, r, q, space, level=None, terms=None):
    """Patch-summed bound ``sum_{K' in patch(K)} (h^r|v|_{H^r} + h^e ||Dv||_{L^q})``."""
    if terms is None:
        terms = bound_cell_terms(field, mesh, r, q, space, level)
    t = terms[0] + terms[1]
    return np.asarray(_adjacency(mesh, space) @ t, dtype=float)


def bound_rhs_nedelec(field, mesh, K, r, q, level=None):
    return _bound_single(field, mesh, K, r, q, NEDELEC, level)


def bound_rhs_rt(field, mesh, K, r, q, level=None):
    return _bound_single(field, mesh, K, r, q, RT, level)


def _bound_single(field, mesh, K, r, q, space, level):
    patch = _adjacency(mesh, space)[K].indices
    patch = np.sort(np.asarray(patch, dtype=np.int64))
    r = check_r(r)
    q = check_q(q, mesh.dim)
    h = mesh.h_cells[patch]
    semi = cell_seminorms(field, mesh, r, level, cells=patch)
    deriv = lq_norm_cells(field_derivative(field, space), mesh, q, cells=patch)
    return float(np.sum(h ** r * semi + h ** lq_exponent(mesh.dim, q) * deriv))


def global_bound_rhs(field, mesh, r, q, space, level=None, terms=None):
    """``(sum_K h^{2r}|v|^2_{H^r(K)} + h^{2+2d(1/2-1/q)} ||Dv||^2_{L^q(K)})^{1/2}``."""
    if terms is None:
        terms = bound_cell_terms(field, mesh, r, q, space, level)
    return float(math.sqrt(np.sum(terms[0] ** 2) + np.sum(terms[1] ** 2)))


@dataclass
class CellErrorTable:
    """Per-cell error, bound and effectivity."""

    lhs: np.ndarray
    rhs: np.ndarray
    h: np.ndarray
    patches: list = dc_field(default_factory=list)

    def __post_init__(self):
        self.lhs = np.asarray(self.lhs, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        if np.any(self.lhs < 0) or np.any(self.rhs < 0):
            raise ValueError("negative entries in error table")

    @property
    def effectivity(self):
        out = np.full(self.lhs.shape, np.nan)
        pos = self.rhs > 0
        out[pos] = self.lhs[pos] / self.rhs[pos]
        return out

    @property
    def max_effectivity(self):
        eff = self.effectivity
        eff = eff[np.isfinite(eff)]
        return float(eff.max()) if eff.size else float("nan")

    @classmethod
    def build(cls, field, fefun, r, q, level=None, terms=None, lhs=None):
        mesh = fefun.mesh
        if lhs is None:
            lhs = l2_error_cells(field, fefun)
        rhs = bound_rhs_cells(field, mesh, r, q, fefun.space, level, terms)
        adj = _adjacency(mesh, fefun.space)
        patches = [adj[k].indices.tolist() for k in range(mesh.n_cells)]
        return cls(lhs, rhs, mesh.h_cells.copy(), patches)
