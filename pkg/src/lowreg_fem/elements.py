"""Lowest-order Nedelec, Raviart-Thomas and P1 elements on simplices.

Edge functions use the Whitney form ``phi_ij = lam_i grad lam_j - lam_j grad lam_i``
whose degree of freedom is the tangential line integral along ``x_i -> x_j``.
Face functions are ``psi_k = (x - x_k) / (d |K|)`` with unit outward flux
through the face opposite vertex ``k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateCellError, SingularTrace
from .mesh import LOCAL_EDGES, LOCAL_FACES
from .quadrature import gauss_legendre01, simplex_rule

BARY_TOL = 1e-12


def reference_vertices(dim):
    return np.vstack([np.zeros(dim), np.eye(dim)])


def reference_gradients(dim):
    """Gradients of the barycentric coordinates on the reference simplex."""
    return np.vstack([-np.ones(dim), np.eye(dim)])


def _barycentric_ref(points, dim):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}")
    lam = np.hstack([1.0 - pts.sum(axis=1, keepdims=True), pts])
    if np.any(lam < -BARY_TOL):
        raise ValueError("point outside the reference simplex")
    return lam


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def nedelec0_eval(ref_points, dim=3):
    """Values ``(np, n_edges, d)`` and constant curls of the Whitney edge functions.

    Curls have shape ``(n_edges, 3)`` in 3D and ``(n_edges,)`` (scalar rot) in 2D.
    """
    lam = _barycentric_ref(ref_points, dim)
    g = reference_gradients(dim)
    le = LOCAL_EDGES[dim]
    i, j = le[:, 0], le[:, 1]
    vals = lam[:, i, None] * g[j][None] - lam[:, j, None] * g[i][None]
    if dim == 3:
        curls = 2.0 * np.cross(g[i], g[j])
    else:
        curls = 2.0 * cross2(g[i], g[j])
    return vals, curls


def rt0_eval(ref_points, dim=3):
    """Values ``(np, d+1, d)`` and divergences ``(d+1,)`` of the face functions."""
    pts = np.atleast_2d(np.asarray(ref_points, dtype=float))
    _barycentric_ref(pts, dim)
    verts = reference_vertices(dim)
    vol = 1.0 / math.factorial(dim)
    vals = (pts[:, None, :] - verts[None, :, :]) / (dim * vol)
    divs = np.full(dim + 1, 1.0 / vol)
    return vals, divs


def p1_eval(ref_points, dim=3):
    lam = _barycentric_ref(ref_points, dim)
    return lam, reference_gradients(dim)


@dataclass(frozen=True)
class ReferenceElement:
    family: str
    dim: int
    ndofs: int
    evaluate: Callable
    entity_kind: str  # "edge", "face" or "vertex"

    def local_entities(self):
        if self.entity_kind == "edge":
            return LOCAL_EDGES[self.dim]
        if self.entity_kind == "face":
            return LOCAL_FACES[self.dim]
        return np.arange(self.dim + 1)[:, None]


def reference_element(family, dim) -> ReferenceElement:
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if family == "Nedelec0":
        return ReferenceElement(family, dim, len(LOCAL_EDGES[dim]),
                                lambda p: nedelec0_eval(p, dim), "edge")
    if family == "RT0":
        return ReferenceElement(family, dim, dim + 1, lambda p: rt0_eval(p, dim), "face")
    if family == "P1":
        return ReferenceElement(family, dim, dim + 1, lambda p: p1_eval(p, dim), "vertex")
    raise ValueError(f"unknown element family {family!r}")


@dataclass(frozen=True)
class AffineCellMap:
    """``x = b + J x_hat``."""

    jacobian: np.ndarray
    inv_transpose: np.ndarray
    det: float
    translation: np.ndarray

    @classmethod
    def from_vertices(cls, vertices):
        v = np.asarray(vertices, dtype=float)
        jac = (v[1:] - v[0]).T
        det = float(np.linalg.det(jac))
        scale = max(np.abs(jac).max(), 1e-300)
        if abs(det) <= 1e-14 * scale ** len(jac):
            raise DegenerateCellError("singular affine map")
        return cls(jac, np.linalg.inv(jac).T, det, v[0].copy())

    def __call__(self, ref_points):
        return self.translation + np.atleast_2d(ref_points) @ self.jacobian.T

    def inverse(self, points):
        return (np.atleast_2d(points) - self.translation) @ self.inv_transpose


def _as_map(cell_map):
    if isinstance(cell_map, AffineCellMap):
        return cell_map
    return AffineCellMap.from_vertices(cell_map)


def covariant_piola(cell_map, ref_value, ref_curl=None):
    """``v = J^{-T} v_hat``; ``curl v = J curl_hat / det J`` (scalar rot in 2D: ``/ det J``)."""
    m = _as_map(cell_map)
    val = np.asarray(ref_value) @ m.inv_transpose.T
    if ref_curl is None:
        return val, None
    ref_curl = np.asarray(ref_curl, dtype=float)
    if m.jacobian.shape[0] == 3:
        curl = ref_curl @ m.jacobian.T / m.det
    else:
        curl = ref_curl / m.det
    return val, curl


def contravariant_piola(cell_map, ref_value, ref_div=None):
    """``v = J v_hat / det J``; ``div v = div_hat / det J``."""
    m = _as_map(cell_map)
    val = np.asarray(ref_value) @ m.jacobian.T / m.det
    div = None if ref_div is None else np.asarray(ref_div, dtype=float) / m.det
    return val, div


# ---------------------------------------------------------------- DOF functionals
_EDGE_GAUSS = gauss_legendre01(3)          # exact to degree 5


def _check_trace(field, entity_vertices):
    meets = getattr(field, "meets_locus", None)
    if meets is not None and meets(entity_vertices):
        raise SingularTrace(f"field {getattr(field, 'name', field)!r} is singular on the entity")


def _evaluate(field, pts):
    fn = getattr(field, "value", field)
    return np.asarray(fn(pts), dtype=float)


def edge_dof(field, edge_vertices):
    """``int_e v . t ds`` with ``t`` pointing from the first to the second vertex."""
    p = np.asarray(edge_vertices, dtype=float)
    _check_trace(field, p)
    s, w = _EDGE_GAUSS
    t = p[1] - p[0]
    pts = p[0] + s[:, None] * t
    return float(w @ (_evaluate(field, pts) @ t))


def face_dof(field, face_vertices):
    """``int_F v . n dA``; normal by the right-hand rule in 3D, ``(t_y, -t_x)`` in 2D."""
    p = np.asarray(face_vertices, dtype=float)
    _check_trace(field, p)
    if p.shape[1] == 2:
        t = p[1] - p[0]
        n = np.array([t[1], -t[0]])           # length = |F|
        s, w = _EDGE_GAUSS
        pts = p[0] + s[:, None] * t
        return float(w @ (_evaluate(field, pts) @ n))
    rule = simplex_rule(2, 5)
    e1, e2 = p[1] - p[0], p[2] - p[0]
    n = np.cross(e1, e2)                      # length = 2|F|
    pts = p[0] + rule.points[:, :1] * e1 + rule.points[:, 1:] * e2
    return float(rule.weights @ (_evaluate(field, pts) @ n))


# ------------------------------------------------------- mesh-batched bases
def nedelec_basis(mesh, ref_points, cells=None):
    """Physical edge functions on every cell.

    Returns ``values (nc, np, ne, d)`` and ``curls`` of shape ``(nc, ne, 3)`` (3D)
    or ``(nc, ne)`` (2D).  Local edge orientation is ascending vertex index,
    which coincides with the global orientation (cells are stored sorted).
    """
    sel = slice(None) if cells is None else cells
    vals, curls = nedelec0_eval(ref_points, mesh.dim)
    jit = np.transpose(mesh.inverse_jacobians[sel], (0, 2, 1))   # J^{-T}
    phys = np.einsum("kab,pib->kpia", jit, vals)
    det = mesh.det[sel]
    if mesh.dim == 3:
        pc = np.einsum("kab,ib->kia", mesh.jacobians[sel], curls) / det[:, None, None]
    else:
        pc = curls[None, :] / det[:, None]
    return phys, pc


def rt_basis(mesh, ref_points, cells=None):
    """Physical face functions with unit *outward* flux on every cell.

    Returns ``values (nc, np, d+1, d)`` and ``divs (nc, d+1)``.
    """
    sel = slice(None) if cells is None else cells
    vals, divs = rt0_eval(ref_points, mesh.dim)
    adet = np.abs(mesh.det[sel])
    phys = np.einsum("kab,pib->kpia", mesh.jacobians[sel], vals) / adet[:, None, None, None]
    return phys, divs[None, :] / adet[:, None]


def element_mass_curl(mesh, nu=None, kappa=None, degree=4):
    """Local Nedelec mass and curl-curl matrices, shapes ``(nc, ne, ne)``.

    ``nu`` and ``kappa`` are per-cell constants (default 1).
    """
    rule = simplex_rule(mesh.dim, degree)
    phi, curl = nedelec_basis(mesh, rule.points)
    w = rule.weights[None, :] * np.abs(mesh.det)[:, None]
    mass = np.einsum("kp,kpia,kpja->kij", w, phi, phi)
    if mesh.dim == 3:
        cc = np.einsum("kia,kja->kij", curl, curl)
    else:
        cc = curl[:, :, None] * curl[:, None, :]
    cc = cc * mesh.volumes[:, None, None]
    if nu is not None:
        mass = mass * np.asarray(nu)[:, None, None]
    if kappa is not None:
        cc = cc * np.asarray(kappa)[:, None, None]
    return mass, cc
