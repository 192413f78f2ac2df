"""Canonical and averaging interpolation into lowest-order Nedelec / RT spaces.

The averaging quasi-interpolant is the composition of the broken (cellwise)
L2 projection with equal-weight averaging of the canonical degrees of
freedom over all cells sharing an entity.  The boundary-prescribed variant
additionally zeroes every DOF attached to a boundary entity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .elements import nedelec0_eval, nedelec_basis, rt0_eval, rt_basis
from .errors import DegenerateCellError, SingularTrace, SolverError
from .quadrature import gauss_legendre01, simplex_rule, singular_cell_rule

NEDELEC = "Nedelec0"
RT = "RT0"
_ALIASES = {"nedelec": NEDELEC, "nedelec0": NEDELEC, "rt": RT, "rt0": RT}

PROJECTION_DEGREE = 4
LOAD_DEGREE = 6


def normalize_space(space):
    key = str(space).lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown space {space!r}; use 'Nedelec0' or 'RT0'")
    return _ALIASES[key]


def dof_layout(mesh, space):
    """``(dofmap (nc, n_loc), signs (nc, n_loc), ndof, boundary_mask)`` for a space."""
    space = normalize_space(space)
    if space == NEDELEC:
        return mesh.cell_edges, mesh.cell_edge_signs, mesh.n_edges, mesh.boundary_edges
    return mesh.cell_faces, mesh.cell_face_signs, mesh.n_faces, mesh.boundary_faces


def local_basis(mesh, space, ref_points, cells=None):
    """Physical local basis values and their curl (Nedelec) or div (RT)."""
    if normalize_space(space) == NEDELEC:
        return nedelec_basis(mesh, ref_points, cells)
    return rt_basis(mesh, ref_points, cells)


class _PiecewiseLinearVector:
    """Shared evaluation logic for conforming and broken coefficient vectors."""

    def local_coefficients(self):
        raise NotImplementedError

    def evaluate_ref(self, ref_points, cells=None):
        """Values at the mapped reference points of every (or the given) cell, ``(nc, np, d)``."""
        basis, _ = local_basis(self.mesh, self.space, ref_points, cells)
        coef = self.local_coefficients()
        if cells is not None:
            coef = coef[cells]
        return np.einsum("kpia,ki->kpa", basis, coef)

    def derivative(self):
        """Cellwise constant curl (3D ``(nc, 3)``, 2D ``(nc,)``) or div ``(nc,)``."""
        _, deriv = local_basis(self.mesh, self.space, np.full((1, self.mesh.dim), 0.25))
        c = self.local_coefficients()
        if deriv.ndim == 3:
            return np.einsum("kia,ki->ka", deriv, c)
        return np.einsum("ki,ki->k", deriv, c)

    def evaluate(self, points, cells):
        """Values at physical ``points`` lying in the given ``cells``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = np.asarray(cells, dtype=np.int64)
        mesh = self.mesh
        v0 = mesh.vertices[mesh.cells[cells, 0]]
        ref = np.einsum("nab,nb->na", mesh.inverse_jacobians[cells], points - v0)
        if self.space == NEDELEC:
            vals, _ = nedelec0_eval(ref, mesh.dim)
            jit = np.transpose(mesh.inverse_jacobians[cells], (0, 2, 1))
            phys = np.einsum("nab,nib->nia", jit, vals)
        else:
            vals, _ = rt0_eval(ref, mesh.dim)
            phys = np.einsum("nab,nib->nia", mesh.jacobians[cells], vals)
            phys /= np.abs(mesh.det[cells])[:, None, None]
        return np.einsum("nia,ni->na", phys, self.local_coefficients()[cells])


@dataclass
class FEFunction(_PiecewiseLinearVector):
    mesh: object
    space: str
    coeffs: np.ndarray
    zero_boundary: bool = False

    def __post_init__(self):
        self.space = normalize_space(self.space)
        dofmap, _, ndof, bmask = dof_layout(self.mesh, self.space)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (ndof,):
            raise ValueError(f"expected {ndof} coefficients, got {self.coeffs.shape}")
        if self.zero_boundary and np.any(self.coeffs[bmask] != 0.0):
            raise ValueError("zero_boundary function has nonzero boundary coefficients")

    def local_coefficients(self):
        dofmap, signs, _, _ = dof_layout(self.mesh, self.space)
        return self.coeffs[dofmap] * signs

    def to_broken(self):
        return BrokenFEFunction(self.mesh, self.space, self.local_coefficients())


@dataclass
class BrokenFEFunction(_PiecewiseLinearVector):
    mesh: object
    space: str
    local: np.ndarray

    def __post_init__(self):
        self.space = normalize_space(self.space)
        dofmap, _, _, _ = dof_layout(self.mesh, self.space)
        self.local = np.asarray(self.local, dtype=float)
        if self.local.shape != dofmap.shape:
            raise ValueError(f"expected local coefficients of shape {dofmap.shape}")

    def local_coefficients(self):
        return self.local


# -------------------------------------------------------------- canonical
def _edge_points(mesh, n=3):
    s, w = gauss_legendre01(n)
    p0 = mesh.vertices[mesh.edges[:, 0]]
    t = mesh.edge_tangents
    return p0[:, None, :] + s[None, :, None] * t[:, None, :], w, t


def _face_points(mesh):
    if mesh.dim == 2:
        pts, w, _ = _edge_points(mesh)
        return pts, w, mesh.face_normals_scaled
    rule = simplex_rule(2, 5)
    v = mesh.vertices[mesh.faces]
    pts = v[:, :1] + np.einsum("pj,fjd->fpd", rule.points, v[:, 1:] - v[:, :1])
    # weights refer to the reference triangle (area 1/2); scaled normal has length |F|
    return pts, 2.0 * rule.weights, mesh.face_normals_scaled


def _evaluate_flat(field, pts):
    shape = pts.shape
    fn = getattr(field, "value", field)
    return np.asarray(fn(pts.reshape(-1, shape[-1])), dtype=float).reshape(shape)


def canonical_interpolate(mesh, space, field) -> FEFunction:
    """Canonical interpolant; refuses fields singular on some mesh entity."""
    space = normalize_space(space)
    locus = getattr(field, "locus", None)
    if space == NEDELEC:
        entities = mesh.vertices[mesh.edges]
    else:
        entities = mesh.vertices[mesh.faces]
    if locus is not None:
        hits = locus.meets_many(entities)
        if hits.any():
            raise SingularTrace(
                f"field {field.name!r} is singular on {int(hits.sum())} mesh "
                f"{'edges' if space == NEDELEC else 'faces'}; use quasi-interpolation")
    if space == NEDELEC:
        pts, w, t = _edge_points(mesh)
        vals = _evaluate_flat(field, pts)
        coeffs = np.einsum("p,epd,ed->e", w, vals, t)
    else:
        pts, w, n = _face_points(mesh)
        vals = _evaluate_flat(field, pts)
        coeffs = np.einsum("p,fpd,fd->f", w, vals, n)
    return FEFunction(mesh, space, coeffs)


# ------------------------------------------------------- broken projection
def _cell_points(mesh, rule):
    v0 = mesh.vertices[mesh.cells[:, 0]]
    return v0[:, None, :] + np.einsum("kab,pb->kpa", mesh.jacobians, rule.points)


def evaluate_on_cells(field, mesh, rule, cells=None):
    """Field values at the mapped rule points of every (or the given) cell, ``(nc, np, d)``."""
    if cells is None:
        return _evaluate_flat(field, _cell_points(mesh, rule))
    v0 = mesh.vertices[mesh.cells[cells, 0]]
    pts = v0[:, None, :] + np.einsum("kab,pb->kpa", mesh.jacobians[cells], rule.points)
    return _evaluate_flat(field, pts)


def singular_entities(mesh, locus):
    """``{local vertex ids: cells}`` for cells with vertices on a field's singular locus."""
    if locus is None or locus.kind == "empty":
        return {}
    on = locus.on_locus(mesh.vertices, tol=1e-10)[mesh.cells]
    groups = {}
    for k in np.flatnonzero(on.any(axis=1)):
        ent = tuple(int(i) for i in np.flatnonzero(on[k]))
        if len(ent) <= mesh.dim:
            groups.setdefault(ent, []).append(k)
    return {e: np.asarray(c, dtype=np.int64) for e, c in sorted(groups.items())}


def quadrature_groups(mesh, degree, locus=None):
    """``[(cells, rule)]`` covering every cell once.

    Cells touching ``locus`` at a vertex or edge get a rule refined toward
    that entity; the rest share the plain simplex rule of the given degree.
    """
    special = singular_entities(mesh, locus)
    plain = np.ones(mesh.n_cells, dtype=bool)
    out = []
    for ent, cells in special.items():
        plain[cells] = False
        out.append((cells, singular_cell_rule(mesh.dim, ent, degree)))
    out.insert(0, (np.flatnonzero(plain), simplex_rule(mesh.dim, degree)))
    return out


def project_load(mesh, space, field, degree):
    """``int_K v . phi_i`` for all cells and local basis functions, ``(nc, n_loc)``."""
    dofmap, _, _, _ = dof_layout(mesh, space)
    out = np.zeros(dofmap.shape)
    for cells, rule in quadrature_groups(mesh, degree, getattr(field, "locus", None)):
        if len(cells) == 0:
            continue
        basis, _ = local_basis(mesh, space, rule.points, cells)
        w = rule.weights[None, :] * np.abs(mesh.det[cells])[:, None]
        vals = evaluate_on_cells(field, mesh, rule, cells)
        out[cells] = np.einsum("kp,kpia,kpa->ki", w, basis, vals)
    return out


def local_gram(mesh, space, degree=PROJECTION_DEGREE):
    rule = simplex_rule(mesh.dim, degree)
    basis, _ = local_basis(mesh, space, rule.points)
    w = rule.weights[None, :] * np.abs(mesh.det)[:, None]
    return np.einsum("kp,kpia,kpja->kij", w, basis, basis), basis, w, rule


def broken_project(mesh, space, field, degree=PROJECTION_DEGREE) -> BrokenFEFunction:
    """Cellwise L2 projection onto the broken Nedelec / RT space."""
    if degree < 4:
        raise ValueError("projection quadrature degree must be at least 4")
    space = normalize_space(space)
    gram, _, _, _ = local_gram(mesh, space, PROJECTION_DEGREE)
    rhs = project_load(mesh, space, field, degree)
    try:
        coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateCellError("singular local Gram matrix") from exc
    return BrokenFEFunction(mesh, space, coef)


def cell_mean(field, mesh, k, degree=8):
    """Mean value of ``field`` over cell ``k``."""
    rule = simplex_rule(mesh.dim, degree)
    v = mesh.vertices[mesh.cells[k]]
    pts = v[0] + rule.points @ mesh.jacobians[k].T
    vals = np.asarray(field.value(pts), dtype=float)
    return rule.weights @ vals / rule.weights.sum()


# ----------------------------------------------------------------- averaging
def average_dofs(broken: BrokenFEFunction, zero_boundary=False) -> FEFunction:
    """Equal-weight average of the per-cell canonical DOFs on each entity."""
    mesh = broken.mesh
    dofmap, signs, ndof, bmask = dof_layout(mesh, broken.space)
    # local bases are dual to the local DOFs, so the local DOFs are the coefficients
    contrib = (broken.local * signs).ravel()
    idx = dofmap.ravel()
    sums = np.bincount(idx, weights=contrib, minlength=ndof)
    counts = np.bincount(idx, minlength=ndof)
    coeffs = sums / counts
    if zero_boundary:
        coeffs[bmask] = 0.0
    return FEFunction(mesh, broken.space, coeffs, zero_boundary=zero_boundary)


def quasi_interpolate(mesh, space, field, zero_boundary=False,
                      degree=PROJECTION_DEGREE) -> FEFunction:
    return average_dofs(broken_project(mesh, space, field, degree), zero_boundary)


# ------------------------------------------------------- global projection
def assemble_global(local, dofmap, signs, ndof):
    """Sum signed local matrices into a global CSR matrix."""
    nc, n = dofmap.shape
    rows = np.repeat(dofmap, n, axis=1).ravel()
    cols = np.tile(dofmap, (1, n)).ravel()
    s = (signs[:, :, None] * signs[:, None, :]).astype(float)
    data = (local * s).ravel()
    return sp.coo_matrix((data, (rows, cols)), shape=(ndof, ndof)).tocsr()


def assemble_vector(local, dofmap, signs, ndof):
    return np.bincount(dofmap.ravel(), weights=(local * signs).ravel(), minlength=ndof)


def pcg(matrix, rhs, rtol=1e-10, maxiter=None, check_definite=False):
    """Jacobi-preconditioned CG.  Returns ``(x, iterations, relative residual)``.

    Raises :class:`SolverError` when the tolerance is not reached within
    ``maxiter`` (default ``10 * n``) iterations.
    """
    n = matrix.shape[0]
    if n == 0:
        return np.zeros(0), 0, 0.0
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    diag = matrix.diagonal()
    if np.any(diag <= 0.0):
        from .errors import IndefiniteSystemError
        raise IndefiniteSystemError("nonpositive diagonal entry", float(diag.min()))
    precond = sp.diags(1.0 / diag)
    maxiter = 10 * n if maxiter is None else maxiter
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = cg(matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond, callback=cb)
    res = float(np.linalg.norm(rhs - matrix @ x) / bnorm)
    if info != 0 or not np.isfinite(res) or res > 10.0 * rtol:
        raise SolverError(f"CG did not converge (residual {res:.3e} after {count[0]} iterations)",
                          residual=res, iterations=count[0])
    return x, count[0], res


def mass_matrix(mesh, space, degree=PROJECTION_DEGREE):
    gram, _, _, _ = local_gram(mesh, space, degree)
    dofmap, signs, ndof, _ = dof_layout(mesh, space)
    return assemble_global(gram, dofmap, signs, ndof)


def best_approximation_l2(mesh, space, field, zero_boundary=False, rtol=1e-10,
                          degree=LOAD_DEGREE) -> FEFunction:
    """Global L2 projection onto the conforming space (optionally with zero trace)."""
    space = normalize_space(space)
    dofmap, signs, ndof, bmask = dof_layout(mesh, space)
    gram, _, _, _ = local_gram(mesh, space, PROJECTION_DEGREE)
    local_rhs = project_load(mesh, space, field, degree)
    M = assemble_global(gram, dofmap, signs, ndof)
    b = assemble_vector(local_rhs, dofmap, signs, ndof)
    free = ~bmask if zero_boundary else np.ones(ndof, dtype=bool)
    coeffs = np.zeros(ndof)
    x, _, _ = pcg(M[free][:, free], b[free], rtol=rtol)
    coeffs[free] = x
    return FEFunction(mesh, space, coeffs, zero_boundary=zero_boundary)
