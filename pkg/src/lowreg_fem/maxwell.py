"""Curl-curl problem ``nu A + rot(kappa rot A) = f`` with zero tangential trace.

Two discretizations with lowest-order Nedelec elements: boundary DOFs
eliminated (``strong``) and a symmetric Nitsche penalty (``nitsche``) with
``lambda_F = kappa`` of the adjacent cell and penalty ``eta0 lambda_F / h_F``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .elements import element_mass_curl, nedelec0_eval
from .errors import IndefiniteSystemError, SolverError
from .interpolation import (
    NEDELEC,
    FEFunction,
    assemble_global,
    assemble_vector,
    evaluate_on_cells,
    local_basis,
    pcg,
)
from .mesh import write_vtk
from .norms import check_q, derivative_error_cells, hcurl_norm, l2_error_cells
from .quadrature import gauss_legendre01, simplex_rule

LOAD_DEGREE = 6
DEFAULT_ETA0 = 10.0
# Lanczos gets slow past this size; larger systems only get the CG convergence check
DEFINITENESS_CHECK_LIMIT = 5000
_DENSE_EIG_LIMIT = 2500


@dataclass(frozen=True)
class Subdomain:
    lower: tuple
    upper: tuple
    nu: float
    kappa: float

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.all((x >= np.asarray(self.lower) - 1e-14) & (x <= np.asarray(self.upper) + 1e-14),
                      axis=1)


@dataclass
class CoefficientPartition:
    """Piecewise-constant ``(nu, kappa)`` on axis-aligned boxes.

    Points outside every box get ``(nu_default, kappa_default)``; the first
    matching box wins.  Cells are classified by their centroid.
    """

    subdomains: Sequence[Subdomain] = ()
    nu_default: float = 1.0
    kappa_default: float = 1.0

    def __post_init__(self):
        self.subdomains = tuple(
            s if isinstance(s, Subdomain) else Subdomain(tuple(s[0]), tuple(s[1]), float(s[2]), float(s[3]))
            for s in self.subdomains)
        values = [self.nu_default, self.kappa_default]
        for s in self.subdomains:
            values += [s.nu, s.kappa]
        if min(values) <= 0.0:
            raise ValueError("coefficients must be positive")

    @classmethod
    def constant(cls, nu=1.0, kappa=1.0):
        return cls((), float(nu), float(kappa))

    @classmethod
    def from_dict(cls, data):
        if data is None:
            return cls()
        subs = [Subdomain(tuple(s["lower"]), tuple(s["upper"]), float(s["nu"]), float(s["kappa"]))
                for s in data.get("subdomains", [])]
        return cls(subs, float(data.get("nu", 1.0)), float(data.get("kappa", 1.0)))

    def lookup(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nu = np.full(len(x), self.nu_default)
        kappa = np.full(len(x), self.kappa_default)
        done = np.zeros(len(x), dtype=bool)
        for s in self.subdomains:
            hit = s.contains(x) & ~done
            nu[hit], kappa[hit] = s.nu, s.kappa
            done |= hit
        return nu, kappa

    def cell_values(self, mesh):
        return self.lookup(mesh.centroids)

    @property
    def nu_min(self):
        return min([self.nu_default] + [s.nu for s in self.subdomains])

    @property
    def kappa_min(self):
        return min([self.kappa_default] + [s.kappa for s in self.subdomains])

    @property
    def nu_max(self):
        return max([self.nu_default] + [s.nu for s in self.subdomains])

    @property
    def kappa_max(self):
        return max([self.kappa_default] + [s.kappa for s in self.subdomains])


@dataclass
class CurlCurlSystem:
    mesh: object
    coeffs: CoefficientPartition
    matrix: sp.csr_matrix            # reduced (strong) or full (nitsche)
    rhs: np.ndarray
    free: np.ndarray                 # global DOFs carried by ``matrix``
    ndof: int
    bc_mode: str
    eta0: Optional[float] = None
    lambda_f: Optional[np.ndarray] = None   # per boundary face (nitsche)
    info: dict = dc_field(default_factory=dict)


# ------------------------------------------------------------- assembly
def _load_vector(mesh, f, degree=LOAD_DEGREE):
    rule = simplex_rule(mesh.dim, degree)
    basis, _ = local_basis(mesh, NEDELEC, rule.points)
    vals = evaluate_on_cells(f, mesh, rule)
    w = rule.weights[None, :] * np.abs(mesh.det)[:, None]
    local = np.einsum("kp,kpia,kpa->ki", w, basis, vals)
    return assemble_vector(local, mesh.cell_edges, mesh.cell_edge_signs, mesh.n_edges)


def _full_operator(mesh, coeffs, degree=4):
    nu, kappa = coeffs.cell_values(mesh)
    mass, cc = element_mass_curl(mesh, nu, kappa, degree)
    return assemble_global(mass + cc, mesh.cell_edges, mesh.cell_edge_signs, mesh.n_edges)


def manufactured_source(field, coeffs):
    """``f = nu A + kappa rot rot A`` for piecewise-constant coefficients."""
    if field.curl_curl is None:
        raise ValueError(f"field {field.name!r} has no curl-curl evaluator")

    def f(x):
        nu, kappa = coeffs.lookup(x)
        return nu[:, None] * field.value(x) + kappa[:, None] * field.curl_curl(x)

    return f


def assemble_strong(mesh, coeffs, f, degree=4, load_degree=LOAD_DEGREE) -> CurlCurlSystem:
    """Galerkin system on the Nedelec space with zero boundary DOFs (eliminated)."""
    A = _full_operator(mesh, coeffs, degree)
    b = _load_vector(mesh, f, load_degree)
    free = np.flatnonzero(~mesh.boundary_edges)
    return CurlCurlSystem(mesh, coeffs, A[free][:, free].tocsr(), b[free], free,
                          mesh.n_edges, "strong")


def _boundary_face_data(mesh, n_quad=4):
    """Face quadrature of the Nedelec basis of the cell adjacent to each boundary face."""
    bf = np.flatnonzero(mesh.boundary_faces)
    cells = mesh.face_cells[bf, 0]
    local = mesh.face_local[bf, 0]
    d = mesh.dim
    if d == 2:
        s, w = gauss_legendre01(3)
        fbary = np.stack([1.0 - s, s], axis=1)
    else:
        rule = simplex_rule(2, n_quad)
        fbary = np.hstack([1.0 - rule.points.sum(axis=1, keepdims=True), rule.points])
        w = 2.0 * rule.weights
    npt = len(w)
    # cell barycentric coordinates: zero on the local vertex opposite the face
    cb = np.zeros((len(bf), npt, d + 1))
    others = np.array([[j for j in range(d + 1) if j != k] for k in range(d + 1)])
    rows = np.arange(len(bf))[:, None, None]
    cb[rows, np.arange(npt)[None, :, None], others[local][:, None, :]] = fbary[None]
    ref = cb[..., 1:].reshape(-1, d)
    vals, _ = nedelec0_eval(np.clip(ref, 0.0, 1.0), d)
    vals = vals.reshape(len(bf), npt, -1, d)
    jit = np.transpose(mesh.inverse_jacobians[cells], (0, 2, 1))
    phi = np.einsum("fab,fpib->fpia", jit, vals)
    _, curls = local_basis(mesh, NEDELEC, np.full((1, d), 1.0 / (d + 1)))
    curls = curls[cells]
    n = mesh.outward_normals[cells, local]
    return bf, cells, phi, curls, n, w * mesh.face_areas[bf][:, None]


def _tangential(v, n):
    """``v x n``: vector in 3D, scalar ``v1 n2 - v2 n1`` in 2D (trailing axis kept)."""
    if v.shape[-1] == 3:
        return np.cross(v, n)
    return (v[..., 0] * n[..., 1] - v[..., 1] * n[..., 0])[..., None]


def nitsche_face_matrices(mesh, coeffs, eta0):
    """Local consistency ``N`` and penalty ``S`` matrices on boundary faces."""
    bf, cells, phi, curls, n, w = _boundary_face_data(mesh)
    _, kappa = coeffs.cell_values(mesh)
    kap = kappa[cells]
    nb = n[:, None, None, :]
    tphi = _tangential(phi, np.broadcast_to(nb, phi.shape))        # (f, p, i, t)
    # n x phi_i = -(phi_i x n); n_h(a, b) = int kappa rot a . (n x b)
    nxphi = -tphi
    if mesh.dim == 3:
        N = np.einsum("f,fp,fja,fpia->fij", kap, w, curls, nxphi)
    else:
        N = np.einsum("f,fp,fj,fpi->fij", kap, w, curls, nxphi[..., 0])
    lam = kap
    pen = eta0 * lam / mesh.face_diameters[bf]
    S = np.einsum("f,fp,fpia,fpja->fij", pen, w, tphi, tphi)
    return bf, cells, N, S, lam


def assemble_nitsche(mesh, coeffs, f, eta0=DEFAULT_ETA0, degree=4,
                     load_degree=LOAD_DEGREE) -> CurlCurlSystem:
    """``a - n_h - n_h^T + s_h`` on the full Nedelec space."""
    if not eta0 > 0.0:
        raise ValueError("eta0 must be positive")
    A = _full_operator(mesh, coeffs, degree)
    bf, cells, N, S, lam = nitsche_face_matrices(mesh, coeffs, eta0)
    face_local = S - N - np.transpose(N, (0, 2, 1))
    A = A + assemble_global(face_local, mesh.cell_edges[cells], mesh.cell_edge_signs[cells],
                            mesh.n_edges)
    A = ((A + A.T) * 0.5).tocsr()
    b = _load_vector(mesh, f, load_degree)
    free = np.arange(mesh.n_edges)
    return CurlCurlSystem(mesh, coeffs, A, b, free, mesh.n_edges, "nitsche",
                          eta0=float(eta0), lambda_f=lam)


# ------------------------------------------------------------- spectra
def min_rayleigh_quotient(matrix, normalized=True):
    """Smallest eigenvalue of the symmetric matrix (of ``D^{-1/2} A D^{-1/2}`` by default).

    Dense for small systems; otherwise Lanczos on the shifted operator.
    """
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    if n == 0:
        return math.inf
    if normalized:
        d = np.abs(A.diagonal())
        d[d == 0.0] = 1.0
        s = sp.diags(1.0 / np.sqrt(d))
        A = (s @ A @ s).tocsr()
    if n <= _DENSE_EIG_LIMIT:
        return float(sla.eigvalsh(A.toarray(), subset_by_index=[0, 0])[0])
    top = float(eigsh(A, k=1, which="LA", return_eigenvectors=False, tol=1e-8)[0])
    shifted = (top * sp.identity(n) - A).tocsr()
    val = float(eigsh(shifted, k=1, which="LA", return_eigenvectors=False, tol=1e-10)[0])
    return top - val


def solve(system: CurlCurlSystem, tol=1e-10, check_definite=None) -> FEFunction:
    """Diagonally preconditioned CG; iteration count and residual go to ``system.info``.

    Nitsche systems with at most ``DEFINITENESS_CHECK_LIMIT`` unknowns are checked
    for positive definiteness first, since CG on an indefinite matrix may stall
    silently.  Pass ``check_definite`` explicitly to force or skip the check.
    """
    if check_definite is None:
        check_definite = system.bc_mode == "nitsche" and system.matrix.shape[0] <= DEFINITENESS_CHECK_LIMIT
    if check_definite:
        lam = min_rayleigh_quotient(system.matrix)
        system.info["min_rayleigh"] = lam
        if lam <= 0.0:
            raise IndefiniteSystemError(
                f"system matrix is not positive definite (min eigenvalue {lam:.3e}); "
                "increase eta0", lam)
    try:
        x, iters, res = pcg(system.matrix, system.rhs, rtol=tol)
    except SolverError as exc:
        system.info.update(iterations=exc.iterations, residual=exc.residual)
        raise
    system.info.update(iterations=iters, residual=res)
    coeffs = np.zeros(system.ndof)
    coeffs[system.free] = x
    return FEFunction(system.mesh, NEDELEC, coeffs, zero_boundary=system.bc_mode == "strong")


# ------------------------------------------------------------- errors
def form_with_field(mesh, coeffs, field, degree=LOAD_DEGREE):
    """``a(A, phi_i)`` for every global Nedelec basis function, by quadrature."""
    rule = simplex_rule(mesh.dim, degree)
    basis, curls = local_basis(mesh, NEDELEC, rule.points)
    nu, kappa = coeffs.cell_values(mesh)
    vals = evaluate_on_cells(field, mesh, rule)
    pts_curl = _flat_eval(field.curl, mesh, rule)
    w = rule.weights[None, :] * np.abs(mesh.det)[:, None]
    local = nu[:, None] * np.einsum("kp,kpia,kpa->ki", w, basis, vals)
    if mesh.dim == 3:
        local += kappa[:, None] * np.einsum("kp,kia,kpa->ki", w, curls, pts_curl)
    else:
        local += kappa[:, None] * np.einsum("kp,ki,kp->ki", w, curls, pts_curl[..., 0])
    return assemble_vector(local, mesh.cell_edges, mesh.cell_edge_signs, mesh.n_edges)


def _flat_eval(fn, mesh, rule):
    v0 = mesh.vertices[mesh.cells[:, 0]]
    pts = v0[:, None, :] + np.einsum("kab,pb->kpa", mesh.jacobians, rule.points)
    nc, npt, d = pts.shape
    return np.asarray(fn(pts.reshape(-1, d)), dtype=float).reshape(nc, npt, -1)


def residual_exponent(dim, q):
    """``2d((d+2)/(2d) - 1/q)`` (equal to 2 for ``d = 3, q = 2``)."""
    return 2.0 * dim * ((dim + 2.0) / (2.0 * dim) - 1.0 / q)


def maxwell_errors(solution: FEFunction, exact_field, coeffs=None, f=None, q=2.0,
                   degree=LOAD_DEGREE):
    """``(L2 error, H(curl) error, table)``.

    ``table`` holds per-cell squared ``L2`` and curl errors and, when ``f`` is
    given, the boundary-face residual terms
    ``h_K^{2d((d+2)/(2d)-1/q)} ||f - nu A_h||^2_{L^q(K)}`` of the adjacent cells.
    """
    mesh = solution.mesh
    e0 = l2_error_cells(exact_field, solution, degree) ** 2
    e1 = derivative_error_cells(exact_field, solution, degree) ** 2
    l2 = math.sqrt(np.sum(e0))
    hc = hcurl_norm(l2, math.sqrt(np.sum(e1)), mesh.domain_diameter)
    table = {"l2_sq": e0, "curl_sq": e1}
    if f is not None:
        q = check_q(q, mesh.dim)
        coeffs = coeffs or CoefficientPartition()
        bf = np.flatnonzero(mesh.boundary_faces)
        cells = mesh.face_cells[bf, 0]
        rule = simplex_rule(mesh.dim, degree)
        fv = _flat_eval(f, mesh, rule)[cells]
        nu, _ = coeffs.cell_values(mesh)
        ah = solution.evaluate_ref(rule.points)[cells]
        r = fv - nu[cells, None, None] * ah
        mag = np.sqrt(np.einsum("kpa,kpa->kp", r, r))
        w = rule.weights[None, :] * np.abs(mesh.det[cells])[:, None]
        lq = np.einsum("kp,kp->k", w, mag ** q) ** (1.0 / q)
        table["boundary_faces"] = bf
        table["residual"] = mesh.h_cells[cells] ** residual_exponent(mesh.dim, q) * lq ** 2
    return l2, hc, table


def export_vtk(solution: FEFunction, path, title="curl-curl solution"):
    """Legacy VTK with the cell-averaged solution and its curl."""
    mesh = solution.mesh
    avg = solution.evaluate_ref(np.full((1, mesh.dim), 1.0 / (mesh.dim + 1)))[:, 0, :]
    curl = solution.derivative()
    scalars = {} if curl.ndim == 2 else {"rot": curl}
    vectors = {"A_h": avg}
    if curl.ndim == 2:
        vectors["curl_A_h"] = curl
    write_vtk(mesh, path, cell_vectors=vectors, cell_scalars=scalars, title=title)
