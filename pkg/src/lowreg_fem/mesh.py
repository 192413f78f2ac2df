"""Matching affine simplicial meshes: construction, red refinement, connectivity.

Cells are stored with ascending vertex indices; every edge and face is
oriented by its sorted vertex tuple (tangent from the lower to the higher
index, face normal by the right-hand rule on the sorted triple; in 2D the
face normal is the tangent rotated clockwise).  A separate vertex ordering
per cell (``ref_order``) remembers the Kuhn path order needed for
shape-preserving red refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateCellError

LOCAL_EDGES = {
    2: np.array([[0, 1], [0, 2], [1, 2]]),
    3: np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]),
}
# local face k is opposite local vertex k
LOCAL_FACES = {
    d: np.array([[j for j in range(d + 1) if j != k] for k in range(d + 1)]) for d in (2, 3)
}

# red refinement: children as indices into [x0..xd, midpoints in LOCAL_EDGES order]
_CHILDREN = {
    2: np.array([[0, 3, 4], [3, 1, 5], [4, 5, 2], [3, 4, 5]]),
    3: np.array([
        [0, 4, 5, 6], [4, 1, 7, 8], [5, 7, 2, 9], [6, 8, 9, 3],
        [4, 5, 6, 8], [4, 5, 7, 8], [5, 6, 8, 9], [5, 7, 8, 9],
    ]),
}


@dataclass(frozen=True)
class Domain:
    name: str
    dim: int
    volume: float
    diameter: float


@dataclass(frozen=True)
class Patch:
    anchor: int
    members: np.ndarray
    kind: str  # "edge" or "face"

    def __contains__(self, cell):
        return bool(np.any(self.members == cell))

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class BoundaryTags:
    faces: np.ndarray
    edges: np.ndarray
    vertices: np.ndarray


def _unique_rows(rows):
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


class SimplicialMesh:
    """Immutable matching simplicial mesh in 2D (triangles) or 3D (tetrahedra)."""

    def __init__(self, vertices, cells, domain: Optional[Domain] = None,
                 parent: Optional[np.ndarray] = None, level: int = 0):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        order = np.ascontiguousarray(cells, dtype=np.int64)
        dim = vertices.shape[1]
        if dim not in (2, 3) or order.shape[1] != dim + 1:
            raise ValueError("expected triangles in 2D or tetrahedra in 3D")
        self.dim = dim
        self.vertices = vertices
        self.ref_order = order
        self.cells = np.sort(order, axis=1)
        self.domain = domain
        self.parent = parent
        self.level = level
        for arr in (self.vertices, self.ref_order, self.cells):
            arr.setflags(write=False)
        self._build_geometry()
        self._build_topology()

    # ------------------------------------------------------------------ setup
    def _build_geometry(self):
        x = self.vertices[self.cells]                       # (nc, d+1, d)
        jac = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # columns = edge vectors
        det = np.linalg.det(jac)
        scale = np.max(np.abs(x - x.mean(axis=1, keepdims=True))) if len(x) else 1.0
        if np.any(np.abs(det) <= 1e-14 * scale ** self.dim):
            bad = int(np.argmin(np.abs(det)))
            raise DegenerateCellError(f"cell {bad} has zero volume")
        self.jacobians = jac
        self.det = det
        self.orientation = np.sign(det).astype(np.int8)
        self.volumes = np.abs(det) / math.factorial(self.dim)
        le = LOCAL_EDGES[self.dim]
        lengths = np.linalg.norm(x[:, le[:, 1]] - x[:, le[:, 0]], axis=-1)
        self.h_cells = lengths.max(axis=1)

    def _build_topology(self):
        d, nc = self.dim, len(self.cells)
        le = LOCAL_EDGES[d]
        edge_rows = self.cells[:, le].reshape(-1, 2)
        self.edges, inv = _unique_rows(edge_rows)
        self.cell_edges = inv.reshape(nc, len(le))
        # local tangent (low -> high local index) against the global tangent
        loc = self.cells[:, le]
        self.cell_edge_signs = np.sign(loc[:, :, 1] - loc[:, :, 0]).astype(np.int8)

        lf = LOCAL_FACES[d]
        face_rows = self.cells[:, lf].reshape(-1, d)
        faces, finv = _unique_rows(face_rows)
        if d == 2:
            # faces are the edges; reuse the edge numbering
            keys = faces[:, 0] * len(self.vertices) + faces[:, 1]
            ekeys = self.edges[:, 0] * len(self.vertices) + self.edges[:, 1]
            faces = self.edges
            finv = np.searchsorted(ekeys, keys)[finv]
        self.faces = faces
        self.cell_faces = finv.reshape(nc, d + 1)

        nf = len(self.faces)
        counts = np.bincount(self.cell_faces.ravel(), minlength=nf)
        if np.any(counts > 2):
            raise ValueError("non-matching mesh: a face is shared by more than two cells")
        # face -> (K-, K+) sorted by cell id; K+ = -1 on the boundary
        flat_cells = np.repeat(np.arange(nc), d + 1)
        flat_local = np.tile(np.arange(d + 1), nc)
        order = np.lexsort((flat_cells, self.cell_faces.ravel()))
        fsorted = self.cell_faces.ravel()[order]
        first = np.r_[True, fsorted[1:] != fsorted[:-1]]
        self.face_cells = -np.ones((nf, 2), dtype=np.int64)
        self.face_local = -np.ones((nf, 2), dtype=np.int64)
        slot = np.where(first, 0, 1)
        self.face_cells[fsorted, slot] = flat_cells[order]
        self.face_local[fsorted, slot] = flat_local[order]

        self.boundary_faces = self.face_cells[:, 1] < 0
        if d == 2:
            self.boundary_edges = self.boundary_faces.copy()
        else:
            self.boundary_edges = np.zeros(len(self.edges), dtype=bool)
            bf = self.faces[self.boundary_faces]
            if len(bf):
                pairs = np.vstack([bf[:, [0, 1]], bf[:, [0, 2]], bf[:, [1, 2]]])
                keys = pairs[:, 0] * len(self.vertices) + pairs[:, 1]
                ekeys = self.edges[:, 0] * len(self.vertices) + self.edges[:, 1]
                self.boundary_edges[np.searchsorted(ekeys, keys)] = True
        self.boundary_vertices = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_vertices[self.faces[self.boundary_faces].ravel()] = True

        # outward normal of each local face against the global face normal
        normals = self.face_normals_unit
        outward = self._outward_normals()
        glob = normals[self.cell_faces]
        self.cell_face_signs = np.sign(np.einsum("kfd,kfd->kf", glob, outward)).astype(np.int8)

    # -------------------------------------------------------------- geometry
    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def h(self):
        return float(self.h_cells.max())

    @cached_property
    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def inverse_jacobians(self):
        return np.linalg.inv(self.jacobians)

    @cached_property
    def edge_tangents(self):
        """Unnormalised global tangents ``x_high - x_low``."""
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @cached_property
    def edge_lengths(self):
        return np.linalg.norm(self.edge_tangents, axis=1)

    @cached_property
    def face_normals_scaled(self):
        """Global face normals with length equal to the face measure."""
        v = self.vertices[self.faces]
        if self.dim == 2:
            t = v[:, 1] - v[:, 0]
            return np.stack([t[:, 1], -t[:, 0]], axis=1)
        return 0.5 * np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    @cached_property
    def face_areas(self):
        return np.linalg.norm(self.face_normals_scaled, axis=1)

    @cached_property
    def face_normals_unit(self):
        return self.face_normals_scaled / self.face_areas[:, None]

    @cached_property
    def face_diameters(self):
        v = self.vertices[self.faces]
        diam = np.zeros(len(v))
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                diam = np.maximum(diam, np.linalg.norm(v[:, i] - v[:, j], axis=1))
        return diam

    def _outward_normals(self):
        x = self.vertices[self.cells]
        lf = LOCAL_FACES[self.dim]
        out = np.empty((self.n_cells, self.dim + 1, self.dim))
        for k in range(self.dim + 1):
            v = x[:, lf[k]]
            if self.dim == 2:
                t = v[:, 1] - v[:, 0]
                n = np.stack([t[:, 1], -t[:, 0]], axis=1)
            else:
                n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
            flip = np.einsum("kd,kd->k", n, x[:, k] - v[:, 0]) > 0
            n[flip] *= -1.0
            out[:, k] = n / np.linalg.norm(n, axis=1, keepdims=True)
        return out

    @cached_property
    def outward_normals(self):
        """Unit outward normals, shape (n_cells, d+1, d), face k opposite vertex k."""
        return self._outward_normals()

    @cached_property
    def inradii(self):
        x = self.vertices[self.cells]
        lf = LOCAL_FACES[self.dim]
        surface = np.zeros(self.n_cells)
        for k in range(self.dim + 1):
            v = x[:, lf[k]]
            if self.dim == 2:
                surface += np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
            else:
                surface += 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
        return self.dim * self.volumes / surface

    @property
    def total_volume(self):
        return float(self.volumes.sum())

    @property
    def domain_diameter(self):
        if self.domain is not None:
            return self.domain.diameter
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # -------------------------------------------------------------- incidence
    @cached_property
    def cell_edge_matrix(self):
        nc, ne_loc = self.cell_edges.shape
        rows = np.repeat(np.arange(nc), ne_loc)
        return sp.csr_matrix((np.ones(rows.size, dtype=np.int64), (rows, self.cell_edges.ravel())),
                             shape=(nc, self.n_edges))

    @cached_property
    def cell_face_matrix(self):
        nc, nf_loc = self.cell_faces.shape
        rows = np.repeat(np.arange(nc), nf_loc)
        return sp.csr_matrix((np.ones(rows.size, dtype=np.int64), (rows, self.cell_faces.ravel())),
                             shape=(nc, self.n_faces))

    @cached_property
    def _edge_cell_csr(self):
        return self.cell_edge_matrix.T.tocsr()

    def edge_cells(self, e):
        m = self._edge_cell_csr
        return m.indices[m.indptr[e]:m.indptr[e + 1]].copy()

    def face_cells_of(self, f):
        c = self.face_cells[f]
        return c[c >= 0]

    @cached_property
    def edge_adjacency(self):
        """Boolean cell-by-cell matrix: cells sharing at least one edge (incl. self)."""
        a = (self.cell_edge_matrix @ self.cell_edge_matrix.T).tocsr()
        a.data[:] = 1
        a.sort_indices()
        return a

    @cached_property
    def face_adjacency(self):
        a = (self.cell_face_matrix @ self.cell_face_matrix.T).tocsr()
        a.data[:] = 1
        a.sort_indices()
        return a

    def _check_cell(self, k):
        if not (isinstance(k, (int, np.integer)) and 0 <= k < self.n_cells):
            raise IndexError(f"invalid cell id {k!r}")

    def __repr__(self):
        name = self.domain.name if self.domain else "mesh"
        return (f"SimplicialMesh({name}, dim={self.dim}, cells={self.n_cells}, "
                f"vertices={self.n_vertices}, h={self.h:.4g})")


def edge_patch(mesh: SimplicialMesh, k) -> Patch:
    """Cells sharing at least one edge with cell ``k`` (including ``k``)."""
    mesh._check_cell(k)
    a = mesh.edge_adjacency
    return Patch(int(k), a.indices[a.indptr[k]:a.indptr[k + 1]].copy(), "edge")


def face_patch(mesh: SimplicialMesh, k) -> Patch:
    """Cells sharing at least one face with cell ``k`` (including ``k``)."""
    mesh._check_cell(k)
    a = mesh.face_adjacency
    return Patch(int(k), a.indices[a.indptr[k]:a.indptr[k + 1]].copy(), "face")


def classify_boundary(mesh: SimplicialMesh) -> BoundaryTags:
    return BoundaryTags(np.flatnonzero(mesh.boundary_faces),
                        np.flatnonzero(mesh.boundary_edges),
                        np.flatnonzero(mesh.boundary_vertices))


def shape_regularity(mesh: SimplicialMesh) -> float:
    """max_K h_K / rho_K with rho_K the inradius."""
    return float(np.max(mesh.h_cells / mesh.inradii))


# ------------------------------------------------------------------ builders
def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")


def _kuhn_grid(lower, spacing, shape, keep):
    """Kuhn-split boxes of a structured grid; ``keep(centres)`` masks boxes."""
    dim = len(shape)
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), -1).reshape(-1, dim)
    centres = lower + (idx + 0.5) * spacing
    idx = idx[keep(centres)]
    npts = np.array(shape) + 1
    strides = np.cumprod(np.r_[1, npts[:-1]])
    cells = []
    for perm in permutations(range(dim)):
        path = [idx.copy()]
        cur = idx.copy()
        for axis in perm:
            cur = cur.copy()
            cur[:, axis] += 1
            path.append(cur)
        cells.append(np.stack([p @ strides for p in path], axis=1))
    # interleave so the d! simplices of one box are consecutive
    cells = np.stack(cells, axis=1).reshape(-1, dim + 1)
    used, inverse = np.unique(cells, return_inverse=True)
    pts = np.empty((len(used), dim))
    rem = used.copy()
    for axis in range(dim - 1, -1, -1):
        pts[:, axis] = rem // strides[axis]
        rem = rem % strides[axis]
    vertices = lower + pts * spacing
    return vertices, inverse.reshape(cells.shape)


def build_unit_cube_mesh(n) -> SimplicialMesh:
    """Kuhn subdivision of (0,1)^3 into 6 n^3 tetrahedra."""
    _check_n(n)
    v, c = _kuhn_grid(np.zeros(3), 1.0 / n, (n, n, n), lambda x: np.ones(len(x), dtype=bool))
    return SimplicialMesh(v, c, Domain("cube", 3, 1.0, math.sqrt(3.0)))


def build_unit_square_mesh(n) -> SimplicialMesh:
    _check_n(n)
    v, c = _kuhn_grid(np.zeros(2), 1.0 / n, (n, n), lambda x: np.ones(len(x), dtype=bool))
    return SimplicialMesh(v, c, Domain("square", 2, 1.0, math.sqrt(2.0)))


def _outside_quadrant(x):
    return ~((x[:, 0] > 0) & (x[:, 1] < 0))


def build_lshape_mesh(n) -> SimplicialMesh:
    """(-1,1)^2 minus [0,1)x(-1,0], re-entrant corner at the origin."""
    _check_n(n)
    v, c = _kuhn_grid(np.array([-1.0, -1.0]), 1.0 / n, (2 * n, 2 * n), _outside_quadrant)
    return SimplicialMesh(v, c, Domain("lshape", 2, 3.0, 2.0 * math.sqrt(2.0)))


def build_lprism_mesh(n) -> SimplicialMesh:
    """L-shape x (0,1); the re-entrant edge is the segment x = y = 0."""
    _check_n(n)
    v, c = _kuhn_grid(np.array([-1.0, -1.0, 0.0]), 1.0 / n, (2 * n, 2 * n, n), _outside_quadrant)
    return SimplicialMesh(v, c, Domain("lprism", 3, 3.0, 3.0))


def build_fichera_mesh(n) -> SimplicialMesh:
    """(-1,1)^3 minus [0,1)^3, re-entrant corner at the origin."""
    _check_n(n)
    keep = lambda x: ~np.all(x > 0, axis=1)  # noqa: E731
    v, c = _kuhn_grid(-np.ones(3), 1.0 / n, (2 * n,) * 3, keep)
    return SimplicialMesh(v, c, Domain("fichera", 3, 7.0, 2.0 * math.sqrt(3.0)))


DOMAIN_BUILDERS = {
    "cube": build_unit_cube_mesh,
    "square": build_unit_square_mesh,
    "lshape": build_lshape_mesh,
    "lprism": build_lprism_mesh,
    "fichera": build_fichera_mesh,
}


def build_mesh(name, n) -> SimplicialMesh:
    try:
        builder = DOMAIN_BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; choose from {sorted(DOMAIN_BUILDERS)}") from None
    return builder(n)


# ---------------------------------------------------------------- refinement
def uniform_refine(mesh: SimplicialMesh) -> SimplicialMesh:
    """Red refinement (4 triangles / 8 tetrahedra per cell, Bey's ordering)."""
    d = mesh.dim
    nv = mesh.n_vertices
    order = mesh.ref_order
    le = LOCAL_EDGES[d]
    a = order[:, le[:, 0]]
    b = order[:, le[:, 1]]
    keys = np.minimum(a, b) * nv + np.maximum(a, b)
    ekeys = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
    mid = nv + np.searchsorted(ekeys, keys)
    ext = np.hstack([order, mid])
    children = ext[:, _CHILDREN[d]].reshape(-1, d + 1)
    verts = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])])
    parent = np.repeat(np.arange(mesh.n_cells), len(_CHILDREN[d]))
    return SimplicialMesh(verts, children, mesh.domain, parent=parent, level=mesh.level + 1)


def refine_n(mesh: SimplicialMesh, times: int) -> SimplicialMesh:
    for _ in range(times):
        mesh = uniform_refine(mesh)
    return mesh


# --------------------------------------------------------------------- export
_VTK_TYPES = {2: 5, 3: 10}


def write_vtk(mesh: SimplicialMesh, path, cell_vectors=None, cell_scalars=None, title="lowreg_fem"):
    """Write a legacy ASCII VTK unstructured grid with optional cell data."""
    pts = mesh.vertices
    if mesh.dim == 2:
        pts = np.hstack([pts, np.zeros((len(pts), 1))])
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [" ".join(f"{c:.16g}" for c in p) for p in pts]
    k = mesh.dim + 1
    lines.append(f"CELLS {mesh.n_cells} {mesh.n_cells * (k + 1)}")
    lines += [f"{k} " + " ".join(map(str, c)) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [str(_VTK_TYPES[mesh.dim])] * mesh.n_cells
    data = []
    for name, vals in (cell_scalars or {}).items():
        vals = np.asarray(vals, dtype=float)
        data += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        data += [f"{v:.16g}" for v in vals]
    for name, vals in (cell_vectors or {}).items():
        vals = np.asarray(vals, dtype=float)
        if vals.shape[1] == 2:
            vals = np.hstack([vals, np.zeros((len(vals), 1))])
        data.append(f"VECTORS {name} double")
        data += [" ".join(f"{c:.16g}" for c in v) for v in vals]
    if data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        lines += data
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
