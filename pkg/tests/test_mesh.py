import math

import numpy as np
import pytest

from lowreg_fem.errors import DegenerateCellError
from lowreg_fem.mesh import (
    SimplicialMesh,
    build_fichera_mesh,
    build_lprism_mesh,
    build_lshape_mesh,
    build_mesh,
    build_unit_cube_mesh,
    classify_boundary,
    edge_patch,
    face_patch,
    refine_n,
    shape_regularity,
    uniform_refine,
    write_vtk,
)


def test_cube_n1_counts():
    m = build_unit_cube_mesh(1)
    assert (m.n_cells, m.n_vertices, m.n_edges, m.n_faces) == (6, 8, 19, 18)
    assert classify_boundary(m).faces.size == 12


def test_cube_cell_count_scales():
    assert build_unit_cube_mesh(2).n_cells == 48
    assert build_unit_cube_mesh(3).n_cells == 162


@pytest.mark.parametrize("n", [0, -1, 1.5])
def test_bad_subdivision_rejected(n):
    with pytest.raises(ValueError):
        build_unit_cube_mesh(n)


def test_nonconvex_domain_counts():
    assert build_lshape_mesh(1).n_cells == 6
    assert build_lprism_mesh(1).n_cells == 18
    assert build_fichera_mesh(1).n_cells == 42
    with pytest.raises(ValueError):
        build_mesh("torus", 1)


@pytest.mark.parametrize("name,volume", [("cube", 1.0), ("square", 1.0), ("lshape", 3.0),
                                         ("lprism", 3.0), ("fichera", 7.0)])
def test_volumes_sum_to_domain_volume(name, volume):
    m = uniform_refine(build_mesh(name, 1))
    assert abs(m.volumes.sum() - volume) <= 1e-12 * volume


@pytest.mark.parametrize("name", ["cube", "lshape", "lprism", "fichera"])
def test_face_sharing(name):
    m = uniform_refine(build_mesh(name, 1))
    counts = np.bincount(m.cell_faces.ravel(), minlength=m.n_faces)
    assert set(np.unique(counts)) <= {1, 2}
    np.testing.assert_array_equal(counts == 1, m.boundary_faces)


def test_entities_sorted_and_cells_sorted():
    m = uniform_refine(build_lprism_mesh(1))
    assert np.all(np.diff(m.cells, axis=1) > 0)
    assert np.all(m.edges[:, 0] < m.edges[:, 1])
    assert np.all(np.diff(m.faces, axis=1) > 0)
    assert np.all(m.cell_edge_signs == 1)


def test_incidence_round_trip():
    m = uniform_refine(build_unit_cube_mesh(1))
    for e in range(m.n_edges):
        for k in m.edge_cells(e):
            assert e in m.cell_edges[k]
    for k in range(m.n_cells):
        for e in m.cell_edges[k]:
            assert k in m.edge_cells(e)
    for f in range(m.n_faces):
        for k in m.face_cells_of(f):
            assert f in m.cell_faces[k]


def test_cube_surface_euler_characteristic():
    m = build_unit_cube_mesh(3)
    tags = classify_boundary(m)
    chi = tags.vertices.size - tags.edges.size + tags.faces.size
    assert chi == 2


def test_refinement_halves_h_and_keeps_shape():
    for builder in (build_unit_cube_mesh, build_lshape_mesh, build_lprism_mesh):
        m = builder(1)
        ratios = [shape_regularity(m)]
        for _ in range(2):
            child = uniform_refine(m)
            assert child.n_cells == (2 ** m.dim) * m.n_cells
            assert child.h <= 0.5 * m.h + 1e-14
            m = child
            ratios.append(shape_regularity(m))
        assert max(ratios) <= ratios[0] * 1.01


def test_refinement_is_matching():
    # matching meshes give 2 cells per interior face, so a refined non-matching
    # mesh would show faces used once in the interior
    m = refine_n(build_unit_cube_mesh(1), 2)
    interior = ~m.boundary_faces
    centroids = m.vertices[m.faces].mean(axis=1)
    on_surface = np.any((centroids < 1e-12) | (centroids > 1 - 1e-12), axis=1)
    np.testing.assert_array_equal(interior, ~on_surface)


def test_equilateral_shape_ratio():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    m = SimplicialMesh(v, [[0, 1, 2]])
    assert shape_regularity(m) == pytest.approx(2 * math.sqrt(3), rel=1e-12)


def test_degenerate_cell_rejected():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateCellError):
        SimplicialMesh(v, [[0, 1, 2]])


def test_patches():
    m = build_unit_cube_mesh(1)
    # every Kuhn tet contains the main diagonal
    for k in range(6):
        assert sorted(edge_patch(m, k).members) == list(range(6))
    r = refine_n(m, 2)
    for k in range(r.n_cells):
        fp, ep = face_patch(r, k), edge_patch(r, k)
        assert k in fp and set(fp.members) <= set(ep.members)
        n_interior = int(np.sum(~r.boundary_faces[r.cell_faces[k]]))
        assert len(fp) == n_interior + 1
    with pytest.raises(IndexError):
        edge_patch(m, 6)


def test_patch_membership_count_bounded():
    counts = []
    m = build_lprism_mesh(1)
    for _ in range(3):
        adj = m.edge_adjacency
        counts.append(int(np.diff(adj.tocsc().indptr).max()))
        m = uniform_refine(m)
    assert counts[-1] <= counts[-2] + 2


def test_outward_normals_point_out():
    m = uniform_refine(build_lprism_mesh(1))
    n = m.outward_normals                       # (nc, d+1, d)
    opp = m.vertices[m.cells]                    # local face k is opposite vertex k
    fc = m.vertices[m.faces[m.cell_faces]].mean(axis=2)
    assert np.all(np.einsum("kfd,kfd->kf", n, fc - opp) > 0)


def test_vtk_export(tmp_path):
    m = build_unit_cube_mesh(1)
    p = tmp_path / "m.vtk"
    write_vtk(m, p, cell_scalars={"vol": m.volumes})
    text = p.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert "CELLS 6 30" in text
