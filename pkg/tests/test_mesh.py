"""Mesh geometry, facet topology and initial meshes."""

import itertools
from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quasidiag import (
    SimplicialMesh,
    boundary_measure,
    enumerate_facets,
    facet_measure,
    initial_mesh,
    load_mesh,
    mesh_quality,
    save_mesh,
    simplex_volume,
    validate_mesh,
)
from quasidiag.errors import (
    DegenerateSimplex,
    DimensionError,
    NonManifoldMesh,
    UnsupportedDimension,
)


def cayley_menger_measure(points):
    """Independent k-simplex measure from squared distances only."""
    points = np.asarray(points, dtype=float)
    k = points.shape[0] - 1
    m = points.shape[0]
    sq = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    bordered = np.ones((m + 1, m + 1))
    bordered[0, 0] = 0.0
    bordered[1:, 1:] = sq
    det = np.linalg.det(bordered)
    coeff = ((-1.0) ** (k + 1)) / (2.0**k * factorial(k) ** 2)
    return np.sqrt(coeff * det)


# ---------------------------------------------------------------------------
# simplex_volume


def test_unit_right_triangle_volume():
    assert simplex_volume([[0, 0], [1, 0], [0, 1]]) == pytest.approx(0.5, rel=1e-15)


def test_kuhn_4simplex_volume():
    pts = [
        [0, 0, 0, 0],
        [1, 0, 0, 0],
        [1, 1, 0, 0],
        [1, 1, 1, 0],
        [1, 1, 1, 1],
    ]
    assert simplex_volume(pts) == pytest.approx(1.0 / 24.0, rel=1e-14)


def test_collinear_triangle_raises():
    with pytest.raises(DegenerateSimplex):
        simplex_volume([[0, 0], [1, 1], [2, 2]])


def test_volume_shape_check():
    with pytest.raises(DimensionError):
        simplex_volume([[0, 0], [1, 0]])


@given(
    shift=st.lists(st.floats(-50, 50), min_size=2, max_size=2),
    scale=st.floats(0.01, 100.0),
)
def test_volume_translation_and_scaling(shift, scale):
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.7]])
    v0 = simplex_volume(base)
    moved = base * scale + np.asarray(shift)
    assert simplex_volume(moved) == pytest.approx(v0 * scale**2, rel=1e-9)


@given(perm=st.permutations(list(range(4))))
def test_volume_vertex_order_invariance(perm):
    pts = np.array(
        [[0.0, 0.0, 0.0], [2.0, 0.1, 0.0], [0.3, 1.5, 0.2], [0.1, 0.2, 1.1]]
    )
    assert simplex_volume(pts[perm]) == pytest.approx(simplex_volume(pts), rel=1e-12)


def test_volume_matches_cayley_menger():
    rng = np.random.default_rng(7)
    for n in (2, 3, 4):
        pts = rng.random((n + 1, n)) * 2.0
        assert simplex_volume(pts) == pytest.approx(
            cayley_menger_measure(pts), rel=1e-9
        )


# ---------------------------------------------------------------------------
# facet_measure


def test_segment_measure():
    assert facet_measure([[0, 0], [1, 1]]) == pytest.approx(np.sqrt(2.0), rel=1e-15)


def test_triangle_in_3d_measure():
    pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    assert facet_measure(pts) == pytest.approx(0.5, rel=1e-15)


def test_tetrahedron_facet_in_4d_measure():
    e = np.eye(4)
    pts = e[[0, 1, 2, 3]]
    assert facet_measure(pts) == pytest.approx(cayley_menger_measure(pts), rel=1e-12)
    assert facet_measure(pts) == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_facet_measure_random_matches_cayley_menger():
    rng = np.random.default_rng(11)
    for n in (2, 3, 4):
        pts = rng.random((n, n)) + 0.5 * np.eye(n)[:, : n]
        assert facet_measure(pts) == pytest.approx(
            cayley_menger_measure(pts), rel=1e-8
        )


def test_flat_facet_raises():
    with pytest.raises(DegenerateSimplex):
        facet_measure([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])


# ---------------------------------------------------------------------------
# facet enumeration


def two_triangle_square():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[0, 2, 1], [0, 2, 3]])
    return SimplicialMesh(2, vertices, elements)


def test_single_triangle_all_boundary():
    mesh = SimplicialMesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 2]])
    topo = mesh.facets
    assert len(topo) == 3
    assert topo.num_boundary == 3
    assert all(topo[i].minus_element is None for i in range(3))


def test_shared_edge_adjacency():
    topo = two_triangle_square().facets
    assert len(topo) == 5
    interior = [topo[i] for i in range(5) if not topo[i].is_boundary]
    assert len(interior) == 1
    facet = interior[0]
    assert facet.vertex_ids == (0, 2)
    assert facet.plus_element == 0 and facet.minus_element == 1
    assert facet.measure == pytest.approx(np.sqrt(2.0), rel=1e-15)


def test_lshape_facet_counts(lshape2d):
    topo = lshape2d.facets
    assert len(topo) == 22
    assert topo.num_boundary == 8
    assert topo.num_interior == 14


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_handshake_identity(dim):
    mesh = initial_mesh(dim)
    topo = mesh.facets
    assert (dim + 1) * mesh.num_elements == 2 * topo.num_interior + topo.num_boundary


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_element_facets_map(dim):
    mesh = initial_mesh(dim)
    topo = mesh.facets
    for e in range(mesh.num_elements):
        for k in range(dim + 1):
            fid = topo.element_facets[e, k]
            expected = sorted(np.delete(mesh.elements[e], k))
            assert list(topo.vertex_ids[fid]) == expected


def test_plus_element_is_smaller_index(lshape2d):
    topo = lshape2d.facets
    interior = ~topo.is_boundary
    assert np.all(topo.plus[interior] < topo.minus[interior])


def test_facet_enumeration_deterministic(lshape2d):
    a = enumerate_facets(lshape2d)
    b = enumerate_facets(lshape2d)
    assert np.array_equal(a.vertex_ids, b.vertex_ids)
    assert np.array_equal(a.plus, b.plus)
    assert np.array_equal(a.minus, b.minus)
    assert np.array_equal(a.measure, b.measure)


def test_facet_diameter_bounded_by_element(lshape2d):
    topo = lshape2d.facets
    assert np.all(topo.diameter <= lshape2d.diameters[topo.plus] + 1e-15)


def test_nonmanifold_raises():
    vertices = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
         [0.0, 0.0, -1.0], [1.0, 1.0, 1.0]]
    )
    elements = np.array([[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])
    mesh = SimplicialMesh(3, vertices, elements)
    with pytest.raises(NonManifoldMesh):
        enumerate_facets(mesh)


def test_hanging_vertex_detected():
    vertices = np.array(
        [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [1.0, 0.0], [2.0, -1.0]]
    )
    elements = np.array([[0, 1, 2], [0, 3, 4]])
    mesh = SimplicialMesh(2, vertices, elements)
    with pytest.raises(NonManifoldMesh):
        validate_mesh(mesh, check_hanging=True)


# ---------------------------------------------------------------------------
# initial meshes


def test_initial_2d(lshape2d):
    assert lshape2d.num_elements == 12
    assert lshape2d.volumes == pytest.approx(np.full(12, 0.25), rel=1e-14)
    assert lshape2d.total_volume() == pytest.approx(3.0, rel=1e-12)
    assert boundary_measure(lshape2d) == pytest.approx(8.0, rel=1e-12)
    validate_mesh(lshape2d, check_hanging=True)


def test_initial_2d_refinement_edge_is_longest(lshape2d):
    verts = lshape2d.vertices
    for tri in lshape2d.elements:
        coords = verts[tri]
        lengths = [
            np.linalg.norm(coords[(k + 1) % 3] - coords[(k + 2) % 3]) for k in range(3)
        ]
        # refinement edge (first two vertices) is opposite local vertex 2
        assert lengths[2] == pytest.approx(max(lengths), rel=1e-12)


def test_initial_3d(lprism3d):
    assert lprism3d.num_elements == 24
    assert lprism3d.total_volume() == pytest.approx(3.0, rel=1e-12)
    assert np.all(lprism3d.volumes > 0)
    assert boundary_measure(lprism3d) == pytest.approx(14.0, rel=1e-12)
    validate_mesh(lprism3d, check_hanging=True)


def test_initial_4d(cube4d):
    assert cube4d.num_elements == 24
    assert cube4d.volumes == pytest.approx(np.full(24, 1.0 / 24.0), rel=1e-12)
    assert cube4d.total_volume() == pytest.approx(1.0, rel=1e-12)
    assert boundary_measure(cube4d) == pytest.approx(8.0, rel=1e-12)
    validate_mesh(cube4d, check_hanging=True)


def test_initial_mesh_rejects_bad_dim():
    for dim in (1, 5, 0, -2):
        with pytest.raises(UnsupportedDimension):
            initial_mesh(dim)


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_quality_finite(dim):
    q = mesh_quality(initial_mesh(dim))
    assert np.isfinite(q.gamma) and q.gamma > 0


def test_adjacent_diameter_ratio_bounded(lprism3d):
    topo = lprism3d.facets
    interior = ~topo.is_boundary
    h = lprism3d.diameters
    ratio = h[topo.plus[interior]] / h[topo.minus[interior]]
    ratio = np.maximum(ratio, 1.0 / ratio)
    assert ratio.max() < 4.0


# ---------------------------------------------------------------------------
# construction errors and serialization


def test_repeated_vertex_rejected():
    with pytest.raises(DegenerateSimplex):
        SimplicialMesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 1]])


def test_flat_element_rejected():
    with pytest.raises(DegenerateSimplex):
        SimplicialMesh(
            2, np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), [[0, 1, 2]]
        )


def test_index_out_of_range_rejected():
    with pytest.raises(DimensionError):
        SimplicialMesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 7]])


def test_mesh_arrays_immutable(lshape2d):
    with pytest.raises(ValueError):
        lshape2d.vertices[0, 0] = 5.0
    with pytest.raises(ValueError):
        lshape2d.elements[0, 0] = 5


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_save_load_roundtrip(tmp_path, dim):
    mesh = initial_mesh(dim)
    path = tmp_path / f"mesh{dim}.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.dim == mesh.dim
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.elements, mesh.elements)
    header = path.read_text().splitlines()[0]
    assert header == f"{mesh.dim} {mesh.num_vertices} {mesh.num_elements}"


def test_load_rejects_truncated_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 3 1\n0.0 0.0\n1.0 0.0\n")
    with pytest.raises(DimensionError):
        load_mesh(path)
