import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_roughbc.mesh import (Mesh, PointOutsideDomainError, build_structured_unit_square, closure_edges,
                                 edge_audit, locate_point, mesh_from_arrays, read_mesh, refine_marked,
                                 refine_uniform, write_mesh)


@pytest.mark.parametrize("n, nv", [(1, 4), (16, 289), (32, 1089)])
def test_structured_counts(n, nv):
    m = build_structured_unit_square(n)
    assert m.nv == nv
    assert m.nt == 2 * n * n
    assert len(m.boundary_edges) == 4 * n
    assert edge_audit(m) == []


def test_structured_single_square():
    m = build_structured_unit_square(1)
    assert (m.nv, m.nt, len(m.boundary_edges)) == (4, 2, 4)
    # diagonal from (0,0) to (1,1)
    interior = m.edges[m.interior_edges]
    assert len(interior) == 1
    np.testing.assert_allclose(sorted(map(tuple, m.vertices[interior[0]])), [(0, 0), (1, 1)])


def test_boundary_segments_are_tagged():
    m = build_structured_unit_square(4)
    for s, (fix, val) in enumerate([(1, 0.0), (0, 1.0), (1, 1.0), (0, 0.0)]):
        pts = m.vertices[m.boundary_edges[m.boundary_segments == s]]
        np.testing.assert_allclose(pts[..., fix], val)


def test_positive_orientation_and_area():
    m = build_structured_unit_square(7)
    assert np.all(m.signed_areas > 0)
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("n", [2, 16])
def test_refine_uniform_counts(n):
    m = build_structured_unit_square(n)
    f = refine_uniform(m)
    assert f.nv == m.nv + len(m.edges)
    assert f.nt == 4 * m.nt
    assert edge_audit(f) == []


def test_refine_uniform_table_sequence():
    m = build_structured_unit_square(16)
    nvs = []
    for _ in range(2):
        m = refine_uniform(m)
        nvs.append(m.nv)
    assert nvs == [1089, 4225]


def test_refine_uniform_children_quarter_parent():
    m = build_structured_unit_square(3)
    f = refine_uniform(m)
    child_area = np.bincount(f.parent_of, weights=f.areas, minlength=m.nt)
    np.testing.assert_allclose(child_area, m.areas, atol=1e-15)
    np.testing.assert_allclose(f.areas, np.repeat(m.areas, 4) / 4, atol=1e-15)


def test_refine_marked_empty_is_identity():
    m = build_structured_unit_square(3)
    f = refine_marked(m, set())
    np.testing.assert_array_equal(f.vertices, m.vertices)
    np.testing.assert_array_equal(f.triangles, m.triangles)


def test_refine_marked_single_interior_triangle_conforms():
    m = build_structured_unit_square(2)
    f = refine_marked(m, {3})
    assert edge_audit(f) == []
    assert f.nt > m.nt
    assert f.areas.sum() == pytest.approx(1.0, rel=1e-12)


def test_refine_marked_all_at_least_doubles():
    m = build_structured_unit_square(4)
    f = refine_marked(m, range(m.nt))
    assert f.nt >= 2 * m.nt
    assert np.all(np.bincount(f.parent_of, minlength=m.nt) >= 2)


def test_all_edges_option_gives_four_children():
    m = build_structured_unit_square(4)
    f = refine_marked(m, [5], all_edges=True)
    assert np.count_nonzero(f.parent_of == 5) == 4
    assert edge_audit(f) == []


def test_closure_is_bounded():
    m = build_structured_unit_square(8)
    rng = np.random.default_rng(0)
    for _ in range(6):
        marked = rng.choice(m.nt, size=max(1, m.nt // 10), replace=False)
        _, extra = closure_edges(m, marked)
        assert extra <= 10 * len(marked)
        m = refine_marked(m, marked)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_random_bisection_sequences_stay_conforming_and_shape_regular(seed, rounds):
    rng = np.random.default_rng(seed)
    m = build_structured_unit_square(2)
    initial = m.min_angles.min()
    for _ in range(rounds):
        k = int(rng.integers(1, m.nt + 1))
        marked = rng.choice(m.nt, size=k, replace=False)
        m = refine_marked(m, marked, all_edges=bool(rng.integers(2)))
        assert edge_audit(m) == []
        assert np.all(m.signed_areas > 0)
        assert m.min_angles.min() >= 0.5 * initial - 1e-12
        assert m.areas.sum() == pytest.approx(1.0, rel=1e-12)
    # boundary edges still partition the boundary with the right segment tags
    assert np.bincount(m.boundary_segments, weights=np.linalg.norm(
        np.diff(m.vertices[m.boundary_edges], axis=1)[:, 0], axis=1)) == pytest.approx([1, 1, 1, 1])


def test_parent_contains_children():
    m = build_structured_unit_square(3)
    f = refine_marked(m, [0, 7, 11])
    cent = f.vertices[f.triangles].mean(axis=1)
    lam = m.to_barycentric(f.parent_of, cent)
    assert np.all(lam > -1e-14)


def test_locate_centroid_and_vertex():
    m = build_structured_unit_square(4)
    t = 9
    c = m.vertices[m.triangles[t]].mean(axis=0)
    tt, lam = locate_point(m, c)
    assert tt == t
    np.testing.assert_allclose(lam, 1 / 3)
    v = m.vertices[m.triangles[t, 0]]
    tt, lam = locate_point(m, v)
    incident = np.flatnonzero((m.triangles == m.triangles[t, 0]).any(axis=1))
    assert tt == incident.min()
    assert np.isclose(lam.max(), 1.0)


def test_locate_matches_brute_force(rng):
    m = refine_marked(build_structured_unit_square(5), [1, 2, 30])
    pts = rng.random((200, 2))
    for p in pts:
        t, lam = locate_point(m, p)
        allbary = m.to_barycentric(np.arange(m.nt), np.repeat(p[None], m.nt, axis=0))
        inside = np.flatnonzero(allbary.min(axis=1) >= -1e-12)
        assert t == inside.min()
        np.testing.assert_allclose(lam, allbary[t], atol=1e-14)


def test_locate_with_ancestor_hint():
    m = build_structured_unit_square(3)
    f = refine_uniform(refine_uniform(m))
    p = np.array([0.41, 0.77])
    t0, _ = locate_point(m, p)
    t, lam = locate_point(f, p, ancestor=t0)
    assert t == locate_point(f, p)[0]
    assert lam.min() >= -1e-12


def test_locate_outside_raises():
    m = build_structured_unit_square(2)
    with pytest.raises(PointOutsideDomainError):
        locate_point(m, (1.1, 0.5))


def test_mesh_file_round_trip(tmp_path):
    m = refine_marked(build_structured_unit_square(3), [4])
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    r = read_mesh(path)
    np.testing.assert_array_equal(r.vertices, m.vertices)
    # local vertex order is re-derived (longest edge first) when reading
    np.testing.assert_array_equal(np.sort(r.triangles, axis=1), np.sort(m.triangles, axis=1))
    np.testing.assert_array_equal(r.boundary_edges, m.boundary_edges)
    np.testing.assert_array_equal(r.boundary_segments, m.boundary_segments)
    assert edge_audit(r) == []


def test_mesh_from_arrays_orients_triangles():
    v = [[0, 0], [1, 0], [1, 1], [0, 1]]
    m = mesh_from_arrays(v, [[0, 2, 1], [0, 3, 2]], [[0, 1], [1, 2], [2, 3], [3, 0]], [0, 1, 2, 3])
    assert np.all(m.signed_areas > 0)
    assert edge_audit(m) == []


def test_degenerate_triangle_rejected():
    v = np.array([[0, 0], [1, 0], [2, 0]], dtype=float)
    with pytest.raises(ValueError):
        Mesh(v, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [0, 0, 0], v)
