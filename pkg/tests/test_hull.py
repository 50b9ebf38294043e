"""Hull membership tests: exact 2-D polygon path and the LP path above 2-D."""

import numpy as np
import pytest

from hullgan.hull import convex_hull_2d, hull_contains, hull_membership

TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_triangle_centroid_inside_with_positive_margin():
    res = hull_membership(TRIANGLE.mean(axis=0), TRIANGLE)
    assert res.inside
    assert res.margin > 0


def test_vertex_on_boundary():
    res = hull_membership([0.0, 0.0], TRIANGLE)
    assert res.inside
    assert abs(res.margin) <= 1e-6


def test_far_point_outside():
    res = hull_membership([10.0, 10.0], TRIANGLE)
    assert not res.inside
    assert res.margin < 0


def test_outside_margin_is_euclidean_distance():
    # Point straight below the bottom edge: distance 0.5.
    res = hull_membership([0.5, -0.5], TRIANGLE)
    assert not res.inside
    assert res.margin == pytest.approx(-0.5, abs=1e-9)


def test_degenerate_single_point():
    anchor = np.array([[2.0, 3.0]])
    assert hull_membership([2.0, 3.0], anchor).inside
    res = hull_membership([3.0, 3.0], anchor)
    assert not res.inside
    assert res.margin == pytest.approx(-1.0)


def test_degenerate_collinear_segment():
    seg = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert hull_membership([1.5, 0.0], seg).inside
    res = hull_membership([1.0, 2.0], seg)
    assert not res.inside
    assert res.margin == pytest.approx(-2.0)


def test_monotone_chain_square():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.2, 0.9]], dtype=float)
    hull = convex_hull_2d(pts)
    assert len(hull) == 4
    assert {tuple(p) for p in hull} == {(0, 0), (1, 0), (1, 1), (0, 1)}


def test_batch_contains_matches_single():
    rng = np.random.default_rng(0)
    anchors = rng.normal(size=(12, 2))
    points = rng.normal(size=(200, 2)) * 1.5
    inside, _ = hull_contains(points, anchors)
    for p, flag in zip(points[:40], inside[:40]):
        assert hull_membership(p, anchors).inside == flag


def test_convex_combinations_always_inside_2d():
    rng = np.random.default_rng(1)
    anchors = rng.normal(size=(10, 2))
    w = rng.dirichlet(np.ones(10), size=500)
    inside, viol = hull_contains(w @ anchors, anchors)
    assert inside.all()
    assert viol.max() <= 1e-6


def test_lp_path_high_dimensional():
    rng = np.random.default_rng(2)
    anchors = rng.normal(size=(15, 5))
    w = rng.dirichlet(np.ones(15), size=50)
    inside, viol = hull_contains(w @ anchors, anchors)
    assert inside.all()
    far = anchors.mean(axis=0) + 50.0
    res = hull_membership(far, anchors)
    assert not res.inside
    assert res.margin < 0


def test_lp_inside_margin_positive_at_centroid():
    rng = np.random.default_rng(3)
    anchors = np.vstack([np.eye(4), -np.eye(4)])  # cross-polytope vertices
    res = hull_membership(np.zeros(4), anchors)
    assert res.inside
    assert res.margin > 0
    vert = hull_membership(anchors[0], anchors)
    assert vert.inside
    assert vert.margin == pytest.approx(0.0, abs=1e-3)


def test_lp_agrees_with_polygon_in_2d():
    # Route the same 2-D data through the LP by lifting to 3-D with a zero z.
    rng = np.random.default_rng(4)
    anchors = rng.normal(size=(8, 2))
    pts = rng.normal(size=(60, 2))
    inside2d, _ = hull_contains(pts, anchors)
    lift = lambda a: np.hstack([a, np.zeros((len(a), 1))])
    inside3d, _ = hull_contains(lift(pts), lift(anchors))
    np.testing.assert_array_equal(inside2d, inside3d)


def test_requires_anchor():
    with pytest.raises(ValueError, match="at least one"):
        hull_membership([0.0, 0.0], np.zeros((0, 2)))
