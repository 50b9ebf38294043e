"""Convex-hull membership tests.

2-D anchors get an exact polygon test (monotone-chain hull plus halfplane /
segment distances). Higher dimensions solve a small linear program for the
best convex combination; the outside margin is then an L-infinity distance
and the inside margin is measured along the ray away from the anchor
centroid (bisection on LP feasibility).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .backend import K

DEFAULT_TOL = 1e-6


@dataclass
class HullResult:
    inside: bool
    margin: float  # signed distance to the hull boundary, negative outside


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices via the monotone chain.

    Degenerate inputs collapse to 1 (single point) or 2 (collinear set)
    vertices.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:  # fully collinear input
        return np.array([pts[0], pts[-1]])
    return hull


def _edge_normals(hull: np.ndarray):
    # Unit outward normals and offsets for a CCW polygon.
    nxt = np.roll(hull, -1, axis=0)
    edges = nxt - hull
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    offs = (normals * hull).sum(axis=1)
    return normals, offs


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Distance from each point to segment a-b.
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _contains_2d(points: np.ndarray, anchors: np.ndarray, tol: float):
    hull = convex_hull_2d(anchors)
    if len(hull) == 1:
        dist = np.linalg.norm(points - hull[0], axis=1)
        return dist <= tol, dist
    if len(hull) == 2:
        dist = _segment_distances(points, hull[0], hull[1])
        return dist <= tol, dist
    normals, offs = _edge_normals(hull)
    viol = K.poly_violation(
        np.ascontiguousarray(points),
        np.ascontiguousarray(normals[:, 0]),
        np.ascontiguousarray(normals[:, 1]),
        np.ascontiguousarray(offs),
    )
    return viol <= tol, viol


def _linf_distance_lp(point: np.ndarray, anchors: np.ndarray) -> float:
    # min t over simplex weights w with |anchors^T w - point|_inf <= t.
    nb, d = anchors.shape
    c = np.zeros(nb + 1)
    c[-1] = 1.0
    at = anchors.T
    a_ub = np.vstack(
        [
            np.hstack([at, -np.ones((d, 1))]),
            np.hstack([-at, -np.ones((d, 1))]),
        ]
    )
    b_ub = np.concatenate([point, -point])
    a_eq = np.concatenate([np.ones(nb), [0.0]])[None, :]
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * nb + [(0, None)],
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"hull membership LP failed: {res.message}")
    return float(res.x[-1])


def _ray_margin_lp(point: np.ndarray, anchors: np.ndarray, tol: float) -> float:
    # Distance to the boundary along the ray away from the anchor centroid.
    direction = point - anchors.mean(axis=0)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        direction = np.zeros_like(point)
        direction[0] = 1.0
    else:
        direction = direction / norm
    spread = anchors.max(axis=0) - anchors.min(axis=0)
    hi = float(np.linalg.norm(spread)) + 1.0
    lo = 0.0
    if _linf_distance_lp(point + hi * direction, anchors) <= tol:
        return hi
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if _linf_distance_lp(point + mid * direction, anchors) <= tol:
            lo = mid
        else:
            hi = mid
    return lo


def hull_contains(points: np.ndarray, anchors: np.ndarray, tol: float = DEFAULT_TOL):
    """Batch membership test.

    Returns (inside, violation): violation <= tol means inside; for 2-D and
    interior points, -violation is the exact distance to the boundary.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if anchors.shape[0] < 1:
        raise ValueError("anchors must contain at least one point")
    if points.shape[1] != anchors.shape[1]:
        raise ValueError("points and anchors must share a dimensionality")
    if anchors.shape[1] == 2:
        return _contains_2d(points, anchors, tol)
    viol = np.array([_linf_distance_lp(p, anchors) for p in points])
    return viol <= tol, viol


def hull_membership(point: np.ndarray, anchors: np.ndarray, tol: float = DEFAULT_TOL) -> HullResult:
    """Membership plus signed margin for one query point."""
    point = np.asarray(point, dtype=np.float64).ravel()
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if anchors.shape[0] < 1:
        raise ValueError("anchors must contain at least one point")
    if point.shape[0] != anchors.shape[1]:
        raise ValueError("point and anchors must share a dimensionality")

    if anchors.shape[1] == 2:
        hull = convex_hull_2d(anchors)
        pts = point[None, :]
        if len(hull) == 1:
            d = float(np.linalg.norm(point - hull[0]))
            return HullResult(d <= tol, -d)
        if len(hull) == 2:
            d = float(_segment_distances(pts, hull[0], hull[1])[0])
            return HullResult(d <= tol, -d)
        inside, viol = _contains_2d(pts, anchors, tol)
        if inside[0]:
            return HullResult(True, float(-viol[0]))
        seg = min(
            float(_segment_distances(pts, hull[i], hull[(i + 1) % len(hull)])[0])
            for i in range(len(hull))
        )
        return HullResult(False, -seg)

    t = _linf_distance_lp(point, anchors)
    if t > tol:
        return HullResult(False, -t)
    return HullResult(True, _ray_margin_lp(point, anchors, tol))
