"""Batched convex clipping and exact polygon quadrature used by the exact targets."""
from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

MAX_VERTS = 12


def clip_axis_box(poly: np.ndarray, count: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Clip convex polygons against axis-aligned boxes (Sutherland-Hodgman).

    ``poly`` is (B, K, 2) with ``count`` valid vertices per row; ``lo``/``hi``
    are (B, 2). Returns the clipped polygons in the same padded layout.
    """
    for axis in range(2):
        for sign, bound in ((1.0, hi[:, axis]), (-1.0, lo[:, axis])):
            poly, count = _clip_halfplane(poly, count, axis, sign, bound)
    return poly, count


def _clip_halfplane(poly, count, axis, sign, bound):
    B, K, _ = poly.shape
    idx = np.arange(K)[None, :]
    valid = idx < count[:, None]
    prev = np.where(idx == 0, count[:, None] - 1, idx - 1)
    prev = np.clip(prev, 0, K - 1)
    cur_p = poly
    prev_p = np.take_along_axis(poly, prev[:, :, None].repeat(2, axis=2), axis=1)
    cur_s = sign * (cur_p[..., axis] - bound[:, None])
    prev_s = sign * (prev_p[..., axis] - bound[:, None])
    cur_in = cur_s <= 0
    prev_in = prev_s <= 0
    denom = np.where(cur_s == prev_s, 1.0, prev_s - cur_s)
    frac = prev_s / denom
    inter = prev_p + frac[..., None] * (cur_p - prev_p)
    emit_inter = valid & (cur_in != prev_in)
    emit_cur = valid & cur_in
    # interleave: intersection first, then the current vertex
    cand = np.stack([inter, cur_p], axis=2).reshape(B, 2 * K, 2)
    keep = np.stack([emit_inter, emit_cur], axis=2).reshape(B, 2 * K)
    order = np.argsort(~keep, axis=1, kind="stable")
    cand = np.take_along_axis(cand, order[:, :, None].repeat(2, axis=2), axis=1)
    new_count = keep.sum(axis=1)
    width = min(max(int(new_count.max(initial=0)), 1), MAX_VERTS)
    return cand[:, :width].copy(), np.minimum(new_count, width)


def polygon_area(poly: np.ndarray, count: np.ndarray) -> np.ndarray:
    B, K, _ = poly.shape
    idx = np.arange(K)[None, :]
    nxt = np.where(idx + 1 >= count[:, None], 0, idx + 1)
    nxt_p = np.take_along_axis(poly, nxt[:, :, None].repeat(2, axis=2), axis=1)
    cross = poly[..., 0] * nxt_p[..., 1] - poly[..., 1] * nxt_p[..., 0]
    cross = np.where(idx < count[:, None], cross, 0.0)
    return 0.5 * np.abs(cross.sum(axis=1))


def fan_triangles(poly: np.ndarray, count: np.ndarray):
    """Triangles (P0, Pi, Pi+1) of each polygon; returns vertices (M, 3, 2) and owner rows."""
    B, K, _ = poly.shape
    rows, tris = [], []
    for i in range(1, K - 1):
        ok = count > i + 1
        if not np.any(ok):
            break
        r = np.nonzero(ok)[0]
        rows.append(r)
        tris.append(np.stack([poly[r, 0], poly[r, i], poly[r, i + 1]], axis=1))
    if not rows:
        return np.zeros((0, 3, 2)), np.zeros(0, dtype=int)
    return np.concatenate(tris), np.concatenate(rows)


def triangle_rule(nodes: int):
    """Collapsed tensor Gauss-Legendre rule on the reference triangle.

    Returns barycentric-style coordinates (Q, 2) in the unit triangle
    {(a, b): a, b >= 0, a + b <= 1} and weights summing to 1/2.
    """
    x, w = leggauss(nodes)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wi, we = np.meshgrid(w, w, indexing="ij")
    a = xi
    b = eta * (1.0 - xi)
    weight = wi * we * (1.0 - xi)
    return np.stack([a.ravel(), b.ravel()], axis=1), weight.ravel()


def triangle_points(tris: np.ndarray, nodes: int):
    """Quadrature points (M, Q, 2) and weights (M, Q) for each triangle."""
    ab, w = triangle_rule(nodes)
    p0 = tris[:, 0]
    e1 = tris[:, 1] - p0
    e2 = tris[:, 2] - p0
    pts = p0[:, None, :] + ab[None, :, 0:1] * e1[:, None, :] + ab[None, :, 1:2] * e2[:, None, :]
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, jac[:, None] * w[None, :]


def box_overlap_2d(A: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Area of {u : |u|_inf <= 1/2, |A u + d|_inf <= 1/2} for each row of ``d``."""
    d = np.atleast_2d(d)
    Ainv = np.linalg.inv(A)
    corners = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    poly = (corners[None, :, :] - d[:, None, :]) @ Ainv.T
    if np.linalg.det(Ainv) < 0:
        poly = poly[:, ::-1]
    B = len(d)
    count = np.full(B, 4)
    lo = np.full((B, 2), -0.5)
    hi = np.full((B, 2), 0.5)
    poly, count = clip_axis_box(poly, count, lo, hi)
    return polygon_area(poly, count)


def box_overlap_3d(A: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Volume of {u : |u|_inf <= 1/2, |A u + d|_inf <= 1/2} for each row of ``d``.

    Vertices are enumerated from all plane triples and the volume is taken
    from their convex hull.
    """
    from itertools import combinations

    from scipy.spatial import ConvexHull, QhullError

    d = np.atleast_2d(d)
    normals = np.vstack([np.eye(3), -np.eye(3), A, -A])
    out = np.zeros(len(d))
    triples = np.array(list(combinations(range(12), 3)))
    mats = normals[triples]
    dets = np.linalg.det(mats)
    good = np.abs(dets) > 1e-12
    mats, triples = mats[good], triples[good]
    inv = np.linalg.inv(mats)
    for row, dv in enumerate(d):
        rhs_all = np.concatenate([np.full(6, 0.5), 0.5 - dv, 0.5 + dv])
        pts = np.einsum("tij,tj->ti", inv, rhs_all[triples])
        ok = np.all(pts @ normals.T <= rhs_all + 1e-12, axis=1)
        pts = pts[ok]
        if len(pts) < 4:
            continue
        try:
            out[row] = ConvexHull(pts).volume
        except QhullError:
            out[row] = 0.0
    return out
