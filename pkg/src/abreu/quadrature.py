"""Quadrature helpers: polygon/triangle rules, edge rules, log-affine integrals."""

from __future__ import annotations

import numpy as np

# Symmetric triangle rules in barycentric coordinates, (points, weights),
# weights summing to 1 (multiply by triangle area).
_TRI_DEG2 = (
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.array([1 / 3, 1 / 3, 1 / 3]),
)

_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
_TRI_DEG5 = (
    np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [_a1, _b1, _b1],
            [_b1, _a1, _b1],
            [_b1, _b1, _a1],
            [_a2, _b2, _b2],
            [_b2, _a2, _b2],
            [_b2, _b2, _a2],
        ]
    ),
    np.array(
        [
            0.225,
            0.132394152788506,
            0.132394152788506,
            0.132394152788506,
            0.125939180544827,
            0.125939180544827,
            0.125939180544827,
        ]
    ),
)


def triangle_area(tri):
    a, b, c = np.asarray(tri, dtype=float)
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


def polygon_area(vertices):
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_centroid(vertices):
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
    return np.array([cx, cy])


def fan_triangles(vertices, apex=None):
    """Split a convex polygon into triangles from `apex` (default: centroid)."""
    v = np.asarray(vertices, dtype=float)
    if apex is None:
        apex = polygon_centroid(v)
    tris = []
    n = len(v)
    for i in range(n):
        tris.append(np.array([apex, v[i], v[(i + 1) % n]]))
    return tris


def _subdivide(tri):
    a, b, c = tri
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return [
        np.array([a, ab, ca]),
        np.array([ab, b, bc]),
        np.array([ca, bc, c]),
        np.array([ab, bc, ca]),
    ]


def triangle_rule_points(tri, degree=2):
    """Quadrature nodes and weights (summing to the area) on one triangle."""
    bary, w = _TRI_DEG2 if degree <= 2 else _TRI_DEG5
    pts = bary @ np.asarray(tri, dtype=float)
    return pts, w * triangle_area(tri)


def polygon_quadrature(vertices, degree=2, refine=0, apex=None):
    """Nodes/weights integrating over a convex polygon.

    `refine` levels of uniform triangle subdivision on the centroid fan.
    Degree-2 rules are exact for quadratics, which makes balance residuals
    of affine data exact up to rounding.
    """
    tris = fan_triangles(vertices, apex=apex)
    for _ in range(refine):
        tris = [s for t in tris for s in _subdivide(t)]
    pts, wts = [], []
    for t in tris:
        p, w = triangle_rule_points(t, degree)
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def integrate_polygon(vertices, fn, degree=2, refine=0):
    pts, w = polygon_quadrature(vertices, degree=degree, refine=refine)
    return float(np.dot(np.asarray(fn(pts), dtype=float), w))


def gauss_legendre_01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def segment_quadrature(a, b, order=8, panels=1):
    """Nodes/weights for the line integral along segment a->b (arclength)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t0, w0 = gauss_legendre_01(order)
    ts = np.concatenate([(k + t0) / panels for k in range(panels)])
    ws = np.tile(w0 / panels, panels)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    return pts, ws * np.linalg.norm(b - a)


def dyadic_segment_quadrature(a, b, order=8, levels=10):
    """Segment quadrature with panels clustered dyadically toward both ends.

    Handles integrands with t*log(t)-type endpoint behaviour to ~1e-10.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    breaks = [0.0] + [2.0 ** (-k) / 2.0 for k in range(levels, 0, -1)]
    breaks += [1.0 - s for s in reversed(breaks)]
    breaks = np.unique(np.clip(breaks, 0.0, 1.0))
    t0, w0 = gauss_legendre_01(order)
    ts, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        ts.append(lo + (hi - lo) * t0)
        ws.append((hi - lo) * w0)
    ts = np.concatenate(ts)
    ws = np.concatenate(ws)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    return pts, ws * np.linalg.norm(b - a)


def clip_polygon_halfplane(vertices, normal, offset, tol=1e-13):
    """Clip a convex polygon against {x : normal.x + offset >= 0}.

    Returns the (possibly empty) clipped vertex loop, CCW preserved.
    """
    v = np.asarray(vertices, dtype=float)
    if len(v) == 0:
        return v
    vals = v @ np.asarray(normal, dtype=float) + offset
    scale = max(1.0, np.max(np.abs(vals)))
    keep = vals >= -tol * scale
    if np.all(keep):
        return v
    if not np.any(keep):
        return np.empty((0, 2))
    out = []
    n = len(v)
    for i in range(n):
        j = (i + 1) % n
        vi, vj = v[i], v[j]
        fi, fj = vals[i], vals[j]
        if fi >= 0:
            out.append(vi)
        if (fi > 0 and fj < 0) or (fi < 0 and fj > 0):
            t = fi / (fi - fj)
            out.append(vi + t * (vj - vi))
    out = np.array(out)
    # drop duplicate points created by vertices sitting on the cut line
    if len(out) >= 2:
        d = np.linalg.norm(out - np.roll(out, 1, axis=0), axis=1)
        out = out[d > 1e-12 * max(1.0, d.max())]
    return out if len(out) >= 3 else np.empty((0, 2))


def _int01_z_log_z(p, q):
    """Integral over u in [0,1] of (p + q u) log(p + q u), p + q u >= 0."""
    if abs(q) < 1e-14 * (abs(p) + abs(q) + 1e-300):
        return p * np.log(p) if p > 0.0 else 0.0

    def prim(z):
        if z <= 0.0:
            return 0.0
        return 0.5 * z * z * np.log(z) - 0.25 * z * z

    return (prim(p + q) - prim(p)) / q


def integrate_log_affine_triangle(tri, coeffs):
    """Exact integral of log(a . x + c) over a triangle.

    `coeffs` is (a1, a2, c); the affine form must be >= 0 on the triangle
    (zeros allowed on the boundary only, as for edge defining functions).
    """
    tri = np.asarray(tri, dtype=float)
    a = np.asarray(coeffs[:2], dtype=float)
    c = float(coeffs[2])
    vals = tri @ a + c
    area = triangle_area(tri)
    if area == 0.0:
        return 0.0
    scale = np.max(np.abs(vals))
    if scale == 0.0:
        raise ValueError("affine form vanishes on the whole triangle")
    if np.min(vals) < -1e-12 * scale:
        raise ValueError("affine form is negative inside the triangle")
    vals = np.maximum(vals, 0.0)
    if np.ptp(vals) < 1e-13 * scale:
        return area * np.log(np.mean(vals))
    # label vertices v0,v1,v2 so the v-direction coefficient is largest
    best = int(np.argmax([abs(vals[2] - vals[0]), abs(vals[0] - vals[1]), abs(vals[1] - vals[2])]))
    order = [(0, 1, 2), (1, 2, 0), (2, 0, 1)][best]
    f0, f1, f2 = (vals[k] for k in order)
    # ell(u,v) = f0 + (f1-f0) u + (f2-f0) v on the reference triangle
    b = f1 - f0
    cc = f2 - f0
    # inner integral over v in [0, 1-u], then closed form in u
    g0, gq = f0 + cc, b - cc  # ell at v = 1-u, as p + q u
    term_hi = _int01_z_log_z(g0, gq) - (g0 + 0.5 * gq)
    term_lo = _int01_z_log_z(f0, b) - (f0 + 0.5 * b)
    return 2.0 * area * (term_hi - term_lo) / cc


def integrate_log_affine_polygon(vertices, coeffs, apex=None):
    """Exact integral of log(a . x + c) over a convex polygon (form >= 0)."""
    return sum(
        integrate_log_affine_triangle(t, coeffs) for t in fan_triangles(vertices, apex=apex)
    )
