"""The boundary-vs-interior linear functional, positivity probes, and the
log-det variational functional.

The linear functional of data (P, sigma, A) acting on f is

    L(f) = integral of f over the boundary against dsigma
         - integral of A f over P against Lebesgue measure.

Balanced data annihilates affine f; positivity on non-affine convex f is
probed (not decided) over seeded families of piecewise-linear convex
functions, for which both integrals are computed exactly by activity-region
decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .polygon import ScalarField, WeightedPolygon, _as_field
from .potential import ConvexityError, PotentialField
from .quadrature import (
    clip_polygon_halfplane,
    dyadic_segment_quadrature,
    fan_triangles,
    integrate_log_affine_polygon,
    polygon_quadrature,
    triangle_rule_points,
)

__all__ = [
    "PLConvexFunction",
    "l_functional",
    "polar_l_functional",
    "stability_probe",
    "lambda_estimate",
    "f_functional",
    "ProbeReport",
    "LambdaReport",
    "probe_family",
    "positive_probe_family",
]


class PLConvexFunction:
    """Pointwise maximum of finitely many affine pieces a.x + c."""

    def __init__(self, pieces):
        pieces = np.atleast_2d(np.asarray(pieces, dtype=float))
        if pieces.shape[1] != 3 or len(pieces) < 1:
            raise ValueError("pieces must be rows (a1, a2, c)")
        self.pieces = pieces

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = pts @ self.pieces[:, :2].T + self.pieces[:, 2][None, :]
        out = np.max(vals, axis=1)
        return out if np.ndim(points) == 2 else float(out[0])

    def plus_affine(self, a0, a1, a2):
        q = self.pieces.copy()
        q[:, 0] += a1
        q[:, 1] += a2
        q[:, 2] += a0
        return PLConvexFunction(q)

    def scaled(self, s):
        return PLConvexFunction(self.pieces * s)

    def is_affine_on(self, p: WeightedPolygon):
        """True when a single piece dominates over the whole polygon."""
        vals = p.vertices @ self.pieces[:, :2].T + self.pieces[:, 2][None, :]
        top = np.max(vals, axis=1)
        for i in range(len(self.pieces)):
            if np.all(vals[:, i] >= top - 1e-12 * (1.0 + np.abs(top))):
                return True
        return False

    def active_regions(self, p: WeightedPolygon):
        """(piece index, sub-polygon) cells where each piece attains the max."""
        out = []
        m = len(self.pieces)
        for i in range(m):
            cell = p.vertices
            ai = self.pieces[i]
            for j in range(m):
                if j == i:
                    continue
                d = ai - self.pieces[j]
                cell = clip_polygon_halfplane(cell, d[:2], d[2])
                if len(cell) == 0:
                    break
            if len(cell) >= 3:
                out.append((i, cell))
        return out

    def min_on(self, p: WeightedPolygon):
        """Exact minimum over the polygon (a 3-variable LP)."""
        m = len(self.pieces)
        A_ub = np.zeros((m + p.n_edges, 3))
        b_ub = np.zeros(m + p.n_edges)
        A_ub[:m, 0] = self.pieces[:, 0]
        A_ub[:m, 1] = self.pieces[:, 1]
        A_ub[:m, 2] = -1.0
        b_ub[:m] = -self.pieces[:, 2]
        for k, e in enumerate(p.edges):
            a1, a2, c = e.lambda_coeffs
            A_ub[m + k, 0] = -a1
            A_ub[m + k, 1] = -a2
            b_ub[m + k] = c
        res = linprog(
            c=[0.0, 0.0, 1.0],
            A_ub=A_ub,
            b_ub=b_ub,
            bounds=[(None, None)] * 3,
            method="highs",
        )
        if not res.success:
            raise RuntimeError("piecewise-linear minimisation failed")
        return float(res.fun)

    def max_on(self, p: WeightedPolygon):
        return float(np.max(self(p.vertices)))

    # -- exact integrals ----------------------------------------------------

    def integral_dmu(self, p: WeightedPolygon):
        total = 0.0
        for i, cell in self.active_regions(p):
            pts, w = polygon_quadrature(cell, degree=2)
            a = self.pieces[i]
            total += float(np.dot(pts @ a[:2] + a[2], w))
        return total

    def integral_A_dmu(self, p: WeightedPolygon, A: ScalarField):
        total = 0.0
        refine = 0 if A.is_affine else 4
        degree = 2 if A.is_affine else 5
        for i, cell in self.active_regions(p):
            pts, w = polygon_quadrature(cell, degree=degree, refine=refine)
            a = self.pieces[i]
            total += float(np.dot(A(pts) * (pts @ a[:2] + a[2]), w))
        return total

    def boundary_integral(self, p: WeightedPolygon):
        """Integral against dsigma, exact via per-edge breakpoints."""
        total = 0.0
        for e in p.edges:
            a, v = e.tail, e.vector
            # restriction of piece k to the edge: alpha_k + beta_k t
            alpha = self.pieces[:, :2] @ a + self.pieces[:, 2]
            beta = self.pieces[:, :2] @ v
            ts = {0.0, 1.0}
            m = len(self.pieces)
            for i in range(m):
                for j in range(i + 1, m):
                    db = beta[i] - beta[j]
                    if abs(db) > 1e-14 * (abs(beta[i]) + abs(beta[j]) + 1.0):
                        t = (alpha[j] - alpha[i]) / db
                        if 0.0 < t < 1.0:
                            ts.add(float(t))
            ts = sorted(ts)
            acc = 0.0
            for lo, hi in zip(ts[:-1], ts[1:]):
                mid = 0.5 * (lo + hi)
                k = int(np.argmax(alpha + beta * mid))
                acc += (hi - lo) * (alpha[k] + beta[k] * mid)
            total += e.weight * acc  # edge mass = density * length; acc is mean value
        return total

    def to_json(self):
        return {"pieces": [[float(x) for x in row] for row in self.pieces]}


def l_functional(p: WeightedPolygon, A, f, boundary_order=8, area_refine=4):
    """L(f) for data (P, sigma, A): exact for PL convex f, quadrature otherwise."""
    A = _as_field(A)
    if isinstance(f, PLConvexFunction):
        return f.boundary_integral(p) - f.integral_A_dmu(p, A)
    boundary = 0.0
    for e in p.edges:
        pts, w = dyadic_segment_quadrature(e.tail, e.head, order=boundary_order)
        boundary += e.density * float(np.dot(np.asarray(f(pts), dtype=float), w))
    pts, w = polygon_quadrature(p.vertices, degree=5, refine=area_refine)
    area = float(np.dot(A(pts) * np.asarray(f(pts), dtype=float), w))
    return boundary - area


def polar_l_functional(p: WeightedPolygon, f, order=8, panels_per_edge=32):
    """The polar-coordinate form of L for canonical weights and A = 1.

    Written from the centroid: one sixth of the loop integral of
    f(x) cross(x, dx); equal to (1/6) of the integral of f R^2 dtheta.
    """
    c = p.centroid
    total = 0.0
    t0 = np.polynomial.legendre.leggauss(order)
    tn, tw = 0.5 * (t0[0] + 1.0), 0.5 * t0[1]
    for e in p.edges:
        a = e.tail - c
        v = e.vector
        cross = a[0] * v[1] - a[1] * v[0]  # constant along the edge
        ts = np.concatenate([(k + tn) / panels_per_edge for k in range(panels_per_edge)])
        ws = np.tile(tw / panels_per_edge, panels_per_edge)
        pts = e.tail[None, :] + ts[:, None] * v[None, :]
        total += cross * float(np.dot(np.asarray(f(pts), dtype=float), ws))
    return total / 6.0


# ---------------------------------------------------------------------------
# probe families


def _interior_point(p: WeightedPolygon, rng):
    lo, hi = p.bounding_box
    scale = float(np.max(hi - lo))
    for _ in range(1000):
        z = rng.uniform(lo, hi)
        if p.contains(np.atleast_2d(z), margin=0.05 * scale)[0]:
            return z
    raise RuntimeError("failed to sample an interior point")


def probe_family(p: WeightedPolygon, seed):
    """Endless seeded stream of PL convex probes: creases and small maxima.

    Member k depends only on (seed, members 0..k), so any run with the same
    seed sees the same prefix.
    """
    rng = np.random.default_rng(seed)
    lo, hi = p.bounding_box
    scale = float(np.max(hi - lo))
    while True:
        kind = rng.integers(0, 3)
        if kind == 0:
            z = _interior_point(p, rng)
            th = rng.uniform(0, 2 * np.pi)
            a = np.array([np.cos(th), np.sin(th)])
            yield PLConvexFunction([[0.0, 0.0, 0.0], [a[0], a[1], -float(a @ z)]])
        else:
            k = int(rng.integers(2, 5))
            rows = []
            for _ in range(k):
                z = _interior_point(p, rng)
                th = rng.uniform(0, 2 * np.pi)
                r = rng.uniform(0.5, 2.0) / scale
                a = r * np.array([np.cos(th), np.sin(th)])
                rows.append([a[0], a[1], -float(a @ z)])
            if kind == 2:
                rows.append([0.0, 0.0, 0.0])
            yield PLConvexFunction(rows)


def positive_probe_family(p: WeightedPolygon, base_point, seed):
    """Seeded stream of nonnegative PL convex probes vanishing at base_point."""
    rng = np.random.default_rng(seed)
    p0 = np.asarray(base_point, dtype=float)
    lo, hi = p.bounding_box
    scale = float(np.max(hi - lo))
    while True:
        kind = rng.integers(0, 2)
        if kind == 0:
            z = _interior_point(p, rng)
            th = rng.uniform(0, 2 * np.pi)
            a = np.array([np.cos(th), np.sin(th)])
            if float(a @ (p0 - z)) > 0:
                a = -a
            yield PLConvexFunction([[0.0, 0.0, 0.0], [a[0], a[1], -float(a @ z)]])
        else:
            k = int(rng.integers(2, 4))
            rows = [[0.0, 0.0, 0.0]]
            for _ in range(k):
                th = rng.uniform(0, 2 * np.pi)
                r = rng.uniform(0.5, 2.0) / scale
                a = r * np.array([np.cos(th), np.sin(th)])
                d = rng.uniform(0.0, 0.5 * scale * r)
                rows.append([a[0], a[1], -float(a @ p0) - d])
            yield PLConvexFunction(rows)


@dataclass
class ProbeReport:
    min_L: float
    argmin: Optional[PLConvexFunction]
    n: int
    seed: int
    all_nonnegative: bool
    n_affine_skipped: int

    def to_json(self):
        return {
            "min_L": self.min_L,
            "argmin": None if self.argmin is None else self.argmin.to_json(),
            "n": self.n,
            "seed": self.seed,
            "all_nonnegative": self.all_nonnegative,
            "n_affine_skipped": self.n_affine_skipped,
        }


def stability_probe(p: WeightedPolygon, A, n=200, seed=0, base_point=None, family=None):
    """Minimum of L over a seeded family of normalised PL convex probes.

    Probes are shifted to vanish at the base point and scaled to sup norm 1
    on the closure; affine members are excluded from the minimum.  This is
    a probe of the positivity condition, not a decision procedure.
    """
    A = _as_field(A)
    p0 = p.centroid if base_point is None else np.asarray(base_point, dtype=float)
    gen = probe_family(p, seed) if family is None else iter(family)
    best = np.inf
    argmin = None
    skipped = 0
    for _ in range(n):
        f = next(gen)
        if f.is_affine_on(p):
            skipped += 1
            continue
        f0 = float(f(np.atleast_2d(p0))[0])
        hi = f.max_on(p) - f0
        lo = f0 - f.min_on(p)
        s = max(hi, lo)
        if s <= 0:
            skipped += 1
            continue
        g = f.plus_affine(-f0, 0.0, 0.0).scaled(1.0 / s)
        val = l_functional(p, A, g)
        if val < best:
            best = val
            argmin = g
    return ProbeReport(
        min_L=best,
        argmin=argmin,
        n=n,
        seed=seed if isinstance(seed, int) else -1,
        all_nonnegative=bool(best >= 0),
        n_affine_skipped=skipped,
    )


@dataclass
class LambdaReport:
    value: Optional[float]
    argmax: Optional[PLConvexFunction]
    n: int
    seed: int
    n_skipped: int
    success: bool

    def to_json(self):
        return {
            "value": self.value,
            "argmax": None if self.argmax is None else self.argmax.to_json(),
            "n": self.n,
            "seed": self.seed,
            "n_skipped": self.n_skipped,
            "success": self.success,
        }


def lambda_estimate(p: WeightedPolygon, A, base_point=None, n=200, seed=0, family=None):
    """Lower bound for the extremal boundary integral.

    Maximises the boundary integral over nonnegative convex probes f with
    f(base) = 0, normalised to L(f) = 1.  Each probe is first scaled to sup
    norm 1 (the ratio is scale invariant; the normalisation avoids
    unbounded rays and is recorded in reports).  Monotone nondecreasing in
    n for a fixed seed.
    """
    A = _as_field(A)
    p0 = p.centroid if base_point is None else np.asarray(base_point, dtype=float)
    if not p.contains(np.atleast_2d(p0), margin=0.0)[0]:
        raise ValueError("base point must lie inside the polygon")
    gen = positive_probe_family(p, p0, seed) if family is None else iter(family)
    best = -np.inf
    argmax = None
    skipped = 0
    for _ in range(n):
        f = next(gen)
        s = f.max_on(p)
        if s <= 0 or f.is_affine_on(p):
            skipped += 1
            continue
        g = f.scaled(1.0 / s)
        L = l_functional(p, A, g)
        if L <= 1e-12:
            skipped += 1
            continue
        val = g.boundary_integral(p) / L
        if val > best:
            best = val
            argmax = g.scaled(1.0 / L)
    if argmax is None:
        return LambdaReport(None, None, n, seed, skipped, False)
    return LambdaReport(float(best), argmax, n, seed, skipped, True)


# ---------------------------------------------------------------------------
# the variational functional


def f_functional(u: PotentialField, A, area_refine=4, boundary_order=8):
    """-integral of log det(Hess u) + L(u) for a potential on a polygon.

    The log-det integrand splits as a bounded remainder plus the sum of
    log lambda_E, whose polygon integrals are evaluated in closed form per
    fan triangle; only the bounded remainder is integrated numerically.
    """
    p = u.domain
    if not isinstance(p, WeightedPolygon):
        raise ValueError("the variational functional needs a bounded polygon")
    A = _as_field(A)

    lam_coeffs = [e.lambda_coeffs for e in p.edges]

    def remainder(pts):
        H = u.hessian(pts)
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        if np.any(det <= 0) or np.any(H[:, 0, 0] <= 0):
            k = int(np.argmax(~((det > 0) & (H[:, 0, 0] > 0))))
            raise ConvexityError(
                f"Hessian degenerate at {tuple(pts[k])}", location=tuple(pts[k])
            )
        out = -np.log(det)
        for a1, a2, c in lam_coeffs:
            out -= np.log(pts @ np.array([a1, a2]) + c)
        return out

    pts, w = polygon_quadrature(p.vertices, degree=5, refine=area_refine)
    log_det_part = float(np.dot(remainder(pts), w))
    for coeffs in lam_coeffs:
        log_det_part += integrate_log_affine_polygon(p.vertices, coeffs)

    boundary = 0.0
    for e in p.edges:
        bpts, bw = dyadic_segment_quadrature(e.tail, e.head, order=boundary_order)
        boundary += e.density * float(np.dot(u.value(bpts), bw))
    area = float(np.dot(A(pts) * u.value(pts), w))
    return log_det_part + boundary - area
