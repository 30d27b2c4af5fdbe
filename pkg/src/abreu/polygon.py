"""Weighted convex polygons: defining functions, boundary measure, balance.

A weighted polygon carries a strictly positive mass per edge.  The mass
fixes the boundary measure (a constant Lebesgue multiple per edge) and the
normalisation of each edge's affine defining function: lambda_E vanishes on
the edge and grows with unit rate along the inward normal v that satisfies
|i_v dmu| = dsigma_E.  Concretely lambda_E(x) = <n, x - tail> / rho with n
the inward unit normal and rho = mass / Euclidean length.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import (
    polygon_area,
    polygon_centroid,
    polygon_quadrature,
)

__all__ = [
    "InvalidPolygonError",
    "ScalarField",
    "Edge",
    "WeightedPolygon",
    "BalanceReport",
    "ContinuityPath",
    "canonical_weights",
    "balance_report",
    "unique_affine_A",
    "mu_invariant",
    "mu_invariant_sampled",
    "corner_cut",
    "rebalance",
    "fit_weights",
    "continuity_path",
    "rescale_polygon",
    "random_convex_polygon",
]


class InvalidPolygonError(ValueError):
    """Raised for degenerate or non-convex vertex data.

    `vertex_index` names the offending vertex when one can be identified.
    """

    def __init__(self, message, vertex_index=None):
        super().__init__(message)
        self.vertex_index = vertex_index


@dataclass(frozen=True)
class ScalarField:
    """Target scalar field A: constant, affine a0 + a1 x + a2 y, or callable."""

    kind: str
    coeffs: Optional[tuple] = None
    fn: Optional[Callable] = None

    @staticmethod
    def constant(value):
        return ScalarField("constant", coeffs=(float(value),))

    @staticmethod
    def affine(a0, a1, a2):
        return ScalarField("affine", coeffs=(float(a0), float(a1), float(a2)))

    @staticmethod
    def sampled(fn):
        return ScalarField("sampled", fn=fn)

    @property
    def is_affine(self):
        return self.kind in ("constant", "affine")

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "constant":
            out = np.full(len(pts), self.coeffs[0])
        elif self.kind == "affine":
            a0, a1, a2 = self.coeffs
            out = a0 + a1 * pts[:, 0] + a2 * pts[:, 1]
        else:
            out = np.asarray(self.fn(pts), dtype=float)
        return out if np.ndim(points) == 2 else float(out[0])

    def blend(self, other, s):
        """Pointwise (1-s)*self + s*other; stays closed-form when both are."""
        s = float(s)
        if self.kind == "constant" and other.kind == "constant":
            return ScalarField.constant((1 - s) * self.coeffs[0] + s * other.coeffs[0])
        if self.is_affine and other.is_affine:
            a = np.array(self.coeffs if self.kind == "affine" else (self.coeffs[0], 0.0, 0.0))
            b = np.array(other.coeffs if other.kind == "affine" else (other.coeffs[0], 0.0, 0.0))
            c = (1 - s) * a + s * b
            return ScalarField.affine(*c)
        return ScalarField.sampled(lambda pts: (1 - s) * self(pts) + s * other(pts))

    def to_json(self):
        if not self.is_affine:
            raise ValueError("sampled fields have no JSON form")
        return {"kind": self.kind, "coeffs": list(self.coeffs)}

    @staticmethod
    def from_json(obj):
        kind = obj["kind"]
        coeffs = obj["coeffs"]
        if kind == "constant":
            return ScalarField.constant(coeffs[0])
        if kind == "affine":
            return ScalarField.affine(*coeffs)
        raise ValueError(f"unknown scalar field kind {kind!r}")


@dataclass(frozen=True)
class Edge:
    """One directed boundary edge with its mass and defining function."""

    tail: np.ndarray
    head: np.ndarray
    weight: float

    @property
    def vector(self):
        return self.head - self.tail

    @property
    def length(self):
        return float(np.linalg.norm(self.vector))

    @property
    def tangent(self):
        return self.vector / self.length

    @property
    def inward_normal(self):
        t = self.tangent
        return np.array([-t[1], t[0]])

    @property
    def density(self):
        return self.weight / self.length

    @property
    def midpoint(self):
        return 0.5 * (self.tail + self.head)

    @property
    def lambda_coeffs(self):
        """(a1, a2, c) with lambda_E(x) = a . x + c."""
        n = self.inward_normal / self.density
        return np.array([n[0], n[1], -float(n @ self.tail)])

    def lambda_value(self, points):
        a = self.lambda_coeffs
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = pts @ a[:2] + a[2]
        return out if np.ndim(points) == 2 else float(out[0])


class WeightedPolygon:
    """Strictly convex CCW polygon with positive edge masses.

    Edge i joins vertices[i] to vertices[i+1].
    """

    def __init__(self, vertices, weights, _tol=1e-12):
        v = np.asarray(vertices, dtype=float)
        w = np.asarray(weights, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidPolygonError("need at least 3 planar vertices")
        if len(w) != len(v):
            raise InvalidPolygonError("one weight per edge required")
        scale = float(np.max(np.abs(v)) ** 2 + 1.0)
        n = len(v)
        for i in range(n):
            a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            if cross <= _tol * scale:
                raise InvalidPolygonError(
                    f"vertices not strictly convex CCW at index {(i + 1) % n}",
                    vertex_index=(i + 1) % n,
                )
        if np.any(w <= 0.0):
            bad = int(np.argmin(w))
            raise InvalidPolygonError(f"edge weight {bad} is not positive", vertex_index=bad)
        self.vertices = v
        self.weights = w
        self._edges = tuple(
            Edge(v[i].copy(), v[(i + 1) % n].copy(), float(w[i])) for i in range(n)
        )

    # -- basic geometry -------------------------------------------------

    @property
    def n_edges(self):
        return len(self.vertices)

    @property
    def edges(self):
        return self._edges

    @property
    def area(self):
        return float(polygon_area(self.vertices))

    @property
    def centroid(self):
        return polygon_centroid(self.vertices)

    @property
    def boundary_mass(self):
        return float(np.sum(self.weights))

    @property
    def bounding_box(self):
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def lambda_values(self, points):
        """Matrix of defining-function values, shape (npoints, nedges)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cols = [e.lambda_value(pts) for e in self.edges]
        return np.stack(cols, axis=1)

    def distance_to_boundary(self, points):
        """Euclidean distance to the boundary, for points inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.min(
            np.stack([(pts - e.tail) @ e.inward_normal for e in self.edges], axis=1),
            axis=1,
        )
        return d if np.ndim(points) == 2 else float(d[0])

    def contains(self, points, margin=0.0):
        d = self.distance_to_boundary(points)
        return d >= margin

    # -- serialization ---------------------------------------------------

    def to_json(self, A=None):
        obj = {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "weights": [float(w) for w in self.weights],
        }
        if A is not None:
            obj["A"] = A.to_json()
        return obj

    @staticmethod
    def from_json(obj):
        p = WeightedPolygon(obj["vertices"], obj["weights"])
        A = ScalarField.from_json(obj["A"]) if "A" in obj else None
        return (p, A) if A is not None else (p, None)

    def save(self, path, A=None):
        with open(path, "w") as fh:
            json.dump(self.to_json(A=A), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path):
        with open(path) as fh:
            return WeightedPolygon.from_json(json.load(fh))

    def __repr__(self):
        return f"WeightedPolygon({self.n_edges} edges, area={self.area:.6g})"


@dataclass
class BalanceReport:
    """Mass/centroid comparison between the boundary and interior measures.

    `residual` is exactly the linear functional evaluated on {1, x, y}.
    """

    boundary_mass: float
    area_mass: float
    boundary_centroid: np.ndarray
    weighted_centroid: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.residual)))

    def to_json(self):
        return {
            "boundary_mass": self.boundary_mass,
            "area_mass": self.area_mass,
            "boundary_centroid": list(map(float, self.boundary_centroid)),
            "weighted_centroid": list(map(float, self.weighted_centroid)),
            "residual": list(map(float, self.residual)),
            "max_residual": self.max_residual,
        }


def _boundary_moments(p: WeightedPolygon):
    """(mass, first-moment vector) of dsigma; exact for the affine basis."""
    mass = p.boundary_mass
    moment = np.sum([e.weight * e.midpoint for e in p.edges], axis=0)
    return mass, moment


def _area_moments(p: WeightedPolygon, A: ScalarField, degree=2, refine=0):
    pts, w = polygon_quadrature(p.vertices, degree=degree, refine=refine)
    a = A(pts)
    mass = float(np.dot(a, w))
    moment = np.array([np.dot(a * pts[:, 0], w), np.dot(a * pts[:, 1], w)])
    return mass, moment


def balance_report(p: WeightedPolygon, A) -> BalanceReport:
    """Evaluate the balance conditions for data (P, sigma, A).

    The residual vector is (mass gap, x-moment gap, y-moment gap); it
    vanishes exactly when the boundary and A-weighted interior measures
    share mass and centre of mass.
    """
    A = _as_field(A)
    refine = 0 if A.is_affine else 4
    degree = 2 if A.is_affine else 5
    bmass, bmom = _boundary_moments(p)
    amass, amom = _area_moments(p, A, degree=degree, refine=refine)
    residual = np.array([bmass - amass, bmom[0] - amom[0], bmom[1] - amom[1]])
    return BalanceReport(
        boundary_mass=bmass,
        area_mass=amass,
        boundary_centroid=bmom / bmass,
        weighted_centroid=amom / amass if amass != 0 else np.full(2, np.nan),
        residual=residual,
    )


def _as_field(A) -> ScalarField:
    if isinstance(A, ScalarField):
        return A
    if np.isscalar(A):
        return ScalarField.constant(A)
    if callable(A):
        return ScalarField.sampled(A)
    raise TypeError("A must be a ScalarField, a scalar, or a callable")


def canonical_weights(vertices) -> WeightedPolygon:
    """Weights equal to the areas of the centroid-apex triangles over each edge.

    With these weights the balanced affine function is the constant 1.
    """
    probe = WeightedPolygon(vertices, np.ones(len(vertices)))
    c = probe.centroid
    w = []
    for e in probe.edges:
        tri = np.array([c, e.tail, e.head])
        w.append(
            0.5
            * abs(
                (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
            )
        )
    return WeightedPolygon(vertices, np.array(w))


def unique_affine_A(p: WeightedPolygon) -> ScalarField:
    """The affine A making (P, sigma, A) balanced: a 3x3 moment system."""
    pts, w = polygon_quadrature(p.vertices, degree=2)
    basis = np.stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]], axis=1)
    M = basis.T @ (basis * w[:, None])
    bmass, bmom = _boundary_moments(p)
    b = np.array([bmass, bmom[0], bmom[1]])
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise InvalidPolygonError("moment matrix is numerically singular")
    a = np.linalg.solve(M, b)
    if abs(a[1]) < 1e-13 * abs(a[0]) and abs(a[2]) < 1e-13 * abs(a[0]):
        return ScalarField.constant(a[0])
    return ScalarField.affine(*a)


def mu_invariant(p: WeightedPolygon) -> float:
    """Edge-separation invariant.

    For q interior to edge E with d = distance to the nearer endpoint of E,
    take min over other edges of lambda_{E'}(q)/d; the infimum over q is
    attained at the edge midpoint because each ratio is monotone on either
    half of the edge.
    """
    best = np.inf
    for i, e in enumerate(p.edges):
        mid = e.midpoint
        d = 0.5 * e.length
        for j, other in enumerate(p.edges):
            if j == i:
                continue
            best = min(best, other.lambda_value(mid) / d)
    return float(best)


def mu_invariant_sampled(p: WeightedPolygon, samples_per_edge=1024) -> float:
    """Sampling cross-check for `mu_invariant` (piecewise-monotone ratios)."""
    best = np.inf
    ts = (np.arange(samples_per_edge) + 0.5) / samples_per_edge
    for i, e in enumerate(p.edges):
        pts = e.tail[None, :] + ts[:, None] * e.vector[None, :]
        d = e.length * np.minimum(ts, 1.0 - ts)
        lam = np.stack(
            [o.lambda_value(pts) for j, o in enumerate(p.edges) if j != i], axis=1
        )
        best = min(best, float(np.min(np.min(lam, axis=1) / d)))
    return best


def corner_cut(p: WeightedPolygon, vertex_index: int, eps: float) -> WeightedPolygon:
    """Cut the corner at a vertex at depth eps in its lambda-coordinates.

    The removed triangle is {lambda_E + lambda_E' <= eps} near the vertex.
    Retained edge portions keep their density; the new edge receives the
    mass of either removed portion (the two are equal by construction).
    """
    if eps < 0:
        raise ValueError("cut depth must be nonnegative")
    if eps == 0:
        return p
    n = p.n_edges
    i = int(vertex_index) % n
    e_prev = p.edges[(i - 1) % n]  # ends at vertex i
    e_next = p.edges[i]  # starts at vertex i
    v = p.vertices[i]

    # point a on e_prev where lambda_{e_next} = eps, walking back from v
    lam_next_at_prev_tail = e_next.lambda_value(e_prev.tail)
    if eps >= lam_next_at_prev_tail:
        raise ValueError(
            f"cut depth {eps} reaches past adjacent edge {(i - 1) % n}"
        )
    ta = 1.0 - eps / lam_next_at_prev_tail  # e_next lambda is affine along e_prev
    a = e_prev.tail + ta * e_prev.vector

    lam_prev_at_next_head = e_prev.lambda_value(e_next.head)
    if eps >= lam_prev_at_next_head:
        raise ValueError(f"cut depth {eps} reaches past adjacent edge {i}")
    tb = eps / lam_prev_at_next_head
    b = e_next.tail + tb * e_next.vector

    removed_prev = e_prev.density * float(np.linalg.norm(v - a))
    removed_next = e_next.density * float(np.linalg.norm(b - v))
    new_mass = 0.5 * (removed_prev + removed_next)

    # rebuild the loop: ..., prev_tail, a, b, next_head, ... (CCW preserved)
    verts = []
    weights = []
    for k in range(n):
        if k == i:
            continue
        verts.append(p.vertices[k])
        e = p.edges[k]
        if k == (i - 1) % n:
            weights.append(e.weight - removed_prev)
            verts.append(a)
            weights.append(new_mass)
            verts.append(b)
            weights.append(e_next.weight - removed_next)
        else:
            weights.append(e.weight)
    return WeightedPolygon(np.array(verts), np.array(weights))


def rebalance(p: WeightedPolygon, edge_i: int, edge_j: int, tol=1e-12, max_iter=50):
    """Scale two edge masses so the boundary centroid matches the area centroid.

    That makes the balanced affine function constant.  Damped Newton on the
    centroid-gap map with its analytic Jacobian; the map is affine in the
    two scalings, so convergence is immediate away from rank-deficiency.
    Returns (polygon, lam, mu).
    """
    if edge_i == edge_j:
        raise ValueError("choose two distinct edges")
    target = p.centroid

    def gap_and_jac(lam, mu):
        w = p.weights.copy()
        w[edge_i] *= lam
        w[edge_j] *= mu
        mids = np.array([e.midpoint for e in p.edges])
        mass = float(np.sum(w))
        mom = w @ mids
        c = mom / mass
        g = c - target
        d_lam = p.weights[edge_i] * (mids[edge_i] - c) / mass
        d_mu = p.weights[edge_j] * (mids[edge_j] - c) / mass
        return g, np.stack([d_lam, d_mu], axis=1)

    lam, mu = 1.0, 1.0
    for _ in range(max_iter):
        g, J = gap_and_jac(lam, mu)
        if np.max(np.abs(g)) < tol:
            break
        if abs(np.linalg.det(J)) < 1e-14 * (np.linalg.norm(J) ** 2 + 1e-300):
            raise ValueError(
                "centroid Jacobian is rank-deficient for these edges; "
                "choose a different pair"
            )
        step = np.linalg.solve(J, -g)
        t = 1.0
        while t > 1e-6 and min(lam + t * step[0], mu + t * step[1]) <= 0:
            t *= 0.5
        lam += t * step[0]
        mu += t * step[1]
    else:
        raise RuntimeError("rebalance did not converge")
    w = p.weights.copy()
    w[edge_i] *= lam
    w[edge_j] *= mu
    return WeightedPolygon(p.vertices, w), lam, mu


def fit_weights(p: WeightedPolygon, A, edge_indices: Sequence[int]) -> WeightedPolygon:
    """Scale three edge masses so (P, sigma, A) balances a given affine A.

    The balance conditions are linear in the weights, so this is one 3x3
    solve.  Raises if the scaled weights are not positive.
    """
    A = _as_field(A)
    if not A.is_affine:
        raise ValueError("fit_weights needs an affine target")
    idx = list(edge_indices)
    if len(set(idx)) != 3:
        raise ValueError("choose three distinct edges")
    amass, amom = _area_moments(p, A)
    rhs = np.array([amass, amom[0], amom[1]])
    mids = np.array([e.midpoint for e in p.edges])
    base = np.array(
        [
            p.boundary_mass,
            float(p.weights @ mids[:, 0]),
            float(p.weights @ mids[:, 1]),
        ]
    )
    cols = []
    for k in idx:
        cols.append(p.weights[k] * np.array([1.0, mids[k, 0], mids[k, 1]]))
        base -= cols[-1]
    scal = np.linalg.solve(np.stack(cols, axis=1), rhs - base)
    w = p.weights.copy()
    for k, s in zip(idx, scal):
        w[k] *= s
    if np.any(w <= 0):
        raise ValueError("fitted weights are not positive")
    return WeightedPolygon(p.vertices, w)


@dataclass
class ContinuityPath:
    """A 1-parameter family of balanced data sets (t, polygon, A)."""

    samples: list = field(default_factory=list)

    def __post_init__(self):
        for t, poly, A in self.samples:
            rep = balance_report(poly, A)
            if rep.max_residual > 1e-8 * max(1.0, rep.boundary_mass):
                raise ValueError(f"sample t={t} is not balanced: {rep.residual}")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def max_balance_residual(self):
        return max(balance_report(poly, A).max_residual for _, poly, A in self.samples)


def continuity_path(p0: WeightedPolygon, A0, p1: WeightedPolygon, A1, steps: int):
    """Join two balanced data sets by a path of balanced data sets.

    With identical vertex loops, linear interpolation of (sigma, A) is used
    (balance is linear in the pair).  Otherwise the path passes through
    canonical weights: linear leg to (sigma_P0, 1), canonical-weight leg
    over interpolated vertices, linear leg to (sigma_P1, A1).  Affine or
    constant endpoints yield affine or constant A along the way.
    """
    A0, A1 = _as_field(A0), _as_field(A1)
    if p0.n_edges != p1.n_edges:
        raise ValueError("endpoints must have the same number of edges")
    for name, (poly, A) in {"start": (p0, A0), "end": (p1, A1)}.items():
        rep = balance_report(poly, A)
        if rep.max_residual > 1e-8 * max(1.0, rep.boundary_mass):
            raise ValueError(f"{name} data set is not balanced")
    if steps < 2:
        raise ValueError("need at least 2 samples")

    same_vertices = np.allclose(p0.vertices, p1.vertices, rtol=0, atol=0)
    samples = []
    ts = np.linspace(0.0, 1.0, steps)
    if same_vertices:
        for t in ts:
            w = (1 - t) * p0.weights + t * p1.weights
            samples.append((float(t), WeightedPolygon(p0.vertices, w), A0.blend(A1, t)))
        return ContinuityPath(samples)

    one = ScalarField.constant(1.0)
    c0 = canonical_weights(p0.vertices)
    c1 = canonical_weights(p1.vertices)
    legs = [
        (lambda s: (WeightedPolygon(p0.vertices, (1 - s) * p0.weights + s * c0.weights),
                    A0.blend(one, s))),
        (lambda s: (canonical_weights((1 - s) * p0.vertices + s * p1.vertices), one)),
        (lambda s: (WeightedPolygon(p1.vertices, (1 - s) * c1.weights + s * p1.weights),
                    one.blend(A1, s))),
    ]
    for t in ts:
        pos = t * len(legs)
        leg = min(int(pos), len(legs) - 1)
        s = pos - leg
        poly, A = legs[leg](s)
        samples.append((float(t), poly, A))
    return ContinuityPath(samples)


def rescale_polygon(p: WeightedPolygon, lam: float) -> WeightedPolygon:
    """Dilate vertices and masses by the same positive factor."""
    if lam <= 0:
        raise ValueError("scale factor must be positive")
    return WeightedPolygon(lam * p.vertices, lam * p.weights)


def random_convex_polygon(n_edges, rng, radius_range=(0.6, 1.4)):
    """Seeded random strictly convex polygon with exactly n_edges vertices."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    for _ in range(200):
        ang = np.sort(rng.uniform(0.0, 2 * np.pi, n_edges))
        if np.min(np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))) < 0.15:
            continue
        r = rng.uniform(*radius_range, n_edges)
        v = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
        try:
            return WeightedPolygon(v, np.ones(n_edges))
        except InvalidPolygonError:
            continue
    raise RuntimeError("failed to sample a convex polygon")
