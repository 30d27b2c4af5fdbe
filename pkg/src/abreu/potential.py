"""Symplectic potentials and their derived tensors.

A potential is stored split as u = u0 + f: a closed-form canonical part u0
carrying the boundary log behaviour (sum of lambda_E log lambda_E terms,
plus quadratic terms for the model domains) with exact derivatives to 4th
order, and a smooth correction f, either sampled on a lattice or given in
closed form.  All curvature-type quantities are derivatives of the inverse
Hessian W = (u_ij)^{-1}:

    F^{ij}_{kl} = d_k d_l W^{ij},       |F|^2 = F : F contracted with the
    Hessian metric,                     Abreu(u) = sum_ij d_i d_j W^{ij}.

Two evaluation routes are provided.  The grid route inverts the Hessian
pointwise at lattice nodes (canonical part analytic, correction by centered
differences) and second-differences W; it is the solver's discretisation.
The analytic route propagates exact 3rd/4th derivatives through the matrix
inverse and is used wherever identity checks must be differentiation-noise
free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Correction, Grid
from .polygon import Edge, WeightedPolygon, rescale_polygon

__all__ = [
    "ConvexityError",
    "OutOfRangeError",
    "EdgeLogTerm",
    "QuadraticTerm",
    "CanonicalPart",
    "AnalyticCorrection",
    "QuarterPlaneDomain",
    "HalfPlaneDomain",
    "PlaneDomain",
    "PotentialField",
    "TensorSamples",
    "guillemin_potential",
    "tensor_samples",
    "legendre_transform",
    "VertexChart",
    "rescale_potential",
    "quarter_plane_model",
    "half_plane_model",
    "free_quadratic_potential",
    "abreu_value",
    "curvature_norm",
    "inverse_hessian_first_derivatives",
    "inverse_hessian_second_derivatives",
]


class ConvexityError(ValueError):
    """Hessian not positive definite at an evaluation point."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class OutOfRangeError(ValueError):
    """A gradient equation has no solution in the domain."""


# ---------------------------------------------------------------------------
# canonical parts


class EdgeLogTerm:
    """lambda log lambda for an affine defining function lambda = a.x + c."""

    def __init__(self, a1, a2, c):
        self.a = np.array([a1, a2], dtype=float)
        self.c = float(c)

    def lam(self, pts):
        return pts @ self.a + self.c

    def value(self, pts):
        lam = self.lam(pts)
        out = np.zeros(len(pts))
        pos = lam > 0
        out[pos] = lam[pos] * np.log(lam[pos])
        if np.any(lam < -1e-12 * (1.0 + np.max(np.abs(lam)))):
            raise ValueError("defining function negative at an evaluation point")
        return out

    def gradient(self, pts):
        lam = self.lam(pts)
        g = np.log(lam)[:, None] + 1.0
        return g * self.a[None, :]

    def hessian(self, pts):
        lam = self.lam(pts)
        aa = np.einsum("i,j->ij", self.a, self.a)
        return aa[None, :, :] / lam[:, None, None]

    def third(self, pts):
        lam = self.lam(pts)
        aaa = np.einsum("i,j,k->ijk", self.a, self.a, self.a)
        return -aaa[None] / (lam**2)[:, None, None, None]

    def fourth(self, pts):
        lam = self.lam(pts)
        a4 = np.einsum("i,j,k,l->ijkl", self.a, self.a, self.a, self.a)
        return 2.0 * a4[None] / (lam**3)[:, None, None, None, None]


class QuadraticTerm:
    """(1/2) x^T Q x with symmetric Q; used by the half-plane model."""

    def __init__(self, Q):
        self.Q = np.asarray(Q, dtype=float)

    def value(self, pts):
        return 0.5 * np.einsum("ni,ij,nj->n", pts, self.Q, pts)

    def gradient(self, pts):
        return pts @ self.Q

    def hessian(self, pts):
        return np.broadcast_to(self.Q, (len(pts), 2, 2)).copy()

    def third(self, pts):
        return np.zeros((len(pts), 2, 2, 2))

    def fourth(self, pts):
        return np.zeros((len(pts), 2, 2, 2, 2))


class CanonicalPart:
    def __init__(self, terms):
        self.terms = list(terms)

    @staticmethod
    def from_edges(edges):
        terms = []
        for e in edges:
            a1, a2, c = e.lambda_coeffs
            terms.append(EdgeLogTerm(a1, a2, c))
        return CanonicalPart(terms)

    def _sum(self, method, pts, shape):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((len(pts),) + shape)
        for t in self.terms:
            out += getattr(t, method)(pts)
        return out

    def value(self, pts):
        return self._sum("value", pts, ())

    def gradient(self, pts):
        return self._sum("gradient", pts, (2,))

    def hessian(self, pts):
        return self._sum("hessian", pts, (2, 2))

    def third(self, pts):
        return self._sum("third", pts, (2, 2, 2))

    def fourth(self, pts):
        return self._sum("fourth", pts, (2, 2, 2, 2))


class AnalyticCorrection:
    """Closed-form correction with derivatives supplied to 4th order.

    Unsupplied derivative orders default to zero arrays.
    """

    def __init__(self, value=None, gradient=None, hessian=None, third=None, fourth=None):
        self._fns = dict(value=value, gradient=gradient, hessian=hessian, third=third, fourth=fourth)

    analytic = True

    def _eval(self, name, pts, shape):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        fn = self._fns[name]
        if fn is None:
            return np.zeros((len(pts),) + shape)
        return np.asarray(fn(pts), dtype=float).reshape((len(pts),) + shape)

    def value(self, pts):
        return self._eval("value", pts, ())

    def gradient(self, pts):
        return self._eval("gradient", pts, (2,))

    def hessian(self, pts):
        return self._eval("hessian", pts, (2, 2))

    def third(self, pts):
        return self._eval("third", pts, (2, 2, 2))

    def fourth(self, pts):
        return self._eval("fourth", pts, (2, 2, 2, 2))


# ---------------------------------------------------------------------------
# model domains (truncated unbounded polygons)


class _ModelDomain:
    """Shared behaviour for truncated unbounded model domains."""

    edges: tuple
    truncation: float

    def lambda_values(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([e.lambda_value(pts) for e in self.edges], axis=1)

    def distance_to_boundary(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.edges:
            d = np.full(len(pts), np.inf)
        else:
            d = np.min(
                np.stack([(pts - e.tail) @ e.inward_normal for e in self.edges], axis=1),
                axis=1,
            )
        return d if np.ndim(points) == 2 else float(d[0])

    def contains(self, points, margin=0.0):
        return self.distance_to_boundary(points) >= margin


class QuarterPlaneDomain(_ModelDomain):
    """{x > 0, y > 0}, truncated to [0, T]^2 for sampling purposes."""

    def __init__(self, truncation):
        if truncation <= 0:
            raise ValueError("truncation must be positive")
        T = float(truncation)
        self.truncation = T
        self.edges = (
            Edge(np.array([0.0, 0.0]), np.array([T, 0.0]), T),
            Edge(np.array([0.0, T]), np.array([0.0, 0.0]), T),
        )

    @property
    def bounding_box(self):
        return np.zeros(2), np.array([self.truncation, self.truncation])

    @property
    def centroid(self):
        return np.array([self.truncation / 3.0, self.truncation / 3.0])


class HalfPlaneDomain(_ModelDomain):
    """{x > 0}, truncated to [0, T] x [-T, T]."""

    def __init__(self, truncation):
        if truncation <= 0:
            raise ValueError("truncation must be positive")
        T = float(truncation)
        self.truncation = T
        # interior {x > 0} lies left of the downward-directed boundary edge
        self.edges = (Edge(np.array([0.0, T]), np.array([0.0, -T]), 2 * T),)

    @property
    def bounding_box(self):
        return np.array([0.0, -self.truncation]), np.array([self.truncation, self.truncation])

    @property
    def centroid(self):
        return np.array([self.truncation / 2.0, 0.0])


class PlaneDomain(_ModelDomain):
    """All of R^2, truncated to a box; used by free quadratic test potentials."""

    def __init__(self, truncation):
        if truncation <= 0:
            raise ValueError("truncation must be positive")
        self.truncation = float(truncation)
        self.edges = ()

    @property
    def bounding_box(self):
        T = self.truncation
        return np.array([-T, -T]), np.array([T, T])

    @property
    def centroid(self):
        return np.zeros(2)


# ---------------------------------------------------------------------------
# the potential field


class PotentialField:
    """u = canonical + correction on a domain, with an optional affine pin.

    The pin subtracts the affine function matching the raw correction's
    value and gradient at the base point, so the stored correction
    satisfies f(c) = 0, grad f(c) = 0.
    """

    def __init__(self, domain, canonical, grid=None, correction=None, pin_point=None, _pin_affine=None):
        self.domain = domain
        self.canonical = canonical
        self.grid = grid if grid is not None else Grid(domain, 65)
        self.correction = correction
        self.pin_point = None if pin_point is None else np.asarray(pin_point, dtype=float)
        self._pin_affine = np.zeros(3) if _pin_affine is None else np.asarray(_pin_affine, dtype=float)
        if pin_point is not None and correction is not None and _pin_affine is None:
            c = np.atleast_2d(self.pin_point)
            val = float(correction.value(c)[0])
            grad = np.asarray(correction.gradient(c))[0]
            # subtract val + grad.(x - c)
            self._pin_affine = np.array(
                [val - grad @ self.pin_point, grad[0], grad[1]]
            )

    # -- construction helpers ---------------------------------------------

    def with_correction(self, correction, pin=True):
        """Same canonical part with a new correction (re-pinned by default)."""
        pin_point = self.pin_point if self.pin_point is not None else self.domain.centroid
        return PotentialField(
            self.domain,
            self.canonical,
            grid=self.grid,
            correction=correction,
            pin_point=pin_point if pin else None,
        )

    def with_grid_values(self, values, pin=False):
        """Correction from lattice samples; the solver's representation."""
        return PotentialField(
            self.domain,
            self.canonical,
            grid=self.grid,
            correction=Correction(self.grid, values),
            pin_point=self.pin_point if pin else None,
        )

    def repin(self, point=None):
        point = self.domain.centroid if point is None else point
        return PotentialField(
            self.domain,
            self.canonical,
            grid=self.grid,
            correction=self.correction,
            pin_point=point,
        )

    @property
    def has_analytic_derivatives(self):
        return self.correction is None or getattr(self.correction, "analytic", False)

    # -- correction with the pin removed ----------------------------------

    def _corr(self, method, pts, shape):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.correction is None:
            out = np.zeros((len(pts),) + shape)
        else:
            out = np.asarray(getattr(self.correction, method)(pts)).reshape((len(pts),) + shape)
        a0, a1, a2 = self._pin_affine
        if method == "value":
            out = out - (a0 + a1 * pts[:, 0] + a2 * pts[:, 1])
        elif method == "gradient":
            out = out - np.array([a1, a2])[None, :]
        return out

    def correction_value(self, pts):
        return self._corr("value", pts, ())

    def correction_gradient(self, pts):
        return self._corr("gradient", pts, (2,))

    def correction_hessian(self, pts):
        return self._corr("hessian", pts, (2, 2))

    # -- pointwise evaluation ----------------------------------------------

    def value(self, pts):
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.canonical.value(pts2) + self.correction_value(pts2)
        return out if np.ndim(pts) == 2 else float(out[0])

    def gradient(self, pts):
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.canonical.gradient(pts2) + self.correction_gradient(pts2)
        return out if np.ndim(pts) == 2 else out[0]

    def hessian(self, pts):
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.canonical.hessian(pts2) + self.correction_hessian(pts2)
        return out if np.ndim(pts) == 2 else out[0]

    def third(self, pts):
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.canonical.third(pts2)
        if self.correction is not None:
            if not getattr(self.correction, "analytic", False):
                raise ValueError("third derivatives need an analytic correction")
            out = out + self.correction.third(pts2)
        return out if np.ndim(pts) == 2 else out[0]

    def fourth(self, pts):
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.canonical.fourth(pts2)
        if self.correction is not None:
            if not getattr(self.correction, "analytic", False):
                raise ValueError("fourth derivatives need an analytic correction")
            out = out + self.correction.fourth(pts2)
        return out if np.ndim(pts) == 2 else out[0]

    def inverse_hessian(self, pts):
        pts2 = np.atleast_2d(np.asarray(pts, dtype=float))
        H = self.canonical.hessian(pts2) + self.correction_hessian(pts2)
        W, _ = _invert_spd(H, pts2)
        return W if np.ndim(pts) == 2 else W[0]

    # -- node-level fields ---------------------------------------------------

    def node_hessians(self):
        """Hessian arrays (H11, H12, H22) on the grid, valid on `grid.inner`.

        Canonical part analytic at nodes; lattice corrections differenced,
        closed-form corrections evaluated exactly.
        """
        g = self.grid
        H11 = np.full((g.nx, g.ny), np.nan)
        H12 = np.full((g.nx, g.ny), np.nan)
        H22 = np.full((g.nx, g.ny), np.nan)
        mask = g.inner
        pts = g.points_of(mask)
        Hc = self.canonical.hessian(pts)
        H11[mask] = Hc[:, 0, 0]
        H12[mask] = Hc[:, 0, 1]
        H22[mask] = Hc[:, 1, 1]
        if self.correction is not None:
            if isinstance(self.correction, Correction):
                fxx, fxy, fyy = self.correction.node_hessian()
                H11[mask] += fxx[mask]
                H12[mask] += fxy[mask]
                H22[mask] += fyy[mask]
            else:
                Hf = self.correction.hessian(pts)
                H11[mask] += Hf[:, 0, 0]
                H12[mask] += Hf[:, 0, 1]
                H22[mask] += Hf[:, 1, 1]
        return H11, H12, H22


def _invert_spd(H, pts):
    """Invert 2x2 Hessians, raising ConvexityError at the first bad point."""
    det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
    bad = ~((H[:, 0, 0] > 0) & (det > 0))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ConvexityError(
            f"Hessian not positive definite at {tuple(pts[k])}", location=tuple(pts[k])
        )
    W = np.empty_like(H)
    W[:, 0, 0] = H[:, 1, 1] / det
    W[:, 1, 1] = H[:, 0, 0] / det
    W[:, 0, 1] = W[:, 1, 0] = -H[:, 0, 1] / det
    return W, det


# ---------------------------------------------------------------------------
# tensor sampling


@dataclass
class TensorSamples:
    """Per-node Hessian data and fourth-derivative curvature reductions.

    `mask_h` flags nodes carrying H/W/det; `mask` flags nodes carrying the
    fourth-order fields (F, |F|, Abreu value).  Arrays are NaN elsewhere.
    """

    grid: Grid
    mask_h: np.ndarray
    mask: np.ndarray
    H: np.ndarray
    W: np.ndarray
    F: np.ndarray
    det: np.ndarray
    absF: np.ndarray
    abreu: np.ndarray
    route: str

    def interior_points(self):
        return self.grid.points_of(self.mask)

    def max_identity_defect(self):
        """max over nodes of |W H - I| (inverse-consistency check)."""
        WH = np.einsum("nij,njk->nik", self.W[self.mask_h], self.H[self.mask_h])
        return float(np.max(np.abs(WH - np.eye(2)[None, :, :])))


def _hessian_arrays_to_mat(H11, H12, H22, mask):
    H = np.empty((int(mask.sum()), 2, 2))
    H[:, 0, 0] = H11[mask]
    H[:, 0, 1] = H[:, 1, 0] = H12[mask]
    H[:, 1, 1] = H22[mask]
    return H


def tensor_samples(u: PotentialField, route="grid") -> TensorSamples:
    """Assemble Hessian/inverse-Hessian/curvature fields at lattice nodes.

    route="grid": invert the Hessian pointwise, then second-difference the
    inverse-Hessian entries (this is how F is defined, and it conditions
    far better than raw fourth differences of u).
    route="analytic": exact derivative propagation through the inverse;
    requires a closed-form (or absent) correction.
    """
    g = u.grid
    if route == "analytic" and not u.has_analytic_derivatives:
        raise ValueError("analytic route needs an analytic correction")

    nx, ny = g.nx, g.ny
    H11, H12, H22 = u.node_hessians()
    mask_h = g.inner
    pts_h = g.points_of(mask_h)
    Hm = _hessian_arrays_to_mat(H11, H12, H22, mask_h)
    Wm, detm = _invert_spd(Hm, pts_h)

    full = lambda: np.full((nx, ny), np.nan)
    W11, W12, W22, det = full(), full(), full(), full()
    W11[mask_h] = Wm[:, 0, 0]
    W12[mask_h] = Wm[:, 0, 1]
    W22[mask_h] = Wm[:, 1, 1]
    det[mask_h] = detm

    mask = g.interior
    n_int = int(mask.sum())
    F = np.full((nx, ny, 2, 2, 2, 2), np.nan)

    if route == "grid":
        for (i, j), arr in (((0, 0), W11), ((0, 1), W12), ((1, 1), W22)):
            fxx, fxy, fyy = g.fd_hessian(arr)
            F[mask, i, j, 0, 0] = fxx[mask]
            F[mask, i, j, 0, 1] = fxy[mask]
            F[mask, i, j, 1, 0] = fxy[mask]
            F[mask, i, j, 1, 1] = fyy[mask]
            if (i, j) == (0, 1):
                F[mask, 1, 0] = F[mask, 0, 1]
    elif route == "analytic":
        pts = g.points_of(mask)
        F[mask] = inverse_hessian_second_derivatives(u, pts)
    else:
        raise ValueError(f"unknown route {route!r}")

    Hfull = np.full((nx, ny, 2, 2), np.nan)
    Wfull = np.full((nx, ny, 2, 2), np.nan)
    Hfull[mask_h] = Hm
    Wfull[mask_h] = Wm

    abreu = full()
    absF = full()
    Fm = F[mask]
    abreu[mask] = Fm[:, 0, 0, 0, 0] + 2.0 * Fm[:, 0, 1, 0, 1] + Fm[:, 1, 1, 1, 1]
    Hmm = Hfull[mask]
    Wmm = Wfull[mask]
    absF2 = np.einsum(
        "nijkl,nabcd,nia,njb,nkc,nld->n", Fm, Fm, Hmm, Hmm, Wmm, Wmm
    )
    absF[mask] = np.sqrt(np.maximum(absF2, 0.0))

    return TensorSamples(
        grid=g,
        mask_h=mask_h,
        mask=mask,
        H=Hfull,
        W=Wfull,
        F=F,
        det=det,
        absF=absF,
        abreu=abreu,
        route=route,
    )


def inverse_hessian_first_derivatives(u: PotentialField, pts):
    """d_k W^{ij} at points, via dW = -W (dH) W; needs analytic derivatives."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    H = u.hessian(pts)
    W, _ = _invert_spd(H, pts)
    T3 = u.third(pts)  # T3[n,a,b,k] = u_abk
    return -np.einsum("nia,nabk,nbj->nijk", W, T3, W)


def inverse_hessian_second_derivatives(u: PotentialField, pts):
    """F^{ij}_{kl} = d_k d_l W^{ij} by exact matrix calculus."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    H = u.hessian(pts)
    W, _ = _invert_spd(H, pts)
    T3 = u.third(pts)
    T4 = u.fourth(pts)
    term1 = np.einsum("nia,nabl,nbc,ncdk,ndj->nijkl", W, T3, W, T3, W)
    term2 = np.einsum("nia,nabk,nbc,ncdl,ndj->nijkl", W, T3, W, T3, W)
    term3 = np.einsum("nia,nabkl,nbj->nijkl", W, T4, W)
    return term1 + term2 - term3


def abreu_value(u: PotentialField, pts):
    """Abreu operator sum_ij d_i d_j W^{ij} at arbitrary points (analytic route)."""
    F = inverse_hessian_second_derivatives(u, pts)
    return F[:, 0, 0, 0, 0] + 2.0 * F[:, 0, 1, 0, 1] + F[:, 1, 1, 1, 1]


def curvature_norm(u: PotentialField, pts):
    """|F| at arbitrary points (analytic route)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    H = u.hessian(pts)
    W, _ = _invert_spd(H, pts)
    F = inverse_hessian_second_derivatives(u, pts)
    absF2 = np.einsum("nijkl,nabcd,nia,njb,nkc,nld->n", F, F, H, H, W, W)
    return np.sqrt(np.maximum(absF2, 0.0))


# ---------------------------------------------------------------------------
# constructors


def guillemin_potential(p: WeightedPolygon, n=65) -> PotentialField:
    """The canonical potential sum_E lambda_E log lambda_E with zero correction."""
    return PotentialField(
        p,
        CanonicalPart.from_edges(p.edges),
        grid=Grid(p, n),
        pin_point=p.centroid,
    )


def quarter_plane_model(truncation=4.0, n=65) -> PotentialField:
    """Scalar-flat model x log x + y log y on the (truncated) quarter plane."""
    dom = QuarterPlaneDomain(truncation)
    canonical = CanonicalPart(
        [EdgeLogTerm(1.0, 0.0, 0.0), EdgeLogTerm(0.0, 1.0, 0.0)]
    )
    return PotentialField(dom, canonical, grid=Grid(dom, n))


def half_plane_model(truncation=4.0, n=65) -> PotentialField:
    """Scalar-flat model x log x + y^2/2 on the (truncated) half plane.

    Satisfies the boundary conditions along {x = 0} but admits unbounded
    gradient increments in the y-direction.
    """
    dom = HalfPlaneDomain(truncation)
    canonical = CanonicalPart(
        [EdgeLogTerm(1.0, 0.0, 0.0), QuadraticTerm(np.array([[0.0, 0.0], [0.0, 1.0]]))]
    )
    return PotentialField(dom, canonical, grid=Grid(dom, n))


def free_quadratic_potential(Q=None, truncation=4.0, n=33) -> PotentialField:
    """(1/2) x^T Q x on a truncated plane; flat Euclidean test case."""
    dom = PlaneDomain(truncation)
    Q = np.eye(2) if Q is None else np.asarray(Q, dtype=float)
    return PotentialField(dom, CanonicalPart([QuadraticTerm(Q)]), grid=Grid(dom, n))


# ---------------------------------------------------------------------------
# Legendre transform


class VertexChart:
    """Chart at a vertex using the two defining functions as coordinates."""

    def __init__(self, u: PotentialField, vertex_index: int):
        p = u.domain
        if not isinstance(p, WeightedPolygon):
            # models: the corner chart of the quarter plane
            M = np.eye(2)
            for k, e in enumerate(p.edges[:2]):
                a1, a2, c = e.lambda_coeffs
                M[k] = (a1, a2)
            b = np.array([e.lambda_coeffs[2] for e in p.edges[:2]])
        else:
            n = p.n_edges
            i = int(vertex_index) % n
            e_here = p.edges[i]
            e_prev = p.edges[(i - 1) % n]
            rows = [e_here.lambda_coeffs, e_prev.lambda_coeffs]
            M = np.array([r[:2] for r in rows])
            b = np.array([r[2] for r in rows])
        self.u = u
        self.M = M
        self.offset = b

    def to_chart(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.M.T + self.offset

    def xi(self, x):
        """Gradient coordinates xi = grad_y u(y) at chart points of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.linalg.solve(self.M.T, self.u.gradient(x).T).T

    def phi(self, xi, tol=1e-12, max_iter=80):
        """sup_y <y, xi> - u(y) by damped Newton on grad u(x) = M^T xi."""
        xi = np.asarray(xi, dtype=float)
        target = self.M.T @ xi
        u = self.u
        g = u.grid
        pts = g.points_of(g.kept)
        vals = pts @ target - u.value(pts)
        x = pts[int(np.argmax(vals))].copy()
        for _ in range(max_iter):
            grad = u.gradient(x) - target
            if np.max(np.abs(grad)) < tol * (1.0 + np.max(np.abs(target))):
                y = self.to_chart(x)[0]
                return float(y @ xi - u.value(x))
            H = u.hessian(x)
            step = np.linalg.solve(H, -grad)
            t = 1.0
            while t > 1e-12:
                xn = x + t * step
                if u.domain.contains(np.atleast_2d(xn), margin=1e-12)[0]:
                    break
                t *= 0.5
            else:
                raise OutOfRangeError(f"gradient equation left the domain at xi={xi}")
            x = x + t * step
        raise OutOfRangeError(f"Newton did not converge for xi={xi}")


def legendre_transform(u: PotentialField, vertex_index=0) -> VertexChart:
    """Chart object exposing phi(xi) and xi(x) for the chosen vertex."""
    return VertexChart(u, vertex_index)


# ---------------------------------------------------------------------------
# rescaling


def rescale_potential(u: PotentialField, lam: float, n=None) -> PotentialField:
    """The dilated potential lam * u(x/lam) on the dilated domain.

    Boundary conditions for the dilated weights hold by construction: the
    new canonical part is built from the dilated domain and the closed-form
    difference is absorbed into the correction (it stays smooth).
    """
    if lam <= 0:
        raise ValueError("scale factor must be positive")
    dom = u.domain
    if isinstance(dom, WeightedPolygon):
        new_dom = rescale_polygon(dom, lam)
    elif isinstance(dom, QuarterPlaneDomain):
        new_dom = QuarterPlaneDomain(lam * dom.truncation)
    elif isinstance(dom, HalfPlaneDomain):
        new_dom = HalfPlaneDomain(lam * dom.truncation)
    elif isinstance(dom, PlaneDomain):
        new_dom = PlaneDomain(lam * dom.truncation)
    else:
        raise TypeError("cannot rescale this domain")

    if isinstance(new_dom, WeightedPolygon):
        new_canonical = CanonicalPart.from_edges(new_dom.edges)
    else:
        new_canonical = CanonicalPart(
            [
                _rescale_term(t, lam)
                for t in u.canonical.terms
            ]
        )
    if n is None:
        n = max(u.grid.nx, u.grid.ny)
    new_grid = Grid(new_dom, n)

    base = u  # closure

    def shrink(pts):
        return np.atleast_2d(np.asarray(pts, dtype=float)) / lam

    kwargs = dict(
        value=lambda pts: lam * base.value(shrink(pts)) - new_canonical.value(np.atleast_2d(pts)),
        gradient=lambda pts: base.gradient(shrink(pts)) - new_canonical.gradient(np.atleast_2d(pts)),
        hessian=lambda pts: base.hessian(shrink(pts)) / lam - new_canonical.hessian(np.atleast_2d(pts)),
    )
    if base.has_analytic_derivatives:
        kwargs["third"] = lambda pts: base.third(shrink(pts)) / lam**2 - new_canonical.third(
            np.atleast_2d(pts)
        )
        kwargs["fourth"] = lambda pts: base.fourth(shrink(pts)) / lam**3 - new_canonical.fourth(
            np.atleast_2d(pts)
        )
    corr = AnalyticCorrection(**kwargs)
    corr.analytic = base.has_analytic_derivatives
    pin = None if base.pin_point is None else lam * base.pin_point
    return PotentialField(new_dom, new_canonical, grid=new_grid, correction=corr, pin_point=pin)


def _rescale_term(term, lam):
    """Model canonical terms transform by lam*t(x/lam) up to affine pieces."""
    if isinstance(term, EdgeLogTerm):
        # lam * (a.x/lam + c) log(a.x/lam + c) = (a.x + lam c) log(...) ; the
        # dilated defining function is a.x + lam c (same linear part), and the
        # leftover -log(lam) * (a.x + lam c) is affine, dropped here and
        # recovered exactly by the correction difference.
        return EdgeLogTerm(term.a[0], term.a[1], lam * term.c)
    if isinstance(term, QuadraticTerm):
        return QuadraticTerm(term.Q / lam)
    raise TypeError("unknown canonical term")
