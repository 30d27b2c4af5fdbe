"""Damped Newton solution of the fourth-order equation Abreu(u) = -A.

Unknowns are the correction values at interior lattice nodes only; the
closed-form canonical part carries the boundary behaviour, so the boundary
conditions are enforced structurally rather than numerically.  The two
outermost rings of kept nodes hold their current values and break the
affine kernel of the linearised operator.

The Jacobian of the discrete residual is assembled analytically: the
residual is a second-difference of the pointwise inverse Hessian, and
d W / d H = -W (dH) W, with dH/df the finite-difference Hessian stencil.
The result is a sparse, stencil-local matrix factorised directly (desk
scale grids make direct solves trivial and robust).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .grid import Correction
from .polygon import ContinuityPath, WeightedPolygon, _as_field, balance_report
from .potential import ConvexityError, PotentialField, guillemin_potential, tensor_samples

__all__ = [
    "SolveState",
    "StagnationError",
    "residual",
    "assemble_jacobian",
    "newton_step",
    "solve",
    "continue_path",
    "ContinuationResult",
]


class StagnationError(RuntimeError):
    """Line search exhausted its damping budget."""


@dataclass
class SolveState:
    potential: PotentialField
    A: object
    residual: np.ndarray
    res_max: float
    res_l2: float
    steps: int = 0
    damping_history: list = field(default_factory=list)
    f_history: list = field(default_factory=list)
    min_eig_history: list = field(default_factory=list)

    @property
    def grid(self):
        return self.potential.grid


def residual(u: PotentialField, A) -> np.ndarray:
    """Abreu(u) + A on interior nodes (NaN elsewhere).

    Raises ConvexityError with the node location if the Hessian degenerates.
    """
    A = _as_field(A)
    ts = tensor_samples(u, route="grid")
    g = u.grid
    out = np.full((g.nx, g.ny), np.nan)
    pts = g.points_of(ts.mask)
    out[ts.mask] = ts.abreu[ts.mask] + A(pts)
    return out


def make_state(u: PotentialField, A, track_f=False) -> SolveState:
    r = residual(u, A)
    g = u.grid
    vals = r[g.interior]
    state = SolveState(
        potential=u,
        A=_as_field(A),
        residual=r,
        res_max=float(np.max(np.abs(vals))),
        res_l2=float(np.sqrt(np.mean(vals**2))),
    )
    state.min_eig_history.append(_min_hessian_eig(u))
    if track_f and isinstance(u.domain, WeightedPolygon):
        from .functionals import f_functional

        state.f_history.append(f_functional(u, A))
    return state


def _min_hessian_eig(u: PotentialField) -> float:
    H11, H12, H22 = u.node_hessians()
    m = u.grid.inner
    tr = H11[m] + H22[m]
    disc = np.sqrt(np.maximum((H11[m] - H22[m]) ** 2 + 4 * H12[m] ** 2, 0.0))
    return float(np.min(0.5 * (tr - disc)))


_D2_STENCILS = {
    # component -> list of (di, dj, weight-factor); divide by h^2 later
    (0, 0): [((-1, 0), 1.0), ((0, 0), -2.0), ((1, 0), 1.0)],
    (1, 1): [((0, -1), 1.0), ((0, 0), -2.0), ((0, 1), 1.0)],
    # carries the factor 2 of the mixed term: 2 * D_xy with 1/(4 h^2) weights
    (0, 1): [((1, 1), 0.5), ((1, -1), -0.5), ((-1, 1), -0.5), ((-1, -1), 0.5)],
}

_FD_HESS_STENCILS = {
    (0, 0): [((-1, 0), 1.0), ((0, 0), -2.0), ((1, 0), 1.0)],
    (1, 1): [((0, -1), 1.0), ((0, 0), -2.0), ((0, 1), 1.0)],
    (0, 1): [((1, 1), 0.25), ((1, -1), -0.25), ((-1, 1), -0.25), ((-1, -1), 0.25)],
}


def assemble_jacobian(u: PotentialField):
    """Sparse Jacobian of the interior residual w.r.t. interior corrections."""
    g = u.grid
    H11, H12, H22 = u.node_hessians()
    det = H11 * H22 - H12**2
    W11 = H22 / det
    W12 = -H12 / det
    W22 = H11 / det

    # dW^{ij}/dH_{ab} with the 12-entry counted once (symmetrised)
    K = {
        (0, 0): {(0, 0): -(W11**2), (0, 1): -2 * W11 * W12, (1, 1): -(W12**2)},
        (0, 1): {
            (0, 0): -W11 * W12,
            (0, 1): -(W11 * W22 + W12**2),
            (1, 1): -W12 * W22,
        },
        (1, 1): {(0, 0): -(W12**2), (0, 1): -2 * W12 * W22, (1, 1): -(W22**2)},
    }

    interior = g.interior
    n_unknown = int(interior.sum())
    unk = -np.ones((g.nx, g.ny), dtype=int)
    unk[interior] = np.arange(n_unknown)
    I, J = np.nonzero(interior)
    h2 = g.h * g.h

    rows, cols, vals = [], [], []
    for comp, d2 in _D2_STENCILS.items():
        for (dmi, dmj), w2 in d2:
            mi, mj = I + dmi, J + dmj
            for ab, cH in _FD_HESS_STENCILS.items():
                Kvals = K[comp][ab][mi, mj]
                for (dpi, dpj), wH in cH:
                    pi, pj = mi + dpi, mj + dpj
                    ok = (pi >= 0) & (pi < g.nx) & (pj >= 0) & (pj < g.ny)
                    col = np.full(len(pi), -1)
                    col[ok] = unk[pi[ok], pj[ok]]
                    ok &= col >= 0
                    if not np.any(ok):
                        continue
                    rows.append(unk[I[ok], J[ok]])
                    cols.append(col[ok])
                    vals.append((w2 / h2) * Kvals[ok] * (wH / h2))
    Jm = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    ).tocsc()
    return Jm, unk


def apply_jacobian(u: PotentialField, delta_values: np.ndarray) -> np.ndarray:
    """J @ delta for a full-grid perturbation array (for gradient checks)."""
    Jm, unk = assemble_jacobian(u)
    g = u.grid
    x = delta_values[g.interior]
    out = np.full((g.nx, g.ny), np.nan)
    out[g.interior] = Jm @ x
    return out


def newton_step(state: SolveState, max_halvings=20, track_f=None) -> SolveState:
    """One damped Newton update preserving convexity and residual decrease."""
    u = state.potential
    g = u.grid
    try:
        Jm, unk = assemble_jacobian(u)
        lu = splu(Jm)
        step = lu.solve(-state.residual[g.interior])
    except RuntimeError as exc:
        raise RuntimeError(
            f"linear solve failed ({exc}); consider refining the grid"
        ) from exc
    if not np.all(np.isfinite(step)):
        raise RuntimeError("linear solve returned non-finite step; refine the grid")

    base = (
        u.correction.values
        if isinstance(u.correction, Correction)
        else np.zeros((g.nx, g.ny))
    )
    delta = np.zeros((g.nx, g.ny))
    delta[g.interior] = step

    track = bool(state.f_history) if track_f is None else track_f
    t = 1.0
    for _ in range(max_halvings + 1):
        cand_vals = base + t * delta
        cand = u.with_grid_values(cand_vals)
        try:
            r = residual(cand, state.A)
        except ConvexityError:
            t *= 0.5
            continue
        vals = r[g.interior]
        l2 = float(np.sqrt(np.mean(vals**2)))
        if l2 <= state.res_l2 * (1.0 + 1e-12):
            new = SolveState(
                potential=cand,
                A=state.A,
                residual=r,
                res_max=float(np.max(np.abs(vals))),
                res_l2=l2,
                steps=state.steps + 1,
                damping_history=state.damping_history + [t],
                f_history=list(state.f_history),
                min_eig_history=list(state.min_eig_history),
            )
            new.min_eig_history.append(_min_hessian_eig(cand))
            if track and isinstance(u.domain, WeightedPolygon):
                from .functionals import f_functional

                new.f_history.append(f_functional(cand, state.A))
            return new
        t *= 0.5
    raise StagnationError("line search exhausted damping (20 halvings)")


def solve(u: PotentialField, A, tol=1e-6, step_tol=1e-10, max_steps=30, track_f=False) -> SolveState:
    """Newton iteration from the given potential until the residual maxes below tol."""
    state = make_state(u, A, track_f=track_f)
    prev_vals = None
    while state.res_max > tol and state.steps < max_steps:
        state = newton_step(state, track_f=track_f)
        vals = (
            state.potential.correction.values
            if isinstance(state.potential.correction, Correction)
            else None
        )
        if prev_vals is not None and vals is not None:
            if float(np.max(np.abs(vals - prev_vals))) < step_tol:
                break
        prev_vals = vals
    return state


@dataclass
class ContinuationResult:
    states: list
    completed: bool
    failure: Optional[dict] = None

    @property
    def last(self):
        return self.states[-1] if self.states else None


def continue_path(path, grid_n=33, tol=1e-6, max_steps=30, track_f=False) -> ContinuationResult:
    """Warm-started Newton solves along a family of balanced data sets.

    Aborts with the partial state list and a diagnostic record if a sample
    fails to converge; an unbalanced sample is rejected up front rather
    than attempted.
    """
    samples = list(path) if not isinstance(path, ContinuityPath) else list(path.samples)
    states = []
    prev_state = None
    for k, (t, poly, A) in enumerate(samples):
        rep = balance_report(poly, A)
        if rep.max_residual > 1e-8 * max(1.0, rep.boundary_mass):
            raise ValueError(f"sample {k} (t={t}) is not balanced")
        u0 = guillemin_potential(poly, n=grid_n)
        if prev_state is not None and isinstance(prev_state.potential.correction, Correction):
            vals = np.zeros((u0.grid.nx, u0.grid.ny))
            pts = u0.grid.points_of(u0.grid.kept)
            vals[u0.grid.kept] = prev_state.potential.correction.value(pts)
            u0 = u0.with_grid_values(vals)
        try:
            st = solve(u0, A, tol=tol, max_steps=max_steps, track_f=track_f)
        except (StagnationError, ConvexityError, RuntimeError) as exc:
            return ContinuationResult(
                states=states,
                completed=False,
                failure={
                    "sample": k,
                    "t": float(t),
                    "error": str(exc),
                    "residual_history": [s.res_max for s in states],
                },
            )
        if st.res_max > tol:
            return ContinuationResult(
                states=states + [st],
                completed=False,
                failure={
                    "sample": k,
                    "t": float(t),
                    "error": f"did not reach tolerance: {st.res_max:.3e}",
                    "residual_history": [s.res_max for s in states] + [st.res_max],
                    "min_eig_history": st.min_eig_history,
                },
            )
        states.append(st)
        prev_state = st
    return ContinuationResult(states=states, completed=True)
