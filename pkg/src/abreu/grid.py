"""Regular lattices clipped to a domain, finite differences, grid CSV I/O.

Node (i, j) sits at (x0 + i h, y0 + j h).  Arrays are indexed [i, j]
(x index first).  Three nested node sets matter:

  kept     -- distance to the real boundary >= margin (default 2h); the
              smooth correction lives here,
  inner    -- kept eroded by one ring; Hessians and inverse Hessians are
              formed here (their stencil stays in kept),
  interior -- kept eroded by two rings; fourth-order quantities and solver
              residuals live here.
"""

from __future__ import annotations

import io

import numpy as np
from scipy.interpolate import RectBivariateSpline

__all__ = ["Grid", "Correction", "write_grid_csv", "read_grid_csv"]


def _erode(mask, rings):
    out = mask.copy()
    for _ in range(rings):
        m = out
        shifted = [m]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                s = np.zeros_like(m)
                xs = slice(max(dx, 0), m.shape[0] + min(dx, 0))
                xd = slice(max(-dx, 0), m.shape[0] + min(-dx, 0))
                ys = slice(max(dy, 0), m.shape[1] + min(dy, 0))
                yd = slice(max(-dy, 0), m.shape[1] + min(-dy, 0))
                s[xd, yd] = m[xs, ys]
                shifted.append(s)
        out = np.logical_and.reduce(shifted)
    return out


class Grid:
    """Square-spacing lattice over a domain's bounding box."""

    def __init__(self, domain, n, margin_factor=2.0):
        lo, hi = domain.bounding_box
        span = hi - lo
        h = float(np.max(span)) / (n - 1)
        nx = int(round(span[0] / h)) + 1
        ny = int(round(span[1] / h)) + 1
        self.domain = domain
        self.h = h
        self.x0, self.y0 = float(lo[0]), float(lo[1])
        self.nx, self.ny = nx, ny
        self.xs = self.x0 + h * np.arange(nx)
        self.ys = self.y0 + h * np.arange(ny)
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        self.X, self.Y = X, Y
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        self.margin = margin_factor * h
        dist = domain.distance_to_boundary(pts).reshape(nx, ny)
        self.kept = dist >= self.margin
        self.inner = _erode(self.kept, 1)
        self.interior = _erode(self.kept, 2)

    @property
    def points(self):
        return np.stack([self.X.ravel(), self.Y.ravel()], axis=1)

    def points_of(self, mask):
        return np.stack([self.X[mask], self.Y[mask]], axis=1)

    def node_near(self, point, mask=None):
        """(i, j) of the nearest node carrying `mask` (default: kept)."""
        mask = self.kept if mask is None else mask
        p = np.asarray(point, dtype=float)
        d2 = (self.X - p[0]) ** 2 + (self.Y - p[1]) ** 2
        d2 = np.where(mask, d2, np.inf)
        return np.unravel_index(np.argmin(d2), d2.shape)

    # -- finite differences ------------------------------------------------

    def fd_hessian(self, values):
        """Centered second differences; rows valid where the stencil exists."""
        f = values
        h2 = self.h * self.h
        fxx = np.full_like(f, np.nan)
        fyy = np.full_like(f, np.nan)
        fxy = np.full_like(f, np.nan)
        fxx[1:-1, :] = (f[2:, :] - 2 * f[1:-1, :] + f[:-2, :]) / h2
        fyy[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / h2
        fxy[1:-1, 1:-1] = (
            f[2:, 2:] - f[2:, :-2] - f[:-2, 2:] + f[:-2, :-2]
        ) / (4 * h2)
        return fxx, fxy, fyy

    def fd_gradient(self, values):
        f = values
        gx = np.full_like(f, np.nan)
        gy = np.full_like(f, np.nan)
        gx[1:-1, :] = (f[2:, :] - f[:-2, :]) / (2 * self.h)
        gy[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * self.h)
        return gx, gy


class Correction:
    """Smooth correction sampled on a grid, interpolated bicubically.

    Values outside the kept set are zero; that extension is part of the
    interpolation rule.  The correction stays finite up to the boundary
    (boundary log behaviour lives in the closed-form part).
    """

    def __init__(self, grid: Grid, values=None):
        self.grid = grid
        if values is None:
            values = np.zeros((grid.nx, grid.ny))
        vals = np.array(values, dtype=float)
        if vals.shape != (grid.nx, grid.ny):
            raise ValueError("correction values must match the grid shape")
        vals = np.where(grid.kept, vals, 0.0)
        self.values = vals
        self._spline = None

    def _get_spline(self):
        if self._spline is None:
            kx = min(3, self.grid.nx - 1)
            ky = min(3, self.grid.ny - 1)
            self._spline = RectBivariateSpline(
                self.grid.xs, self.grid.ys, self.values, kx=kx, ky=ky, s=0
            )
        return self._spline

    def with_values(self, values):
        return Correction(self.grid, values)

    def value(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._get_spline().ev(pts[:, 0], pts[:, 1])

    def gradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = self._get_spline()
        return np.stack(
            [s.ev(pts[:, 0], pts[:, 1], dx=1), s.ev(pts[:, 0], pts[:, 1], dy=1)],
            axis=1,
        )

    def hessian(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = self._get_spline()
        x, y = pts[:, 0], pts[:, 1]
        H = np.empty((len(pts), 2, 2))
        H[:, 0, 0] = s.ev(x, y, dx=2)
        H[:, 0, 1] = H[:, 1, 0] = s.ev(x, y, dx=1, dy=1)
        H[:, 1, 1] = s.ev(x, y, dy=2)
        return H

    def node_hessian(self):
        """FD Hessian on the grid (the solver's discretisation of f)."""
        return self.grid.fd_hessian(self.values)


def write_grid_csv(path_or_buf, grid: Grid, f, tensors=None):
    """Grid CSV: header nx,ny,x0,y0,h then rows i,j,x,y,f[,u11,u12,u22,det,absF,abreu].

    Kept nodes only; 17 significant digits.
    """
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        fh.write(f"{grid.nx},{grid.ny},{grid.x0:.17g},{grid.y0:.17g},{grid.h:.17g}\n")
        cols = "i,j,x,y,f"
        if tensors is not None:
            cols += ",u11,u12,u22,det,absF,abreu"
        fh.write(cols + "\n")
        for i in range(grid.nx):
            for j in range(grid.ny):
                if not grid.kept[i, j]:
                    continue
                row = [
                    str(i),
                    str(j),
                    f"{grid.xs[i]:.17g}",
                    f"{grid.ys[j]:.17g}",
                    f"{f[i, j]:.17g}",
                ]
                if tensors is not None:
                    for key in ("u11", "u12", "u22", "det", "absF", "abreu"):
                        arr = tensors[key]
                        row.append(f"{arr[i, j]:.17g}")
                fh.write(",".join(row) + "\n")
    finally:
        if own:
            fh.close()


def read_grid_csv(path_or_buf):
    """Read a grid CSV back as (header dict, records array)."""
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf) if own else path_or_buf
    try:
        head = fh.readline().strip().split(",")
        header = {
            "nx": int(head[0]),
            "ny": int(head[1]),
            "x0": float(head[2]),
            "y0": float(head[3]),
            "h": float(head[4]),
        }
        names = fh.readline().strip().split(",")
        body = fh.read()
    finally:
        if own:
            fh.close()
    data = np.genfromtxt(io.StringIO(body), delimiter=",") if body.strip() else np.empty((0, len(names)))
    data = np.atleast_2d(data)
    records = {name: data[:, k] for k, name in enumerate(names)}
    return header, records
