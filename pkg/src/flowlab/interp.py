"""Bilinear interpolation of node fields at continuous points."""

from __future__ import annotations

import numpy as np


class BilinearField:
    """Bilinear interpolant of a per-node scalar field.

    Gradients are central differences at the nodes (one-sided at the grid
    edge), themselves bilinearly interpolated, giving a continuous gradient
    field that is exact for quadratic potentials away from the edge.
    """

    def __init__(self, domain, values):
        self.domain = domain
        self.grid = np.asarray(values, dtype=float).reshape(domain.nx, domain.ny)
        h = domain.h
        gx = np.gradient(self.grid, h, axis=0)
        gy = np.gradient(self.grid, h, axis=1)
        self._gx, self._gy = gx, gy

    def _locate(self, pts):
        dom = self.domain
        ox, oy = dom.origin
        fx = (pts[..., 0] - ox) / dom.h
        fy = (pts[..., 1] - oy) / dom.h
        i = np.clip(np.floor(fx).astype(int), 0, dom.nx - 2)
        j = np.clip(np.floor(fy).astype(int), 0, dom.ny - 2)
        return i, j, fx - i, fy - j

    def _blend(self, grid, pts):
        i, j, u, v = self._locate(pts)
        return ((1 - u) * (1 - v) * grid[i, j] + u * (1 - v) * grid[i + 1, j]
                + (1 - u) * v * grid[i, j + 1] + u * v * grid[i + 1, j + 1])

    def value(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self._blend(self.grid, pts)

    def gradient(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.stack([self._blend(self._gx, pts),
                         self._blend(self._gy, pts)], axis=-1)

    def inside(self, pts):
        x0, x1, y0, y1 = self.domain.bbox
        pts = np.asarray(pts, dtype=float)
        return ((pts[..., 0] >= x0) & (pts[..., 0] <= x1)
                & (pts[..., 1] >= y0) & (pts[..., 1] <= y1))
