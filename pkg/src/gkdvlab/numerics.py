"""Uniform grids, finite differences, quadrature and root finding.

All heavier solvers in the package are built on the primitives here: a
uniform 1-D grid, sampled real fields on it, banded differentiation
matrices (4th order in the interior, matching one-sided closures at the
edges) and composite-Simpson quadrature.  Everything is plain float64
numpy; values are treated as immutable once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq


class GridError(ValueError):
    pass


class RootFindError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid with nodes y_min + i*h, i = 0..n-1."""

    y_min: float
    y_max: float
    n: int

    def __post_init__(self):
        if not (self.y_min < self.y_max):
            raise GridError(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if self.n < 16:
            raise GridError(f"need n >= 16, got {self.n}")

    @property
    def h(self) -> float:
        return (self.y_max - self.y_min) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        return self.y_min + self.h * np.arange(self.n)

    def index_of(self, y: float) -> int:
        """Nearest node index to y (clipped to the grid)."""
        return int(np.clip(round((y - self.y_min) / self.h), 0, self.n - 1))


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise GridError(
                f"values shape {vals.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("GridFunction values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float))


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for derivatives 0..m at z from nodes x.

    Returns an (m+1, len(x)) array; row k holds the weights of the k-th
    derivative.  Standard recursive algorithm, exact in rational arithmetic
    up to rounding.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    w = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    w[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = (c4 * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w


@lru_cache(maxsize=64)
def diff_matrix(grid: Grid, order: int, acc: int = 4) -> sp.csr_matrix:
    """Sparse differentiation matrix of the given order.

    Centered stencils of accuracy `acc` in the interior; shifted stencils of
    the same width (hence at least the same accuracy) in the edge rows.
    """
    if order not in (1, 2, 3):
        raise GridError(f"derivative order must be in 1..3, got {order}")
    if acc % 2 != 0 or acc < 2:
        raise GridError("accuracy must be a positive even integer")
    n, h = grid.n, grid.h
    npts = order + acc
    if npts % 2 == 0:
        npts -= 1
    half = npts // 2
    # relative node offsets, in units of h
    xrel = np.arange(npts, dtype=float)
    rows, cols, data = [], [], []
    interior_w = fornberg_weights(half, xrel, order)[order] / h**order
    for i in range(n):
        if i < half:
            start, z = 0, i
        elif i >= n - half:
            start, z = n - npts, i - (n - npts)
        else:
            start = i - half
            rows.extend([i] * npts)
            cols.extend(range(start, start + npts))
            data.extend(interior_w)
            continue
        wt = fornberg_weights(float(z), xrel, order)[order] / h**order
        rows.extend([i] * npts)
        cols.extend(range(start, start + npts))
        data.extend(wt)
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    return mat


def derivative(f: GridFunction, order: int) -> GridFunction:
    """d^order f / dy^order, 4th-order accurate (one-sided at the edges)."""
    mat = diff_matrix(f.grid, order)
    return GridFunction(f.grid, mat @ f.values)


@lru_cache(maxsize=64)
def quad_weights(grid: Grid) -> np.ndarray:
    """Composite Simpson weights (3/8 rule on the tail if needed)."""
    n, h = grid.n, grid.h
    w = np.zeros(n)
    intervals = n - 1
    if intervals % 2 == 0:
        m = n
    else:
        # Simpson on the first n-4 intervals, Newton's 3/8 on the last 3
        m = n - 3
        w[m - 1 :] += (3.0 * h / 8.0) * np.array([1.0, 3.0, 3.0, 1.0])
    ws = np.full(m, 2.0)
    ws[1:-1:2] = 4.0
    ws[0] = ws[-1] = 1.0
    w[:m] += (h / 3.0) * ws
    return w


def integrate(f: GridFunction) -> float:
    return float(quad_weights(f.grid) @ f.values)


def inner(f: GridFunction, g: GridFunction) -> float:
    """L2 scalar product of two fields on the same grid."""
    if f.grid != g.grid:
        raise GridError("inner product requires functions on the same grid")
    return float(quad_weights(f.grid) @ (f.values * g.values))


def find_root(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Bracketed root of a scalar function via Brent's method."""
    flo, fhi = fn(lo), fn(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)):
        raise RootFindError(f"non-finite evaluation at bracket ends: {flo}, {fhi}")
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0.0:
        raise RootFindError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    return float(brentq(fn, lo, hi, xtol=tol, rtol=8.9e-16))
