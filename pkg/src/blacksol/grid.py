"""Uniform grid on [-L, L] with Simpson quadrature and fourth-order differences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    L: float
    n: int
    h: float
    x: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n == other.n and self.L == other.L

    def __hash__(self):
        return hash((self.L, self.n))

    @property
    def sech2(self) -> np.ndarray:
        return 1.0 / np.cosh(self.x) ** 2

    def index_of(self, x0: float) -> int:
        return int(round((x0 + self.L) / self.h))


def make_grid(L: float = 20.0, n: int = 4001) -> Grid:
    if not np.isfinite(L) or L <= 0:
        raise GridError(f"half width must be positive, got {L}")
    if int(n) != n or n < 5:
        raise GridError(f"need at least 5 nodes, got {n}")
    n = int(n)
    if n % 2 == 0:
        raise GridError(f"even node count {n}; Simpson quadrature needs an odd count")
    h = 2.0 * L / (n - 1)
    i = np.arange(n) - (n - 1) // 2
    x = i * h  # exact 0 at the centre and exact symmetry
    x[0], x[-1] = -L, L
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= h / 3.0
    x.flags.writeable = False
    w.flags.writeable = False
    return Grid(float(L), n, h, x, w)


def check_field(grid: Grid, f) -> np.ndarray:
    f = np.asarray(f)
    if f.shape != (grid.n,):
        raise GridError(f"field has shape {f.shape}, grid has {grid.n} nodes")
    if not np.all(np.isfinite(f)):
        raise GridError("field has non-finite samples")
    return f


def quad(grid: Grid, f) -> float | complex:
    """Composite Simpson approximation of the integral over [-L, L]."""
    f = check_field(grid, f)
    return grid.weights @ f


def diff(grid: Grid, f, order: int = 1) -> np.ndarray:
    """Fourth-order finite differences, one-sided at the two outer layers."""
    f = check_field(grid, f)
    h = grid.h
    out = np.empty_like(f, dtype=np.result_type(f, float))
    if order == 1:
        out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
        out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
        out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
        out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
        out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    elif order == 2:
        if grid.n < 6:
            raise GridError("second derivative needs at least 6 nodes")
        h2 = 12 * h * h
        out[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / h2
        out[0] = (45 * f[0] - 154 * f[1] + 214 * f[2] - 156 * f[3] + 61 * f[4] - 10 * f[5]) / h2
        out[1] = (10 * f[0] - 15 * f[1] - 4 * f[2] + 14 * f[3] - 6 * f[4] + f[5]) / h2
        out[-1] = (45 * f[-1] - 154 * f[-2] + 214 * f[-3] - 156 * f[-4] + 61 * f[-5] - 10 * f[-6]) / h2
        out[-2] = (10 * f[-1] - 15 * f[-2] - 4 * f[-3] + 14 * f[-4] - 6 * f[-5] + f[-6]) / h2
    else:
        raise GridError(f"order must be 1 or 2, got {order}")
    return out


def weighted_inner(grid: Grid, f, g) -> float | complex:
    """sech^2-weighted product, conjugate-linear in the first slot."""
    f = check_field(grid, f)
    g = check_field(grid, g)
    val = quad(grid, grid.sech2 * np.conj(f) * g)
    if np.isrealobj(f) and np.isrealobj(g):
        return float(val)
    return complex(val)
