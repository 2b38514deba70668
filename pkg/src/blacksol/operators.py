"""Discrete L+/L- pencils, the positive operators M+/M-, and the inverses K+/K-.

Every operator is stored as a symmetric banded matrix A together with a
diagonal weight W, so that A f = lam W f stands for the weighted problem.
Rows carry the quadrature factor h (and 1/2 at Neumann ends), which makes
f^T W g the trapezoid approximation of the sech^2-weighted product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .grid import Grid, check_field, weighted_inner
from .linalg import BandedMatrix, CholeskyFactor, LinalgError, cholesky_banded


class OperatorError(ValueError):
    pass


NEUMANN = "neumann"
ROBIN2 = "robin2"


def row_scale(grid: Grid, bc: str) -> np.ndarray:
    """Per-row factor h*D that symmetrizes the closed stencil."""
    d = np.full(grid.n, grid.h)
    if bc == NEUMANN:
        d[0] = d[-1] = 0.5 * grid.h
    return d


def neg_laplacian(grid: Grid, bc: str) -> BandedMatrix:
    """h*D*(-d^2/dx^2), five-point fourth-order stencil with boundary closure.

    neumann: even reflection f[-k] = f[k] with the end rows halved.
    robin2: ghosts from exact exp(+-2x) decay, folded into the diagonal.
    """
    n, h = grid.n, grid.h
    c = 1.0 / (12.0 * h * h)
    d0 = np.full(n, 30.0 * c)
    d1 = np.full(n - 1, -16.0 * c)
    d2 = np.full(n - 2, 1.0 * c)
    if bc == NEUMANN:
        # row 0: 30 f0 - 32 f1 + 2 f2 -> halved; row 1 picks f[-1] = f[1]
        d0[0] = d0[-1] = 15.0 * c
        d0[1] = d0[-2] = 31.0 * c
    elif bc == ROBIN2:
        e1, e2 = np.exp(-2 * h), np.exp(-4 * h)
        d0[0] = d0[-1] = (30.0 - 16.0 * e1 + e2) * c
        d0[1] = d0[-2] = (30.0 + e2) * c
    else:
        raise OperatorError(f"unknown boundary closure {bc!r}")
    # the Neumann end rows above are already halved, so a uniform h finishes the scaling
    return BandedMatrix.from_diagonals([h * d0, h * d1, h * d2])


@dataclass(frozen=True)
class WeightedPencil:
    A: BandedMatrix
    W: np.ndarray  # diagonal, already scaled by h*D
    bc: str
    grid: Grid
    kind: str
    profile: np.ndarray
    weight_fn: np.ndarray  # 1 - p^2 without quadrature factors

    def apply(self, f) -> np.ndarray:
        return self.A.matvec(f)

    def sparse(self) -> sp.csc_matrix:
        return self.A.tosparse()

    def shifted(self, sigma: float) -> BandedMatrix:
        return self.A.add_diagonal(-sigma * self.W)

    @property
    def row_scale(self) -> np.ndarray:
        return row_scale(self.grid, self.bc)


def assemble(
    kind: str,
    grid: Grid,
    potential: Optional[tuple[float, np.ndarray]] = None,
    profile: Optional[np.ndarray] = None,
) -> WeightedPencil:
    """Pencil (A, W) for L+ = -d2 + 6p^2 - 2 + eps V or L- = -d2 + 2p^2 - 2 + eps V."""
    if potential is not None and profile is None:
        raise OperatorError("a potential needs the matching pinned profile")
    p = np.tanh(grid.x) if profile is None else check_field(grid, np.asarray(profile, dtype=float))
    w = 1.0 - p * p
    if profile is not None and np.any(np.abs(p) > 1.0 + 1e-12):
        raise OperatorError("profile reaches |p| >= 1; the weight 1 - p^2 would not be positive")
    if profile is None:
        w = kernels.sech2(grid.x)  # avoids 1 - tanh^2 cancellation
    # the outermost samples may round to |p| = 1; keep the weight positive there
    w = np.maximum(w, np.finfo(float).tiny)
    if kind == "Lplus":
        bc, q = ROBIN2, 6 * p * p - 2
    elif kind == "Lminus":
        bc, q = NEUMANN, 2 * p * p - 2
    else:
        raise OperatorError(f"unknown operator {kind!r}")
    if potential is not None:
        eps, V = potential
        q = q + eps * check_field(grid, np.asarray(V, dtype=float))
    s = row_scale(grid, bc)
    A = neg_laplacian(grid, bc).add_diagonal(s * q)
    return WeightedPencil(A, s * w, bc, grid, kind, p, w)


def positive_operator(kind: str, grid: Grid) -> BandedMatrix:
    """h*D*M-, M- = -d2 + sech^2 (Neumann), or h*D*M+, M+ = -d2 + 4 (robin2)."""
    if kind == "Mminus":
        bc = NEUMANN
        q = kernels.sech2(grid.x)
    elif kind == "Mplus":
        bc = ROBIN2
        q = np.full(grid.n, 4.0)
    else:
        raise OperatorError(f"unknown operator {kind!r}")
    return neg_laplacian(grid, bc).add_diagonal(row_scale(grid, bc) * q)


_FACTORS: dict[tuple, CholeskyFactor] = {}


def _factor(kind: str, grid: Grid) -> CholeskyFactor:
    key = (kind, grid.L, grid.n)
    if key not in _FACTORS:
        try:
            _FACTORS[key] = cholesky_banded(positive_operator(kind, grid))
        except LinalgError as exc:
            raise OperatorError(f"{kind} factorization failed: {exc}") from exc
    return _FACTORS[key]


def apply_Kminus(f, grid: Grid) -> np.ndarray:
    """Bounded solution of -u'' + sech^2 u = sech^2 f."""
    f = check_field(grid, np.asarray(f, dtype=float))
    rhs = row_scale(grid, NEUMANN) * kernels.sech2(grid.x) * f
    return _factor("Mminus", grid).solve(rhs)


def apply_Kplus(f, grid: Grid) -> np.ndarray:
    """Decaying solution of -u'' + 4u = sech^2 f."""
    f = check_field(grid, np.asarray(f, dtype=float))
    rhs = row_scale(grid, ROBIN2) * kernels.sech2(grid.x) * f
    return _factor("Mplus", grid).solve(rhs)


@dataclass(frozen=True)
class NondegeneracyMatrices:
    Aplus: np.ndarray
    Aminus: np.ndarray

    @property
    def det_plus(self) -> float:
        return float(np.linalg.det(self.Aplus))

    @property
    def det_minus(self) -> float:
        return float(np.linalg.det(self.Aminus))


def nondegeneracy_matrices(grid: Grid) -> NondegeneracyMatrices:
    ip = lambda f, g: weighted_inner(grid, f, g)  # noqa: E731
    phi = kernels.sample("phi", grid)
    dphi = kernels.sample("phi_prime", grid)
    v = kernels.sample("v_phi", grid)
    u = kernels.sample("u_phi", grid)
    Kp_phi, Kp_v = apply_Kplus(phi, grid), apply_Kplus(v, grid)
    Km_dphi, Km_u = apply_Kminus(dphi, grid), apply_Kminus(u, grid)
    Ap = np.array([[ip(dphi, Kp_phi), ip(dphi, Kp_v)], [ip(u, Kp_phi), ip(u, Kp_v)]])
    Am = np.array([[ip(phi, Km_dphi), ip(phi, Km_u)], [ip(v, Km_dphi), ip(v, Km_u)]])
    return NondegeneracyMatrices(Ap, Am)
