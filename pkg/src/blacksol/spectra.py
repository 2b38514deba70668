"""Weighted eigenproblems for L+/L- and the linear stability problem of the black soliton."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .grid import Grid, weighted_inner
from .linalg import (
    BorderedSolver,
    LanczosBreakdown,
    LinalgError,
    PivotError,
    cholesky_banded,
    lanczos_custom_inner,
    symmetric_ql_dense,
)
from .operators import WeightedPencil, assemble

ZERO_TOL = 1e-6
DEFAULT_SHIFT = {"Lminus": -5.0, "Lplus": -1.0}
EXACT_LADDER = {
    "Lminus": [-2.0] + [(n + 1) * (n + 2) - 2.0 for n in range(60)],
    "Lplus": [n * (n + 5.0) for n in range(60)],
}


class SpectrumError(RuntimeError):
    pass


class ConstraintError(ValueError):
    pass


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    residuals: np.ndarray
    near_zero: int
    lam: np.ndarray | None = None  # stability eigenvalues, +i*sqrt(mu) branch
    info: dict = field(default_factory=dict)


def _residuals(A, Wapply, vals, vecs):
    out = np.empty(len(vals))
    for i, lam in enumerate(vals):
        f = vecs[:, i]
        Wf = Wapply(f)
        out[i] = np.linalg.norm(A(f) - lam * Wf) / np.linalg.norm(Wf)
    return out


def eig_weighted(
    pencil: WeightedPencil,
    k: int,
    sigma: float | None = None,
    *,
    method: str = "lanczos",
    zero_tol: float = ZERO_TOL,
    mass: np.ndarray | None = None,
) -> SpectrumResult:
    """k smallest eigenvalues of A f = lam W f by shift-invert about sigma.

    ``mass`` replaces the diagonal W (e.g. plain quadrature weights for an
    unweighted L^2 problem).  ``method="dense"`` solves the same shifted and
    Cholesky-reduced pencil with LAPACK's QL path (n <= 1500).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    W = pencil.W if mass is None else np.asarray(mass, dtype=float)
    if sigma is None:
        sigma = DEFAULT_SHIFT.get(pencil.kind, -5.0)
    try:
        F = cholesky_banded(pencil.A.add_diagonal(-sigma * W))
    except PivotError as exc:
        raise SpectrumError(f"A - sigma W is not positive definite for sigma={sigma}: {exc}") from exc

    n = pencil.grid.n
    if method == "dense":
        if n > 1500:
            raise SpectrumError("dense fallback is limited to n <= 1500")
        # C = R^-T W R^-1 with B = R^T R; eigenvalues 1/(lam - sigma)
        R = np.triu(_band_to_dense_upper(F.cb))
        sw = np.sqrt(W)
        Y = sla.solve_triangular(R, np.diag(sw), trans="T")
        C = Y @ Y.T
        theta, Z = symmetric_ql_dense(C)
        theta, Z = theta[::-1][:k], Z[:, ::-1][:, :k]
        vecs = sla.solve_triangular(R, Z)
    elif method == "lanczos":
        start = np.cos(np.linspace(0.3, 7.1, n)) + 0.5  # fixed start keeps runs reproducible
        ritz = None
        for attempt in range(4):
            try:
                ritz = lanczos_custom_inner(
                    lambda z: F.solve(W * z), lambda z: W * z, k, True,
                    v0=start, seed=attempt, max_dim=min(n, max(3 * k + 40, 60)),
                )
                break
            except LanczosBreakdown:
                start = start + 1e-3 * np.random.default_rng(attempt).standard_normal(n)
        if ritz is None:
            raise SpectrumError("Lanczos broke down after 3 restarts")
        theta, vecs = ritz.values, ritz.vectors
    else:
        raise ValueError(f"unknown method {method!r}")

    vals = sigma + 1.0 / theta
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # W-normalize with a deterministic sign: first sizeable sample positive
    for i in range(vecs.shape[1]):
        f = vecs[:, i]
        f = f / np.sqrt(f @ (W * f))
        j = np.argmax(np.abs(f) > 1e-3 * np.abs(f).max())
        vecs[:, i] = f if f[j] > 0 else -f
    res = _residuals(pencil.A.matvec, lambda z: W * z, vals, vecs)
    return SpectrumResult(vals, vecs, res, int(np.sum(np.abs(vals) < zero_tol)), info={"sigma": sigma})


def _band_to_dense_upper(cb: np.ndarray) -> np.ndarray:
    b = cb.shape[0] - 1
    n = cb.shape[1]
    R = np.zeros((n, n))
    for k in range(b + 1):
        R[np.arange(n - k), np.arange(k, n)] = cb[b - k, k:]
    return R


def exact_ladder(kind: str, k: int) -> list[float]:
    return EXACT_LADDER[kind][:k]


def sign_changes(f: np.ndarray, rel: float = 1e-6) -> int:
    """Sign changes among samples above rel * max|f| (ignores round-off tails)."""
    g = f[np.abs(f) > rel * np.abs(f).max()]
    return int(np.sum(np.signbit(g[1:]) != np.signbit(g[:-1])))


# ---------------------------------------------------------------- stability


@dataclass
class StabilitySetup:
    grid: Grid
    Lplus: WeightedPencil
    Lminus: WeightedPencil
    constraint_basis: np.ndarray  # columns phi', u_phi
    C: np.ndarray  # W * basis
    _plus: BorderedSolver
    _minus: BorderedSolver

    def B(self, v: np.ndarray) -> np.ndarray:
        """W L+^+ W v, with the L+ solve deflated against phi'."""
        z, _ = self._plus.solve(self.Lplus.W * v)
        return self.Lplus.W * z

    def K(self, f: np.ndarray) -> np.ndarray:
        """Inverse of A- restricted to the constraint subspace."""
        x, _ = self._minus.solve(f)
        return x

    def project(self, v: np.ndarray) -> np.ndarray:
        E, C = self.constraint_basis, self.C
        return v - E @ np.linalg.solve(C.T @ E, C.T @ v)


def stability_setup(grid: Grid, pencils: tuple[WeightedPencil, WeightedPencil] | None = None) -> StabilitySetup:
    if pencils is None:
        pencils = (assemble("Lplus", grid), assemble("Lminus", grid))
    Lp, Lm = pencils
    if Lp.grid != grid or Lm.grid != grid:
        raise SpectrumError("pencils live on a different grid")
    E = np.column_stack([kernels.sample("phi_prime", grid), kernels.sample("u_phi", grid)])
    C = Lm.W[:, None] * E
    plus = BorderedSolver(Lp.sparse(), Lp.W * E[:, 0])
    minus = BorderedSolver(Lm.sparse(), C)
    return StabilitySetup(grid, Lp, Lm, E, C, plus, minus)


def stability_spectrum(
    grid: Grid,
    pencils: tuple[WeightedPencil, WeightedPencil] | None = None,
    k: int = 10,
    constrained: bool = True,
    *,
    zero_tol: float = ZERO_TOL,
) -> SpectrumResult:
    """Stability spectrum in the form L- v = mu W L+^{-1} W v, mu = -lambda^2.

    Constrained: v is restricted to the W-complement of {phi', u_phi}; the
    k smallest mu are returned with lam = i*sqrt(mu) (its negative is the
    paired eigenvalue).  Unconstrained: the discrete kernels of L+ and L-
    are counted, giving the geometric multiplicity at zero.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    S = stability_setup(grid, pencils)
    if not constrained:
        kp = eig_weighted(S.Lplus, 3, zero_tol=zero_tol)
        km = eig_weighted(S.Lminus, 3, zero_tol=zero_tol)
        zp = np.abs(kp.eigenvalues) < zero_tol
        zm = np.abs(km.eigenvalues) < zero_tol
        vals = np.concatenate([kp.eigenvalues[zp], km.eigenvalues[zm]])
        n = grid.n
        vecs = np.zeros((2 * n, vals.size))
        # block vectors (u, v): translation mode (phi', 0), phase mode (0, phi)
        vecs[:n, : zp.sum()] = kp.eigenvectors[:, zp]
        vecs[n:, zp.sum():] = km.eigenvectors[:, zm]
        res = np.concatenate([kp.residuals[zp], km.residuals[zm]])
        return SpectrumResult(vals, vecs, res, int(vals.size),
                              info={"Lplus_near_zero": int(zp.sum()), "Lminus_near_zero": int(zm.sum())})

    A = S.Lminus.A
    start = S.project(np.cos(np.linspace(0.2, 9.0, grid.n)) * (1 + grid.x**2) ** -0.5)
    try:
        ritz = lanczos_custom_inner(
            lambda z: S.K(S.B(z)), A.matvec, k, True,
            v0=start, project=S.project, max_dim=min(grid.n, max(3 * k + 40, 60)),
        )
    except (LanczosBreakdown, LinalgError) as exc:
        raise SpectrumError(f"constrained stability solve failed: {exc}") from exc
    mu = 1.0 / ritz.values
    order = np.argsort(mu)
    mu, vecs = mu[order], ritz.vectors[:, order]
    res = np.empty(mu.size)
    for i in range(mu.size):
        v = vecs[:, i]
        r = A.matvec(v) - mu[i] * S.B(v)
        # Lagrange multipliers of the constraints are not part of the residual
        lagr, *_ = np.linalg.lstsq(S.C, r, rcond=None)
        r = r - S.C @ lagr
        Bv = S.B(v)
        res[i] = np.linalg.norm(r) / np.linalg.norm(mu[i] * Bv)
    lam = 1j * np.sqrt(np.maximum(mu, 0)) + np.sqrt(np.maximum(-mu, 0))
    return SpectrumResult(mu, vecs, res, int(np.sum(np.abs(mu) < zero_tol)), lam=lam,
                          info={"lanczos_steps": ritz.steps})


def rayleigh_quotient(v: np.ndarray, setup: StabilitySetup, tol: float = 1e-10) -> float:
    """Q-(v) / (L+^{-1} W v, W v) for v already satisfying both constraints."""
    v = np.asarray(v, dtype=float)
    pv = setup.project(v)
    if np.linalg.norm(pv - v) > tol * max(np.linalg.norm(v), 1e-300):
        raise ConstraintError("v violates the (phi', u_phi) constraints; project it first")
    den = v @ setup.B(v)
    if abs(den) < 1e-14:
        raise ConstraintError("zero denominator in the Rayleigh quotient")
    return float(v @ setup.Lminus.A.matvec(v) / den)


@dataclass
class JordanChain:
    v_phi: np.ndarray
    u_phi: np.ndarray
    err_v_phi: float
    err_u_phi: float
    pairing_minus: float  # (phi', v_phi)_H
    pairing_plus: float  # (u_phi, phi)_H


def jordan_chain(grid: Grid) -> JordanChain:
    """Solve L- v = W phi' (v orthogonal to phi) and -L+ u = W phi (u orthogonal to phi')."""
    Lp, Lm = assemble("Lplus", grid), assemble("Lminus", grid)
    phi, dphi = kernels.sample("phi", grid), kernels.sample("phi_prime", grid)
    v, _ = BorderedSolver(Lm.sparse(), Lm.W * phi).solve(Lm.W * dphi)
    u, _ = BorderedSolver(Lp.sparse(), Lp.W * dphi).solve(-Lp.W * phi)
    ev = float(np.max(np.abs(v - kernels.sample("v_phi", grid))))
    eu = float(np.max(np.abs(u - kernels.sample("u_phi", grid))))
    return JordanChain(v, u, ev, eu, weighted_inner(grid, dphi, v), weighted_inner(grid, u, phi))
