"""Pinned black solitons in a weak potential eps V and their small eigenvalues."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .grid import Grid, check_field, diff, quad
from .linalg import BorderedSolver
from .operators import NEUMANN, assemble, neg_laplacian, row_scale
from .spectra import eig_weighted

EPS_MAX = 0.05
SIMPLE_TOL = 1e-6


class PinningError(RuntimeError):
    pass


# ------------------------------------------------------------ potentials


def _sech2(x):
    return 1.0 / np.cosh(x) ** 2


def potential(spec: str, grid: Grid) -> np.ndarray:
    """Named potential sampled on the grid.

    sech2, neg_sech2, gauss(sigma) = exp(-x^2 / (2 sigma^2)),
    shifted(name, x0) = name(x - x0), or csv:PATH with x,V columns.
    """
    return _potential_fn(spec.strip())(grid.x)


def _potential_fn(spec: str):
    if spec == "sech2":
        return _sech2
    if spec == "neg_sech2":
        return lambda x: -_sech2(x)
    if spec in ("zero", "0"):
        return np.zeros_like
    m = re.fullmatch(r"gauss\(\s*([^)]+)\)", spec)
    if m:
        sig = float(m.group(1))
        if sig <= 0:
            raise PinningError("gauss width must be positive")
        return lambda x: np.exp(-(x**2) / (2 * sig * sig))
    m = re.fullmatch(r"shifted\(\s*(.+)\s*,\s*([^,()]+)\)", spec)
    if m:
        inner, x0 = _potential_fn(m.group(1).strip()), float(m.group(2))
        return lambda x: inner(x - x0)
    if spec.startswith("csv:"):
        return _csv_potential(spec[4:])
    raise PinningError(f"unknown potential {spec!r}")


def _csv_potential(path: str):
    xs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                xs.append(float(row[0]))
                vs.append(float(row[1]))
            except ValueError:
                if xs:
                    raise PinningError(f"bad row in {path}: {row}") from None
                continue  # header
    if len(xs) < 4:
        raise PinningError(f"{path}: need at least 4 samples")
    order = np.argsort(xs)
    xs, vs = np.asarray(xs)[order], np.asarray(vs)[order]
    spline = CubicSpline(xs, vs)

    def V(x):
        out = np.zeros_like(x, dtype=float)
        inside = (x >= xs[0]) & (x <= xs[-1])
        out[inside] = spline(x[inside])
        return out

    return V


def integrability_report(V: np.ndarray, grid: Grid) -> dict[str, float]:
    """Diagnostics only: the solver accepts any sampled decaying V."""
    V = check_field(grid, V)
    return {
        "L1": float(quad(grid, np.abs(V))),
        "L2": float(math.sqrt(quad(grid, V * V))),
        "sup": float(np.abs(V).max()),
        "sup_d2": float(np.abs(diff(grid, V, 2)).max()),
        "boundary": float(max(abs(V[0]), abs(V[-1]))),
    }


# ------------------------------------------------------------ effective potential


@dataclass(frozen=True)
class EffectivePotential:
    value: float
    d1: float
    d2: float


def effective_potential(V, s: float, grid: Grid) -> EffectivePotential:
    """int V(x + s) sech^2(x) dx and its first two s-derivatives.

    Written as int V(y) sech^2(y - s) dy so only the analytic factor is
    shifted; the derivatives fall on V (V', V'' from diff).
    """
    V = check_field(grid, np.asarray(V, dtype=float))
    if abs(s) > grid.L / 2:
        raise PinningError(f"shift s = {s} moves the sech^2 window outside the grid")
    k = _sech2(grid.x - s)
    return EffectivePotential(
        float(quad(grid, V * k)),
        float(quad(grid, diff(grid, V, 1) * k)),
        float(quad(grid, diff(grid, V, 2) * k)),
    )


@dataclass(frozen=True)
class PinningSite:
    s: float
    d2: float
    simple: bool


def find_pinning_sites(V, grid: Grid, bracket: tuple[float, float] | None = None) -> list[PinningSite]:
    """Roots of the effective-potential slope by a 0.1 scan, then brentq and a Newton polish."""
    V = check_field(grid, np.asarray(V, dtype=float))
    lo, hi = bracket if bracket is not None else (-grid.L / 2, grid.L / 2)
    if lo >= hi or lo < -grid.L / 2 or hi > grid.L / 2:
        raise PinningError("bracket must be an interval inside [-L/2, L/2]")
    dV, d2V = diff(grid, V, 1), diff(grid, V, 2)
    noise = 1e-13 * max(np.abs(V).max(), 1e-300)

    def slope(s):
        return float(quad(grid, dV * _sech2(grid.x - s)))

    def curv(s):
        return float(quad(grid, d2V * _sech2(grid.x - s)))

    ss = np.linspace(lo, hi, max(2, int(round((hi - lo) / 0.1)) + 1))
    f = np.array([slope(s) for s in ss])
    roots: list[float] = []
    for i in range(len(ss)):
        if abs(f[i]) < 1e-10 and abs(f[i]) < 1e-3 * np.abs(f).max() and np.abs(f).max() > noise:
            roots.append(float(ss[i]))
        elif i + 1 < len(ss) and f[i] * f[i + 1] < 0 and max(abs(f[i]), abs(f[i + 1])) > noise:
            if abs(f[i + 1]) < 1e-10:
                continue  # picked up at the next node
            r = brentq(slope, ss[i], ss[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
            for _ in range(3):
                c2 = curv(r)
                if c2 == 0:
                    break
                r -= slope(r) / c2
            roots.append(float(r))
    if not roots:
        raise PinningError("no sign change of the effective-potential slope in the bracket")
    return [PinningSite(r, curv(r), abs(curv(r)) > SIMPLE_TOL) for r in roots]


# ------------------------------------------------------------ pinned profile


@dataclass(frozen=True)
class PinnedSoliton:
    eps: float
    V: np.ndarray
    s: float
    a: float
    profile: np.ndarray
    residual: float
    Veff: EffectivePotential
    grid: Grid
    newton_iterations: int
    bordered: bool = False
    mu_pred: float = field(init=False)
    lam2_pred: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mu_pred", -0.375 * self.eps * self.Veff.d2)
        object.__setattr__(self, "lam2_pred", -1.25 * self.eps * self.Veff.d2)


def stationary_residual(p: np.ndarray, eps: float, V: np.ndarray, grid: Grid) -> np.ndarray:
    return diff(grid, p, 2) + 2 * (1 - p * p) * p - eps * V * p


def h2_norm(f: np.ndarray, grid: Grid) -> float:
    return float(math.sqrt(quad(grid, f * f + diff(grid, f, 1) ** 2 + diff(grid, f, 2) ** 2)))


def _smallest_singular(J: sp.csc_matrix, lu) -> float:
    """Inverse iteration estimate of min |eig| of the symmetric Jacobian."""
    x = np.cos(np.linspace(0.0, 3.0, J.shape[0]))
    x /= np.linalg.norm(x)
    for _ in range(12):
        y = lu.solve(x)
        ny = np.linalg.norm(y)
        x = y / ny
    return 1.0 / ny


def _newton(p, eps, V, grid, K0, s_row, *, max_iter=30, tol=1e-12):
    """Full-space Newton; bordered with the translation mode if the Jacobian is near singular."""
    bordered = False
    for it in range(1, max_iter + 1):
        F = K0.matvec(p) + s_row * (2 * p * p - 2 + eps * V) * p  # row-scaled -(stationary residual)
        J = (K0.add_diagonal(s_row * (6 * p * p - 2 + eps * V))).tosparse()
        if not bordered:
            lu = spla.splu(J)
            if _smallest_singular(J, lu) < 1e-8 * grid.h:
                bordered = True
        if bordered:
            t = diff(grid, p, 1)
            dp, _ = BorderedSolver(J, s_row * t).solve(-F)
        else:
            dp = lu.solve(-F)
        p = p + dp
        # the near-translation mode amplifies round-off in dp, so also accept a converged residual
        if np.max(np.abs(dp)) < tol or (np.max(np.abs(F / s_row)) < 1e-11 and np.max(np.abs(dp)) < 1e-8):
            return p, it, bordered
    raise PinningError(f"Newton did not converge in {max_iter} iterations (last step {np.max(np.abs(dp)):.2e})")


def solve_pinned(eps: float, V, s: float, grid: Grid, *, site_check: bool = True) -> PinnedSoliton:
    """phi_eps'' + 2(1 - phi_eps^2) phi_eps = eps V phi_eps near tanh(x - s), continued from eps/4."""
    if not 0 < eps <= EPS_MAX:
        raise PinningError(f"eps must lie in (0, {EPS_MAX}]")
    V = check_field(grid, np.asarray(V, dtype=float))
    Veff = effective_potential(V, s, grid)
    if site_check and (abs(Veff.d1) > 1e-8 or abs(Veff.d2) <= SIMPLE_TOL):
        raise PinningError(f"s = {s} is not a simple pinning site (V' = {Veff.d1:.2e}, V'' = {Veff.d2:.2e})")
    K0 = neg_laplacian(grid, NEUMANN)
    s_row = row_scale(grid, NEUMANN)
    p = np.tanh(grid.x - s)
    its = 0
    bordered = False
    for e in (eps / 4, eps / 2, eps):
        p, k, b = _newton(p, e, V, grid, K0, s_row)
        its += k
        bordered |= b
    core = np.abs(grid.x - s) <= grid.L / 2
    if np.any(np.abs(p[core]) >= 1.0) or np.any(np.abs(p) > 1.0 + 1e-12):
        raise PinningError("pinned profile reaches |phi_eps| >= 1")
    res = float(np.max(np.abs(stationary_residual(p, eps, V, grid))))
    return PinnedSoliton(eps, V, s, _zero_of(p, grid) - s, p, res, Veff, grid, its, bordered)


def _zero_of(p: np.ndarray, grid: Grid) -> float:
    i = int(np.flatnonzero(np.signbit(p[1:]) != np.signbit(p[:-1]))[0])
    lo, hi = max(i - 3, 0), min(i + 5, grid.n)
    sp_ = CubicSpline(grid.x[lo:hi], p[lo:hi])
    if p[i + 1] == 0:
        return float(grid.x[i + 1])
    return float(brentq(sp_, grid.x[i], grid.x[i + 1], xtol=1e-15))


# ------------------------------------------------------------ spectrum


@dataclass(frozen=True)
class PinnedSpectrum:
    mu_small: float
    mu_pred: float
    lam2: float  # lambda^2 of the bifurcating pair; < 0 imaginary, > 0 real
    lam2_pred: float
    lam_pair: tuple[complex, complex]
    Lminus_negative: int
    Lminus_phi_residual: float

    @property
    def kind(self) -> str:
        return "imaginary" if self.lam2 < 0 else "real"


def pinned_pencils(p: PinnedSoliton):
    grid = p.grid
    pot = (p.eps, p.V)
    return assemble("Lplus", grid, pot, p.profile), assemble("Lminus", grid, pot, p.profile)


def pinned_spectrum(p: PinnedSoliton) -> PinnedSpectrum:
    """Small L+(eps) eigenvalue (plain L^2) and the stability pair bifurcating from zero.

    The pair solves L-(eps) v = mu W L+(eps)^{-1} W v on the complement
    (v, B phi_eps) = 0 of the persisting kernel, mu = -lambda^2; the metric
    is indefinite once eps > 0, so the dominant 1/mu is taken with ARPACK.
    """
    grid = p.grid
    Lp, Lm = pinned_pencils(p)
    small = eig_weighted(Lp, 1, sigma=-1.0, mass=Lp.row_scale)
    mu_small = float(small.eigenvalues[0])

    lm = eig_weighted(Lm, 3, sigma=-5.0)
    n_neg = int(np.sum(lm.eigenvalues < -1e-6))
    phi_res = float(np.max(np.abs(Lm.A.matvec(p.profile) / Lm.row_scale)))

    Wp = Lp.W
    plus = spla.splu(Lp.sparse())

    def B(v):
        return Wp * plus.solve(Wp * v)

    c = B(p.profile)
    minus = BorderedSolver(Lm.sparse(), c)
    n = grid.n
    T = spla.LinearOperator((n, n), matvec=lambda v: minus.solve(B(v))[0], dtype=float)
    v0 = np.cos(np.linspace(0.1, 2.9, n)) * grid.sech2 + 1e-3
    vals = spla.eigs(T, k=1, which="LM", v0=v0, tol=1e-12, return_eigenvectors=False)
    theta = vals[0]
    if abs(theta.imag) > 1e-6 * abs(theta):
        raise PinningError(f"dominant eigenvalue {theta} is not real")
    mu = 1.0 / theta.real
    lam2 = -mu
    lam = complex(math.sqrt(lam2)) if lam2 >= 0 else 1j * math.sqrt(-lam2)
    return PinnedSpectrum(mu_small, p.mu_pred, lam2, p.lam2_pred, (lam, -lam), n_neg, phi_res)
