"""Black soliton tanh(x) and the travelling dark solitons U_c.

The intensity rho = |U_c|^2 solves rho'' = -2(1-rho)(3 rho - 1 - c^2 (1-rho)^2)
with first integral (rho')^2 = (1-rho)^2 [4 rho - c^2 (1-rho)^2].  It is
integrated outward from its minimum rho_-(c) at xi = 0, and the phase from
phi_c' = -c (1-rho)^2 / (2 rho) with phi_c(0) = (pi/2) sign(c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import Grid, GridError, diff, make_grid, quad

C_MAX = 10.0
GRADE = 128.0  # core steps scale like (xi + |c|)/GRADE
SWITCH_XI = 1.0  # second-order form up to here, then the decaying first-order branch


class SolitonError(RuntimeError):
    pass


def black_soliton(grid: Grid) -> np.ndarray:
    return np.tanh(grid.x).astype(complex)


def turning_points(c: float) -> tuple[float, float]:
    """Roots rho_- < 1 < rho_+ of 4 rho = c^2 (1 - rho)^2."""
    if c == 0:
        raise SolitonError("turning points degenerate at c = 0 (black soliton)")
    c2 = c * c
    s = math.sqrt(1.0 + c2)
    # rho_- = (c^2 + 2 - 2s)/c^2 written without cancellation
    rho_m = c2 / (s + 1.0) ** 2
    rho_p = (s + 1.0) ** 2 / c2
    return rho_m, rho_p


@dataclass(frozen=True)
class DarkSoliton:
    c: float
    grid: Grid
    rho: np.ndarray
    rho_prime: np.ndarray
    one_minus_rho: np.ndarray
    phase: np.ndarray
    phase_derivative: np.ndarray
    profile: np.ndarray
    turning_points: tuple[float, float]
    theta_plus: float
    theta_minus: float
    beta: float
    decay_rate: float
    decay_amplitude: float  # A_c in 1 - rho ~ -A_c exp(-2|xi|)
    invariant_residual: float


def _substeps(c: float, h: float, n_cells: int) -> list[list[float]]:
    """Step lengths inside each grid cell [j h, (j+1) h] on the right half.

    Steps stay below (xi + |c|)/GRADE so the phase core of width ~|c| is
    resolved, and below h/4 everywhere.
    """
    ac = abs(c)
    cells = []
    r = 1.0 + 1.0 / GRADE
    for j in range(n_cells):
        if j == 0 and ac / GRADE < h / 4.0:
            s0 = ac / (2 * GRADE)
            m = math.ceil(math.log1p(h * (r - 1.0) / s0) / math.log(r))
            s0 = h * (r - 1.0) / (r**m - 1.0)
            cells.append([s0 * r**i for i in range(m)])
        else:
            m = max(4, math.ceil(GRADE * h / (j * h + ac)))
            cells.append([h / m] * m)
    return cells


def _integrate(c: float, grid: Grid):
    h = grid.h
    N = (grid.n - 1) // 2
    c2 = c * c
    rho_m, _ = turning_points(c)
    j_switch = min(N, max(1, int(round(SWITCH_XI / h))))

    rho = np.empty(N + 1)
    drho = np.empty(N + 1)
    tt = np.empty(N + 1)
    ph = np.empty(N + 1)
    ph0 = math.copysign(math.pi / 2, c)

    def f_inner(r):
        t = 1.0 - r
        return -2.0 * t * (3.0 * r - 1.0 - c2 * t * t), -c * t * t / (2.0 * r)

    r, p, q = rho_m, 0.0, ph0
    rho[0], drho[0], tt[0], ph[0] = r, p, 1.0 - r, q
    cells = _substeps(c, h, N)
    for j in range(j_switch):
        for s in cells[j]:
            a1, b1 = f_inner(r)
            a2, b2 = f_inner(r + 0.5 * s * p)
            p2 = p + 0.5 * s * a1
            a3, b3 = f_inner(r + 0.5 * s * p2)
            p3 = p + 0.5 * s * a2
            a4, b4 = f_inner(r + s * p3)
            p4 = p + s * a3
            r += s * (p + 2 * p2 + 2 * p3 + p4) / 6.0
            p += s * (a1 + 2 * a2 + 2 * a3 + a4) / 6.0
            q += s * (b1 + 2 * b2 + 2 * b3 + b4) / 6.0
            if not (0.0 < r < 1.0 + 1e-12):
                raise SolitonError(f"intensity left (0, 1] at xi ~ {j * h:.4f} for c={c}")
        rho[j + 1], drho[j + 1], tt[j + 1], ph[j + 1] = r, p, 1.0 - r, q

    # outer branch: y = log(1 - rho), y' = -sqrt(4 - 4t - c^2 t^2); decays stably
    y = math.log(1.0 - r)

    def f_outer(y):
        t = math.exp(y)
        return -math.sqrt(max(4.0 - 4.0 * t - c2 * t * t, 0.0)), -c * t * t / (2.0 * (1.0 - t))

    for j in range(j_switch, N):
        for s in cells[j]:
            k1y, k1q = f_outer(y)
            k2y, k2q = f_outer(y + 0.5 * s * k1y)
            k3y, k3q = f_outer(y + 0.5 * s * k2y)
            k4y, k4q = f_outer(y + s * k3y)
            y += s * (k1y + 2 * k2y + 2 * k3y + k4y) / 6.0
            q += s * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0
        t = math.exp(y)
        if not (t > -1e-12 and t < 1.0):
            raise SolitonError(f"intensity left (0, 1] at xi ~ {(j + 1) * h:.4f} for c={c}")
        tt[j + 1] = t
        rho[j + 1] = 1.0 - t
        drho[j + 1] = t * math.sqrt(max(4.0 - 4.0 * t - c2 * t * t, 0.0))
        ph[j + 1] = q
    return rho, drho, tt, ph


def _mirror_even(a):
    return np.concatenate([a[:0:-1], a])


def dark_profile(c: float, grid: Grid) -> DarkSoliton:
    """Dark soliton U_c sampled on the grid (c != 0, |c| <= 10)."""
    c = float(c)
    if c == 0.0:
        raise SolitonError("c = 0 is the black soliton; use black_soliton")
    if not abs(c) <= C_MAX:
        raise SolitonError(f"|c| = {abs(c)} outside the supported range (0, {C_MAX}]")
    rho_r, drho_r, t_r, ph_r = _integrate(c, grid)
    sgn = math.copysign(1.0, c)
    rho = _mirror_even(rho_r)
    t = _mirror_even(t_r)
    drho = np.concatenate([-drho_r[:0:-1], drho_r])
    phase = np.concatenate([sgn * math.pi - ph_r[:0:-1], ph_r])
    dphase = -c * t * t / (2.0 * rho)
    U = np.sqrt(rho) * np.exp(1j * phase)

    c2 = c * c
    inv_res = float(np.max(np.abs(drho**2 - t * t * (4.0 * rho - c2 * t * t))))
    x = grid.x
    win = (x >= grid.L / 2) & (x <= 0.75 * grid.L)
    if win.sum() < 3:
        raise SolitonError("decay-fit window holds fewer than 3 nodes")
    slope, icpt = np.polyfit(x[win], np.log(t[win]), 1)
    fit = np.polyval([slope, icpt], x[win])
    if not np.all(np.isfinite(fit)) or np.max(np.abs(fit - np.log(t[win]))) > 1e-3:
        raise SolitonError("decay fit of log(1 - rho) did not converge")
    theta_p, theta_m = float(phase[-1]), float(phase[0])
    return DarkSoliton(
        c, grid, rho, drho, t, phase, dphase, U, turning_points(c),
        theta_p, theta_m, math.sin(theta_p), float(-slope), float(-math.exp(icpt)), inv_res,
    )


def family_profile(c: float, omega: float, grid: Grid) -> np.ndarray:
    """U_{c,omega}(x) = U_c(omega x) sampled on the grid nodes."""
    if omega <= 0:
        raise SolitonError("scale omega must be positive")
    scaled = make_grid(omega * grid.L, grid.n)
    if c == 0:
        return black_soliton(scaled)
    return dark_profile(c, scaled).profile


def small_c_residual(c: float, grid: Grid) -> float:
    """Discrete H^1_- size of U_c - phi + 2ic v_phi."""
    if c == 0:
        d = black_soliton(grid) - np.tanh(grid.x)
    else:
        if not abs(c) <= 0.2:
            raise SolitonError("small-c residual is defined for 0 < |c| <= 0.2")
        d = dark_profile(c, grid).profile - np.tanh(grid.x) + 2j * c * kernels.sample("v_phi", grid)
    dd = diff(grid, d, 1)
    val = quad(grid, grid.sech2 * np.abs(d) ** 2) + quad(grid, np.abs(dd) ** 2)
    return float(np.sqrt(max(val.real, 0.0)))


def euler_lagrange_residual(U: np.ndarray, c: float, grid: Grid, omega: float = 1.0) -> float:
    """Sup norm of U'' + 2 w^2 (1-|U|^2) U - 2i c w (1-|U|^2) U'."""
    w = 1.0 - np.abs(U) ** 2
    r = diff(grid, U, 2) + 2 * omega**2 * w * U - 2j * c * omega * w * diff(grid, U, 1)
    return float(np.max(np.abs(r)))


__all__ = [
    "DarkSoliton", "SolitonError", "black_soliton", "turning_points", "dark_profile",
    "family_profile", "small_c_residual", "euler_lagrange_residual", "GridError",
]
