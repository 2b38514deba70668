"""Closed-form reference fields attached to the black soliton tanh(x)."""

from __future__ import annotations

import numpy as np

from .grid import Grid, diff

TAGS = ("phi", "phi_prime", "v_phi", "u_phi", "Kminus_phi_prime", "Kplus_phi")

# g(y) = log1p(y)/y - 1 = sum_{k>=1} (-1)^k y^k / (k+1); 12 terms reach round-off for y < 1e-2
_G_COEF = np.array([(-1.0) ** k / (k + 1) for k in range(12, 0, -1)])


def _g(y: np.ndarray) -> np.ndarray:
    small = y < 1e-2
    out = np.empty_like(y)
    ys = y[small]
    out[small] = np.polyval(np.append(_G_COEF, 0.0), ys)
    yl = y[~small]
    out[~small] = np.log1p(yl) / yl - 1.0
    return out


def _kplus_phi(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    out = np.empty_like(ax)
    near = ax <= 1.0
    xn = ax[near]
    out[near] = xn * np.cosh(2 * xn) - np.sinh(2 * xn) * np.log(2 * np.cosh(xn)) + 0.5 * np.tanh(xn)
    xf = ax[~near]
    y = np.exp(-2 * xf)
    g = _g(y)
    out[~near] = xf * y - 0.5 * g + 0.5 * (g + 1.0) * y * y - y / (1.0 + y)
    return np.sign(x) * out


def sech2(x):
    return 1.0 / np.cosh(x) ** 2


def eval_closed_form(tag: str, x) -> np.ndarray | float:
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s2 = sech2(x)
    if tag == "phi":
        out = np.tanh(x)
    elif tag == "phi_prime":
        out = s2
    elif tag == "v_phi":
        out = 0.25 * s2 - 0.5
    elif tag == "u_phi":
        out = -0.25 * x * s2
    elif tag == "Kminus_phi_prime":
        out = 4.0 / 7.0 + s2 / 7.0
    elif tag == "Kplus_phi":
        out = _kplus_phi(x)
    else:
        raise KeyError(f"unknown closed form {tag!r}; expected one of {TAGS}")
    return float(out[0]) if scalar else out


def sample(tag: str, grid: Grid) -> np.ndarray:
    return eval_closed_form(tag, grid.x)


def verify_generalized_eigenvectors(grid: Grid) -> dict[str, float]:
    """Sup residuals of the kernel and Jordan-chain relations at the sampled closed forms.

    Relations are checked in multiplied-out form, e.g. L- v_phi = sech^2 phi'
    rather than cosh^2 L- v_phi = phi', so that finite-difference error is not
    amplified by cosh^2 at the domain ends.
    """
    x = grid.x
    phi, dphi = np.tanh(x), sech2(x)
    w = dphi
    v, u = sample("v_phi", grid), sample("u_phi", grid)

    def Lminus(f):
        return -diff(grid, f, 2) + (2 * phi**2 - 2) * f

    def Lplus(f):
        return -diff(grid, f, 2) + (6 * phi**2 - 2) * f

    return {
        "Lminus_v_phi": float(np.max(np.abs(Lminus(v) - w * dphi))),
        "Lplus_u_phi": float(np.max(np.abs(Lplus(u) + w * phi))),
        "Lplus_phi_prime": float(np.max(np.abs(Lplus(dphi)))),
        "Lminus_phi": float(np.max(np.abs(Lminus(phi)))),
    }
