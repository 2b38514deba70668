from __future__ import annotations

import math

import numpy as np
import pytest

from blacksol import invariants as inv
from blacksol import soliton
from blacksol.grid import diff, quad


def bump(x, a):
    return a * (np.exp(-((x - 0.4) ** 2)) * np.cos(1.3 * x) + 1j * np.sin(x) / np.cosh(x))


def constrain(grid, U, w):
    """Remove the real span of U, iU, U', iU' so that the four modulation conditions hold."""
    dU = diff(grid, U)
    rho = 1 - np.abs(U) ** 2
    dirs = [U, 1j * U, dU, 1j * dU]

    def F(f):
        z = np.array([quad(grid, rho * np.conj(U) * f), quad(grid, rho * np.conj(dU) * f)])
        return np.concatenate([z.real, z.imag])

    a = np.linalg.solve(np.column_stack([F(d) for d in dirs]), F(w))
    return w - sum(ai * d for ai, d in zip(a, dirs))


def test_black_invariants(grid):
    c = inv.conserved(np.tanh(grid.x), grid)
    assert c.E == pytest.approx(4 / 3, abs=1e-8)
    assert c.M == pytest.approx(4 / 3, abs=1e-8)
    assert c.P == pytest.approx(-math.pi, abs=1e-8)
    assert c.P1 is None  # psi vanishes at the centre
    assert c.Lambda == pytest.approx(8 / 3, abs=1e-8)


def test_constant_field(grid):
    c = inv.conserved(np.ones(grid.n), grid)
    assert (c.E, c.M, c.P) == (0.0, 0.0, 0.0)


def test_momentum_slope_small_speed(grid):
    P = inv.conserved(soliton.dark_profile(0.05, grid).profile, grid).P
    assert (P + math.pi) / 0.05 == pytest.approx(16 / 5, rel=0.01)


@pytest.mark.parametrize("c", [0.5, 1.0])
def test_momentum_forms_agree(grid, c):
    U = soliton.dark_profile(c, grid).profile
    cons = inv.conserved(U, grid)
    assert abs(cons.P - inv.momentum_singular(U, grid)) <= 1e-8
    assert abs(cons.P1 + cons.P2 - cons.P) <= 1e-8


def test_momentum_needs_boundary_modulus(grid):
    with pytest.raises(inv.InvariantError):
        inv.momentum(0.3 * np.tanh(grid.x), grid)


def test_phase_jump_detected():
    psi = np.exp(1j * np.array([0.0, 0.1, 2.0, 2.1]))
    with pytest.raises(inv.InvariantError):
        inv.unwrapped_phase(psi)


def test_unwrap_through_branch_cut():
    a = np.linspace(0, 4 * math.pi, 200)
    np.testing.assert_allclose(inv.unwrapped_phase(np.exp(1j * a)), a, atol=1e-12)


@pytest.mark.parametrize("amp", [1e-2, 1e-3])
def test_quadratic_expansion(grid, amp):
    x = grid.x
    phi = np.tanh(x)
    u = amp * np.exp(-((x - 0.3) ** 2)) * np.cos(x)
    v = amp * np.sin(2 * x) / np.cosh(x)
    lhs = inv.lyapunov(phi + u + 1j * v, grid) - inv.lyapunov(phi, grid)
    assert abs(lhs - sum(inv.quadratic_forms(u, v, grid))) <= 1e-9


def test_quadratic_kernels(grid):
    x = grid.x
    zero = np.zeros(grid.n)
    assert abs(inv.quadratic_forms(zero, np.tanh(x), grid)[1]) <= 1e-8
    assert abs(inv.quadratic_forms(1 / np.cosh(x) ** 2, zero, grid)[0]) <= 1e-8


@pytest.mark.parametrize("c", [0.0, 0.3])
def test_mass_expansion(grid, c):
    U = soliton.family_profile(c, 1.0, grid)
    rho = 1 - np.abs(U) ** 2
    w = constrain(grid, U, bump(grid.x, 0.01))
    eta = np.abs(U + w) ** 2 - np.abs(U) ** 2
    dM = inv.conserved(U + w, grid).M - inv.conserved(U, grid).M
    assert abs(dM + 2 * quad(grid, rho * np.abs(w) ** 2) - quad(grid, eta**2)) <= 1e-9


@pytest.mark.parametrize("c", [0.0, 0.3])
def test_momentum_quadratic_under_constraints(grid, c):
    U = soliton.family_profile(c, 1.0, grid)
    P0 = inv.conserved(U, grid).P
    ratios = []
    for a in (2e-2, 1e-2, 5e-3):
        w = constrain(grid, U, bump(grid.x, a))
        eta = np.abs(U + w) ** 2 - np.abs(U) ** 2
        size = quad(grid, np.abs(diff(grid, w)) ** 2 + grid.sech2 * np.abs(w) ** 2) + quad(grid, eta**2)
        dP = math.remainder(inv.conserved(U + w, grid).P - P0, 2 * math.pi)
        ratios.append(abs(dP) / size)
    assert max(ratios) <= 2 * min(ratios) + 1e-3


def test_coercivity(grid):
    assert inv.coercivity_constant(grid) > 0.05
    assert inv.coercivity_constant(grid) == pytest.approx(0.5, abs=1e-6)
    assert inv.coercivity_constant(grid, ()) <= -(2 - 1e-3)
    # the constant is even and phi odd, so constraining against phi alone leaves -2
    assert inv.coercivity_constant(grid, ("phi",)) <= -(2 - 1e-3)
    assert abs(inv.coercivity_constant(grid, ("phi_prime",))) <= 1e-4


def test_jacobian(grid):
    j = inv.cm_jacobian(grid, 0.01)
    assert j.det == pytest.approx(64 / 15, rel=0.01)
    assert abs(j.matrix[1, 1]) <= 2e-3
    assert abs(j.matrix[0, 0]) <= 2e-3
    # frozen value from the 4001-point grid
    assert j.det == pytest.approx(4.26689, abs=1e-5)
    with pytest.raises(inv.InvariantError):
        inv.cm_jacobian(grid, 0.5)


def test_momentum_slope_fit(grid):
    fit = inv.momentum_slope(np.linspace(0.01, 0.1, 4), grid)
    assert fit.slope == pytest.approx(3.2, rel=0.01)
    assert np.all(fit.mass_K > 0.5) and np.all(fit.mass_K < 1.0)


def test_modulation_orbit_point(grid):
    psi = np.exp(0.1j) * np.tanh(grid.x + 0.3)
    f = inv.modulation_decompose(psi, grid)
    assert (f.theta, f.zeta, f.c, f.omega) == pytest.approx((0.1, 0.3, 0.0, 1.0), abs=1e-6)
    assert np.max(np.abs(f.u)) <= 1e-6 and np.max(np.abs(f.v)) <= 1e-6


def test_modulation_dark(grid):
    f = inv.modulation_decompose(soliton.dark_profile(0.05, grid).profile, grid)
    assert f.c == pytest.approx(0.05, abs=1e-3)
    assert f.omega == pytest.approx(1.0, abs=1e-3)


def test_modulation_bump(grid):
    f = inv.modulation_decompose(np.tanh(grid.x) + 0.01 / np.cosh(grid.x), grid)
    assert np.max(np.abs(f.residuals)) <= 1e-8
    assert abs(f.c) <= 0.05 and abs(f.omega - 1) <= 0.05


def test_modulation_far(grid):
    with pytest.raises(inv.ModulationError):
        inv.modulation_decompose(np.ones(grid.n, dtype=complex), grid)


def test_orbital_distance(grid):
    x = grid.x
    assert inv.orbital_distance(np.exp(0.1j) * np.tanh(x + 0.3), grid) <= 1e-8
    d = [inv.orbital_distance(np.tanh(x) + a / np.cosh(x), grid) for a in (0.005, 0.01, 0.02)]
    assert 0 < d[1] < 0.05
    assert d[0] < d[1] < d[2]
    _, th, ze = inv.orbital_distance(np.exp(-0.2j) * np.tanh(x - 0.5), grid, return_params=True)
    assert (th, ze) == pytest.approx((-0.2, -0.5), abs=1e-8)


def test_phase_distance(grid):
    t = np.tanh(grid.x)
    assert inv.phase_distance(np.exp(0.7j) * t, t, grid) <= 1e-12
    assert inv.phase_distance(np.tanh(grid.x + 0.1), t, grid) > 0.01
