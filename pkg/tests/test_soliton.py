from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blacksol import invariants, soliton
from conftest import exact_dark


def test_black_soliton(grid):
    b = soliton.black_soliton(grid)
    assert b[grid.n // 2] == 0
    assert abs(b[-1] - (1 - 2 * math.exp(-40.0))) <= 1e-17
    assert invariants.conserved(b, grid).M == pytest.approx(4 / 3, abs=1e-10)


def test_turning_points_values():
    assert soliton.turning_points(1.0)[0] == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-15)
    assert soliton.turning_points(0.1)[0] == pytest.approx(0.0025, abs=5e-5)
    with pytest.raises(soliton.SolitonError):
        soliton.turning_points(0.0)


@given(st.floats(min_value=1e-3, max_value=10.0), st.booleans())
def test_turning_point_product(c, neg):
    c = -c if neg else c
    rm, rp = soliton.turning_points(c)
    assert rm * rp == pytest.approx(1.0, abs=1e-12)
    # both are roots of c^2 r^2 - (2c^2 + 4) r + c^2
    for r in (rm, rp):
        assert abs(c * c * r * r - (2 * c * c + 4) * r + c * c) <= 1e-10 * max(1.0, r * r * c * c)


@pytest.mark.parametrize("c", [0.05, 0.1, 0.5, 1.0, 2.0, -0.7])
def test_against_closed_form(grid, c):
    d = soliton.dark_profile(c, grid)
    rho, ph = exact_dark(c, grid.x)
    assert np.max(np.abs(d.rho - rho)) <= 1e-10
    assert np.max(np.abs(d.profile - np.sqrt(rho) * np.exp(1j * ph))) <= 1e-8


@pytest.mark.parametrize("c", [0.1, 0.5, 1.0, 2.0])
def test_structure(grid, c):
    d = soliton.dark_profile(c, grid)
    rm, rp = d.turning_points
    assert np.all(d.rho >= rm - 1e-15) and np.all(d.rho <= 1.0)
    assert d.rho[grid.n // 2] == pytest.approx(rm, abs=1e-15)
    np.testing.assert_array_equal(d.rho, d.rho[::-1])
    assert d.invariant_residual <= 1e-8
    assert np.max(np.abs(np.abs(d.profile) ** 2 - d.rho)) <= 1e-14
    assert rm * rp == pytest.approx(1.0, abs=1e-12)
    assert soliton.euler_lagrange_residual(d.profile, c, grid) <= 1e-6


def test_small_speed_values(grid):
    d = soliton.dark_profile(0.1, grid)
    assert abs(d.decay_rate - 2.0) <= 1e-2
    assert abs(abs(d.profile[grid.n // 2]) - 0.05) <= 1e-3
    assert abs(d.theta_plus - 0.1) <= 2e-3


@pytest.mark.parametrize("c", [0.3, 1.5])
def test_conjugation(grid, c):
    a, b = soliton.dark_profile(c, grid), soliton.dark_profile(-c, grid)
    assert np.max(np.abs(b.profile - np.conj(a.profile))) <= 1e-10


def test_small_c_scaling(grid):
    r = {c: soliton.small_c_residual(c, grid) for c in (0.2, 0.1, 0.05)}
    assert r[0.2] > r[0.1] > r[0.05]
    q = (r[0.1] / 0.01) / (r[0.05] / 0.0025)
    assert 0.5 <= q <= 2.0
    assert soliton.small_c_residual(0.0, grid) == 0.0


@pytest.mark.parametrize("omega", [0.8, 1.0, 1.2])
def test_scaled_family(grid, omega):
    U = soliton.family_profile(0.3, omega, grid)
    assert soliton.euler_lagrange_residual(U, 0.3, grid, omega) <= 1e-6


def test_errors(grid):
    with pytest.raises(soliton.SolitonError):
        soliton.dark_profile(0.0, grid)
    with pytest.raises(soliton.SolitonError):
        soliton.dark_profile(11.0, grid)
    with pytest.raises(soliton.SolitonError):
        soliton.family_profile(0.1, 0.0, grid)
    with pytest.raises(soliton.SolitonError):
        soliton.small_c_residual(0.5, grid)
