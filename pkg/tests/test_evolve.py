from __future__ import annotations

import math

import numpy as np
import pytest

from blacksol import evolve, kernels, operators, spectra


@pytest.fixture(scope="module")
def pencils(grid):
    return operators.assemble("Lplus", grid), operators.assemble("Lminus", grid)


def test_kernel_mode_fixed(grid, pencils):
    step = evolve.LinearizedStepper(pencils, 1e-3)
    u0 = kernels.sample("phi_prime", grid)
    u, v = u0.copy(), np.zeros(grid.n)
    for _ in range(10):
        un, vn = step(u, v)
        assert max(np.max(np.abs(un - u)), np.max(np.abs(vn - v))) <= 1e-10
        u, v = un, vn


def test_jordan_growth(grid, pencils):
    step = evolve.LinearizedStepper(pencils, 0.01)
    dphi = kernels.sample("phi_prime", grid)
    u, v = np.zeros(grid.n), kernels.sample("v_phi", grid)
    ts, cs = [0.0], [0.0]
    for k in range(1, 101):
        u, v = step(u, v)
        ts.append(0.01 * k)
        cs.append(float(u @ (grid.weights * dphi) / (dphi @ (grid.weights * dphi))))
    assert abs(np.polyfit(ts, cs, 1)[0] - 1) <= 1e-3


def test_eigenmode_rotation(grid, pencils):
    r = spectra.stability_spectrum(grid, pencils, k=1)
    omega = math.sqrt(r.eigenvalues[0])
    v0 = r.eigenvectors[:, 0]
    dt = 0.01
    step = evolve.LinearizedStepper(pencils, dt)
    u, v = np.zeros(grid.n), v0.copy()
    e0 = evolve.linearized_energy(u, v, pencils)
    for _ in range(100):
        u, v = step(u, v)
    assert abs(evolve.linearized_energy(u, v, pencils) - e0) <= 1e-8 * e0
    # implicit midpoint advances a mode of frequency w by 2 atan(w dt / 2) per step
    wd = 2 / dt * math.atan(omega * dt / 2)
    assert np.max(np.abs(v - v0 * math.cos(100 * dt * wd))) <= 1e-8 * np.max(np.abs(v0))


def test_time_reversal(grid, pencils):
    x = grid.x
    u0 = np.exp(-x * x) * np.sin(x)
    v0 = np.exp(-0.5 * x * x)
    u, v = evolve.LinearizedStepper(pencils, -0.01)(*evolve.LinearizedStepper(pencils, 0.01)(u0, v0))
    assert max(np.max(np.abs(u - u0)), np.max(np.abs(v - v0))) <= 1e-10


def test_linearized_dt_bounds(grid, pencils):
    with pytest.raises(evolve.EvolutionError):
        evolve.LinearizedStepper(pencils, 0.0)
    with pytest.raises(evolve.EvolutionError):
        evolve.step_linearized(np.zeros(3), np.zeros(3), 0.01)


def test_stationary(grid):
    phi = np.tanh(grid.x)
    st = evolve.evolve(phi, grid, 1e-2, 10.0, monitor_every=100, track=False)
    assert np.max(np.abs(st.psi - phi)) <= 1e-6
    assert st.steps == 1000 and st.t == pytest.approx(10.0)
    rp, rm = evolve.boundary_phase_rates(st.monitors)
    assert rp == pytest.approx(-2.0, rel=0.1) and rm == pytest.approx(-2.0, rel=0.1)


def test_short_conservation(grid):
    st = evolve.evolve(evolve.perturbed_black(grid, 0.01), grid, 1e-3, 1.0, monitor_every=1)
    m = st.monitors
    assert len(m) == st.steps + 1 == 1001
    assert evolve.relative_drift(m.E) <= 1e-6
    assert evolve.relative_drift(m.M) <= 1e-6
    assert evolve.relative_drift(m.P, 2 * math.pi) <= 1e-6
    assert np.all(m.array("max_abs_psi") <= 1 + evolve.F_TOL)


def test_admissible_set(grid):
    with pytest.raises(evolve.AdmissibleSetViolation):
        evolve.evolve(1.1 * np.tanh(grid.x), grid, 1e-2, 1.0)


def test_bad_horizon(grid):
    with pytest.raises(evolve.EvolutionError):
        evolve.evolve(np.tanh(grid.x), grid, 0.03, 0.1)


def test_dark_translation(grid):
    res = evolve.run_experiment("dark_translation", None, grid)
    assert res.summary["speed"] == pytest.approx(0.2, rel=0.02)


def test_pinned_oscillation(grid):
    res = evolve.run_experiment("pinned_oscillation", None, grid)
    assert res.summary["rel_error"] <= 0.1


def test_experiment_validation(grid):
    with pytest.raises(evolve.EvolutionError):
        evolve.run_experiment("collapse", None, grid)
    with pytest.raises(evolve.EvolutionError):
        evolve.run_experiment("orbital_stability", {"gamma": 1.0}, grid)


def test_dominant_frequency():
    t = np.linspace(0, 60, 601)
    assert evolve.dominant_frequency(t, 0.3 * np.cos(0.7 * t + 0.4) + 0.1) == pytest.approx(0.7, rel=1e-8)


def test_snapshot_round_trip(coarse, tmp_path):
    psi = np.tanh(coarse.x) + 1e-3j / np.cosh(coarse.x) + 1 / 3
    path = tmp_path / "snap.csv"
    evolve.write_snapshot(path, psi, coarse, 1.25, 0.01, 0.02)
    meta, x, z = evolve.read_snapshot(path)
    assert float(meta["t"]) == 1.25 and int(meta["n"]) == coarse.n
    np.testing.assert_array_equal(x, coarse.x)
    np.testing.assert_array_equal(z, psi)
