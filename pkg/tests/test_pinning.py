from __future__ import annotations

import math

import numpy as np
import pytest

from blacksol import pinning


@pytest.fixture(scope="module")
def solves(grid):
    out = {}
    for name in ("neg_sech2", "sech2"):
        V = pinning.potential(name, grid)
        for eps in (0.005, 0.01, 0.02):
            p = pinning.solve_pinned(eps, V, 0.0, grid)
            out[name, eps] = (p, pinning.pinned_spectrum(p))
    return out


def test_effective_potential(grid):
    e = pinning.effective_potential(pinning.potential("sech2", grid), 0.0, grid)
    assert e.value == pytest.approx(4 / 3, abs=1e-8)
    assert abs(e.d1) <= 1e-10
    # int (sech^2)'' sech^2 = -int ((sech^2)')^2 = -16/15
    assert e.d2 == pytest.approx(-16 / 15, abs=1e-8)
    n = pinning.effective_potential(pinning.potential("neg_sech2", grid), 0.0, grid)
    assert n.d2 > 0


def test_gauss_even(grid):
    assert abs(pinning.effective_potential(pinning.potential("gauss(1.5)", grid), 0.0, grid).d1) <= 1e-10


def test_sites(grid):
    sites = pinning.find_pinning_sites(pinning.potential("neg_sech2", grid), grid)
    assert len(sites) == 1 and abs(sites[0].s) <= 1e-10 and sites[0].d2 > 0 and sites[0].simple
    shifted = pinning.find_pinning_sites(pinning.potential("shifted(sech2, 1)", grid), grid)
    assert len(shifted) == 1 and abs(shifted[0].s - 1) <= 1e-8
    with pytest.raises(pinning.PinningError):
        pinning.find_pinning_sites(pinning.potential("zero", grid), grid)
    with pytest.raises(pinning.PinningError):
        pinning.find_pinning_sites(pinning.potential("sech2", grid), grid, bracket=(1.0, 0.0))


def test_csv_potential(grid, tmp_path):
    f = tmp_path / "v.csv"
    xs = np.linspace(-10, 10, 401)
    f.write_text("x,V\n" + "".join(f"{a},{-1 / math.cosh(a) ** 2}\n" for a in xs))
    V = pinning.potential(f"csv:{f}", grid)
    inside = np.abs(grid.x) <= 10
    assert np.max(np.abs(V[inside] + grid.sech2[inside])) <= 1e-6
    assert np.all(V[~inside] == 0)


def test_unknown_potential(grid):
    with pytest.raises(pinning.PinningError):
        pinning.potential("cosh", grid)
    with pytest.raises(pinning.PinningError):
        pinning.potential("gauss(-1)", grid)


def test_integrability_report(grid):
    r = pinning.integrability_report(pinning.potential("sech2", grid), grid)
    assert r["L1"] == pytest.approx(2.0, abs=1e-8)
    assert r["boundary"] < 1e-16


def test_solve_pinned(grid, solves):
    p, _ = solves["neg_sech2", 0.01]
    assert p.residual <= 1e-8
    assert np.max(np.abs(p.profile - np.tanh(grid.x))) <= 0.02
    assert abs(p.a) <= 1e-6
    core = np.abs(grid.x) <= grid.L / 2
    assert np.max(np.abs(p.profile[core])) < 1


def test_order_eps(grid, solves):
    q = [pinning.h2_norm(solves["neg_sech2", e][0].profile - np.tanh(grid.x), grid) / e for e in (0.005, 0.01, 0.02)]
    assert max(q) / min(q) <= 1.1


def test_site_check(grid):
    V = pinning.potential("neg_sech2", grid)
    with pytest.raises(pinning.PinningError):
        pinning.solve_pinned(0.01, V, 0.7, grid)
    with pytest.raises(pinning.PinningError):
        pinning.solve_pinned(0.5, V, 0.0, grid)


def test_shifted_site(grid):
    V = pinning.potential("shifted(neg_sech2, 1)", grid)
    p = pinning.solve_pinned(0.01, V, 1.0, grid)
    assert p.residual <= 1e-8 and abs(p.a) <= 1e-6


def test_predictions(solves):
    p, s = solves["neg_sech2", 0.01]
    assert s.mu_pred == pytest.approx(-0.375 * 0.01 * p.Veff.d2)
    assert s.lam2_pred == pytest.approx(-1.25 * 0.01 * p.Veff.d2)


def test_stable_pin(solves):
    p, s = solves["neg_sech2", 0.01]
    assert s.kind == "imaginary"
    pred = math.sqrt(1.25 * 0.01 * p.Veff.d2)
    assert abs(math.sqrt(-s.lam2) - pred) <= 0.15 * pred
    assert s.mu_small < 0
    assert abs(s.mu_small - s.mu_pred) <= 0.1 * abs(s.mu_pred)


def test_unstable_pin(solves):
    assert solves["sech2", 0.01][1].kind == "real"
    lam = solves["sech2", 0.01][1].lam_pair
    assert lam[0] == pytest.approx(-lam[1])


@pytest.mark.parametrize("name", ["neg_sech2", "sech2"])
def test_sign_dichotomy(solves, name):
    for eps in (0.005, 0.01, 0.02):
        p, s = solves[name, eps]
        assert np.sign(s.lam2) == -np.sign(p.Veff.d2)
        assert s.Lminus_negative == 1
        assert s.Lminus_phi_residual <= 1e-8


@pytest.mark.parametrize("name", ["neg_sech2", "sech2"])
def test_square_root_scaling(solves, name):
    eps = np.array([0.005, 0.01, 0.02])
    lam = [math.sqrt(abs(solves[name, e][1].lam2)) for e in eps]
    assert abs(np.polyfit(np.log(eps), np.log(lam), 1)[0] - 0.5) <= 0.05
