"""The acceptance suite behind ``blacksol verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import evolve, invariants, kernels, operators, pinning, soliton, spectra
from .grid import Grid, make_grid


@dataclass(frozen=True)
class Outcome:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.number:2d}. {self.name:<24s} {self.seconds:7.1f}s  {self.detail}"


def c1_ladders(g: Grid, zero_tol: float) -> tuple[bool, str]:
    errs = {}
    for kind in ("Lminus", "Lplus"):
        res = spectra.eig_weighted(operators.assemble(kind, g), 5, zero_tol=zero_tol)
        errs[kind] = float(np.max(np.abs(res.eigenvalues - spectra.exact_ladder(kind, 5))))
    return max(errs.values()) <= 1e-3, f"max abs error L-={errs['Lminus']:.2e} L+={errs['Lplus']:.2e}"


def c2_quadruple_zero(g: Grid, zero_tol: float) -> tuple[bool, str]:
    nz = spectra.stability_spectrum(g, constrained=False, zero_tol=zero_tol).near_zero
    jc = spectra.jordan_chain(g)
    pm, pp = abs(jc.pairing_minus + 0.4), abs(jc.pairing_plus + 1.0 / 12.0)
    ok = nz == 2 and max(jc.err_v_phi, jc.err_u_phi) <= 1e-6 and max(pm, pp) <= 1e-6
    return ok, (f"kernel vectors={nz} chain errors={jc.err_v_phi:.1e},{jc.err_u_phi:.1e} "
                f"pairing errors={pm:.1e},{pp:.1e}")


def c3_gap(g: Grid, zero_tol: float) -> tuple[bool, str]:
    mu = spectra.stability_spectrum(g, k=10, zero_tol=zero_tol).eigenvalues
    return bool(np.all(mu > 0.1)) and mu.size == 10, f"min mu={mu.min():.4f} over {mu.size} modes"


def c4_k_images(g: Grid, zero_tol: float) -> tuple[bool, str]:
    em = np.max(np.abs(operators.apply_Kminus(kernels.sample("phi_prime", g), g)
                       - kernels.sample("Kminus_phi_prime", g)))
    ep = np.max(np.abs(operators.apply_Kplus(kernels.sample("phi", g), g) - kernels.sample("Kplus_phi", g)))
    return max(em, ep) <= 1e-6, f"sup errors K-={em:.1e} K+={ep:.1e}"


def c5_momentum(g: Grid, zero_tol: float) -> tuple[bool, str]:
    fit = invariants.momentum_slope(np.linspace(0.01, 0.1, 10), g)
    rel = abs(fit.slope - 3.2) / 3.2
    kr = float(fit.mass_K.max() / fit.mass_K.min())
    return rel <= 0.01 and kr <= 2.0, f"slope={fit.slope:.5f} (rel {rel:.1e}) mass K in [{fit.mass_K.min():.3f}, {fit.mass_K.max():.3f}]"


def c6_jacobian(g: Grid, zero_tol: float) -> tuple[bool, str]:
    det = invariants.cm_jacobian(g, 0.01).det
    rel = abs(det - 64.0 / 15.0) / (64.0 / 15.0)
    return rel <= 0.01, f"det={det:.6f} (rel {rel:.1e})"


def c7_dark(g: Grid, zero_tol: float) -> tuple[bool, str]:
    worst = {"inv": 0.0, "turn": 0.0, "rate": 0.0, "conj": 0.0}
    for c in (0.5, 1.0, 2.0):
        d = soliton.dark_profile(c, g)
        rm, rp = d.turning_points
        worst["inv"] = max(worst["inv"], d.invariant_residual)
        worst["turn"] = max(worst["turn"], abs(rm * rp - 1.0))
        worst["rate"] = max(worst["rate"], abs(d.decay_rate - 2.0))
        worst["conj"] = max(worst["conj"], float(np.max(np.abs(soliton.dark_profile(-c, g).profile - np.conj(d.profile)))))
    ok = worst["inv"] <= 1e-8 and worst["turn"] <= 1e-12 and worst["rate"] <= 1e-2 and worst["conj"] <= 1e-10
    return ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items())


def c8_small_c(g: Grid, zero_tol: float) -> tuple[bool, str]:
    r = [soliton.small_c_residual(c, g) / c**2 for c in (0.2, 0.1, 0.05)]
    return max(r) / min(r) <= 2.0, "ratios " + ", ".join(f"{x:.4f}" for x in r)


def c9_pinning(g: Grid, zero_tol: float) -> tuple[bool, str]:
    lam = {}
    out = {}
    for name in ("neg_sech2", "sech2"):
        V = pinning.potential(name, g)
        for eps in (0.005, 0.01, 0.02):
            p = pinning.solve_pinned(eps, V, 0.0, g)
            out[(name, eps)] = (p, pinning.pinned_spectrum(p))
        lam[name] = [math.sqrt(abs(out[(name, e)][1].lam2)) for e in (0.005, 0.01, 0.02)]
    p, s = out[("neg_sech2", 0.01)]
    pred = math.sqrt(0.01 * 1.25 * p.Veff.d2)
    lam_err = abs(math.sqrt(-s.lam2) - pred) / pred if s.lam2 < 0 else math.inf
    mu_err = abs(s.mu_small - s.mu_pred) / abs(s.mu_pred)
    real_pair = out[("sech2", 0.01)][1].lam2 > 0
    expo = float(np.polyfit(np.log([0.005, 0.01, 0.02]), np.log(lam["neg_sech2"]), 1)[0])
    ok = lam_err <= 0.15 and mu_err <= 0.10 and real_pair and abs(expo - 0.5) <= 0.05
    return ok, f"|lam| rel={lam_err:.1e} mu_small rel={mu_err:.1e} real pair={real_pair} exponent={expo:.4f}"


def c10_evolution(g: Grid, zero_tol: float) -> tuple[bool, str]:
    phi = np.tanh(g.x)
    st = evolve.evolve(phi, g, 1e-2, 10.0, monitor_every=100, track=False)
    stat = float(np.max(np.abs(st.psi - phi)))
    orb = evolve.run_experiment("orbital_stability", {"amp": 0.01, "dt": 1e-3, "T": 20.0}, g).summary
    drift = max(orb["drift_E"], orb["drift_M"], orb["drift_P"])
    inst = evolve.run_experiment("pinned_instability", None, g).summary
    ok = stat <= 1e-6 and drift <= 1e-6 and orb["dist_max_ratio"] <= 5.0 and inst["rel_error"] <= 0.2
    return ok, (f"stationary={stat:.1e} drift={drift:.1e} dist ratio={orb['dist_max_ratio']:.2f} "
                f"growth rel={inst['rel_error']:.1e}")


CRITERIA: list[tuple[int, str, Callable, float, bool]] = [
    (1, "eigenvalue ladders", c1_ladders, 30, True),
    (2, "quadruple zero", c2_quadruple_zero, 60, True),
    (3, "imaginary spectrum", c3_gap, 60, True),
    (4, "K-images", c4_k_images, 10, True),
    (5, "momentum slope", c5_momentum, 60, True),
    (6, "Jacobian determinant", c6_jacobian, 60, True),
    (7, "dark-soliton structure", c7_dark, 30, True),
    (8, "small-c expansion", c8_small_c, 30, True),
    (9, "pinning dichotomy", c9_pinning, 180, True),
    (10, "evolution properties", c10_evolution, 300, False),
]


def run(quick: bool = False, zero_tol: float = spectra.ZERO_TOL, L: float = 20.0, n: int = 4001,
        report: Callable[[Outcome], None] | None = None) -> list[Outcome]:
    """Run criteria 1-10 (``quick`` skips the long evolution runs)."""
    g = make_grid(L, n)
    outcomes = []
    for num, name, fn, budget, in_quick in CRITERIA:
        if quick and not in_quick:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn(g, zero_tol)
        except Exception as exc:  # a crashing criterion is a failing one
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        if dt > budget:
            ok, detail = False, detail + f" (over the {budget:.0f}s budget)"
        o = Outcome(num, name, bool(ok), detail, dt, budget)
        outcomes.append(o)
        if report is not None:
            report(o)
    return outcomes
