"""Time stepping for i(1-|psi|^2) psi_t + psi_xx + 2(1-|psi|^2) psi = eps V psi (standing frame).

The nonlinear stepper is experimental: well-posedness of the model is open,
so runs only monitor the admissible set |psi| < 1 and abort on violation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .grid import Grid, check_field
from .invariants import _coarse_orbit_fit, conserved, orbital_distance, phase_distance
from .operators import NEUMANN, WeightedPencil, assemble, neg_laplacian, row_scale

W_MIN = 1e-12
F_TOL = 1e-8  # tails where the weight is floored carry ~1e-9 round-off in |psi|
DT_MAX = 0.1


class EvolutionError(RuntimeError):
    pass


class AdmissibleSetViolation(EvolutionError):
    pass


# ------------------------------------------------------------ linearized flow


class LinearizedStepper:
    """Implicit midpoint for W u_t = A- v, W v_t = -A+ u, one sparse LU per time step size."""

    def __init__(self, pencils: tuple[WeightedPencil, WeightedPencil], dt: float):
        if not 0 < abs(dt) <= DT_MAX:
            raise EvolutionError(f"|dt| must lie in (0, {DT_MAX}]")
        Lp, Lm = pencils
        self.dt = dt
        Ap, Am = Lp.sparse(), Lm.sparse()
        Wm, Wp = sp.diags(Lm.W / dt), sp.diags(Lp.W / dt)
        lhs = sp.bmat([[Wm, -0.5 * Am], [0.5 * Ap, Wp]], format="csc")
        self._rhs = sp.bmat([[Wm, 0.5 * Am], [-0.5 * Ap, Wp]], format="csr")
        try:
            self._lu = spla.splu(lhs)
        except RuntimeError as exc:
            raise EvolutionError(f"factorization of the linearized step failed: {exc}") from exc
        self.n = Lp.grid.n

    def __call__(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self._lu.solve(self._rhs @ np.concatenate([u, v]))
        return z[: self.n], z[self.n:]


def step_linearized(u, v, dt: float, pencils=None, grid: Grid | None = None):
    if pencils is None:
        if grid is None:
            raise EvolutionError("need pencils or a grid")
        pencils = (assemble("Lplus", grid), assemble("Lminus", grid))
    return LinearizedStepper(pencils, dt)(np.asarray(u, float), np.asarray(v, float))


def linearized_energy(u, v, pencils) -> float:
    Lp, Lm = pencils
    return float(u @ Lp.A.matvec(u) + v @ Lm.A.matvec(v))


# ------------------------------------------------------------ nonlinear flow


@dataclass
class Monitors:
    t: list = field(default_factory=list)
    E: list = field(default_factory=list)
    M: list = field(default_factory=list)
    P: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    max_abs_psi: list = field(default_factory=list)
    theta_plus: list = field(default_factory=list)
    theta_minus: list = field(default_factory=list)

    COLUMNS = ("t", "E", "M", "P", "dist", "max_abs_psi", "theta_plus", "theta_minus")

    def __len__(self):
        return len(self.t)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def rows(self):
        return zip(*(getattr(self, c) for c in self.COLUMNS))


@dataclass
class EvolutionState:
    t: float
    psi: np.ndarray
    dt: float
    w_min: float = W_MIN
    steps: int = 0
    monitors: Monitors = field(default_factory=Monitors)


class NonlinearStepper:
    """Conservative implicit midpoint with the weight averaged over the step.

    Wbar (psi+ - psi) / dt = i [D2 psi_m + 2 (1 - abar) psi_m - eps V psi_m],
    abar = (|psi+|^2 + |psi|^2) / 2, Wbar = max(1 - abar, w_min), Neumann D2.
    The discrete energy and mass are conserved exactly by this form.  Each
    step is solved by Newton on the real 2n system with a Jacobian that is
    reused across steps and refreshed when convergence slows.
    """

    def __init__(self, grid: Grid, dt: float, potential: tuple[float, np.ndarray] | None = None,
                 w_min: float = W_MIN, tol: float = 1e-12, max_iter: int = 25):
        if not 0 < dt <= DT_MAX:
            raise EvolutionError(f"dt must lie in (0, {DT_MAX}]")
        self.grid, self.dt, self.w_min, self.tol, self.max_iter = grid, dt, w_min, tol, max_iter
        self.K0 = neg_laplacian(grid, NEUMANN)
        self.K0s = self.K0.tosparse()
        self.s = row_scale(grid, NEUMANN)
        self.epsV = np.zeros(grid.n) if potential is None else potential[0] * check_field(grid, potential[1])
        self._lu = None
        self.refreshes = 0
        self.iterations = 0

    def _residual(self, psi_new, psi, a_old):
        a_new = psi_new.real**2 + psi_new.imag**2
        wu = 1.0 - 0.5 * (a_new + a_old)
        wb = np.maximum(wu, self.w_min)
        m = 0.5 * (psi_new + psi)
        rhs = -self.K0.matvec(m.real) - 1j * self.K0.matvec(m.imag) + self.s * (2 * wu - self.epsV) * m
        return self.s * wb * (psi_new - psi) - 1j * self.dt * rhs

    def _factor(self, psi_new, psi, a_old):
        n, dt, s = self.grid.n, self.dt, self.s
        p, q = psi_new.real, psi_new.imag
        wu = 1.0 - 0.5 * (p * p + q * q + a_old)
        floored = wu < self.w_min
        wb = np.where(floored, self.w_min, wu)
        Cr = sp.diags(s * wb)
        Ci = 0.5 * dt * self.K0s - sp.diags(0.5 * dt * s * (2 * wu - self.epsV))
        m = 0.5 * (psi_new + psi)
        z = -s * (psi_new - psi) * (~floored) + 2j * dt * s * m
        zr, zi = z.real, z.imag
        rank = sp.bmat([[sp.diags(zr * p), sp.diags(zr * q)], [sp.diags(zi * p), sp.diags(zi * q)]])
        J = sp.bmat([[Cr, -Ci], [Ci, Cr]]) + rank
        self._lu = spla.splu(J.tocsc())
        self.refreshes += 1

    def step(self, psi: np.ndarray, guess: np.ndarray | None = None) -> np.ndarray:
        n = self.grid.n
        a_old = psi.real**2 + psi.imag**2
        x = psi.copy() if guess is None else guess.copy()
        if self._lu is None:
            self._factor(x, psi, a_old)
        refreshed = False
        prev = math.inf
        h = self.grid.h
        for it in range(self.max_iter + 1):
            G = self._residual(x, psi, a_old)
            # rows carry the factor h; updates stall near 1e-13 in the tails, so test the residual
            if float(np.max(np.abs(G))) <= self.tol * h:
                break
            if it == self.max_iter:
                raise EvolutionError(f"Newton iteration did not contract (residual {np.max(np.abs(G)) / h:.2e})")
            d = self._lu.solve(np.concatenate([-G.real, -G.imag]))
            dx = d[:n] + 1j * d[n:]
            x = x + dx
            size = float(np.max(np.abs(dx)))
            if it >= 4 and size > 0.5 * prev and not refreshed:
                self._factor(x, psi, a_old)
                refreshed = True
            prev = size
        self.iterations += it
        if it > 4 and not refreshed:
            self._factor(x, psi, a_old)  # slow but converged: refresh for the next step
        return x


def _check_admissible(psi: np.ndarray, t: float):
    m = float(np.max(np.abs(psi)))
    if m > 1.0 + F_TOL:
        raise AdmissibleSetViolation(f"|psi| reached {m:.12f} > 1 at t = {t:.6g}; left the admissible set")
    return m


def step_nonlinear(state: EvolutionState, stepper: NonlinearStepper, guess=None) -> EvolutionState:
    psi = stepper.step(state.psi, guess)
    t = state.t + stepper.dt
    _check_admissible(psi, t)
    return EvolutionState(t, psi, stepper.dt, state.w_min, state.steps + 1, state.monitors)


# ------------------------------------------------------------ runs


class _Tracker:
    """Distance monitor: orbital (warm-started) or phase-only to a fixed target."""

    def __init__(self, grid: Grid, target: np.ndarray | None):
        self.grid, self.target = grid, target
        self.params = None

    def __call__(self, psi) -> float:
        if self.target is not None:
            return phase_distance(psi, self.target, self.grid)
        d, th, ze = orbital_distance(psi, self.grid, return_params=True, start=self.params)
        self.params = (th, ze)
        return d


def _record(mon: Monitors, psi, t, grid, tracker):
    c = conserved(psi, grid)
    mon.t.append(t)
    mon.E.append(c.E)
    mon.M.append(c.M)
    mon.P.append(c.P)
    mon.dist.append(tracker(psi) if tracker is not None else math.nan)
    mon.max_abs_psi.append(float(np.max(np.abs(psi))))
    for name, val in (("theta_plus", np.angle(psi[-1])), ("theta_minus", np.angle(psi[0]))):
        series = getattr(mon, name)
        if series:  # continuous in time
            val = series[-1] + math.remainder(val - series[-1], 2 * math.pi)
        series.append(float(val))


def evolve(psi0, grid: Grid, dt: float, T: float, *, potential=None, target=None,
           monitor_every: int = 1, track: bool = True, w_min: float = W_MIN,
           callback=None) -> EvolutionState:
    """March psi0 to time T; monitors are recorded at t = 0 and every monitor_every steps."""
    psi = check_field(grid, np.asarray(psi0, dtype=complex)).copy()
    _check_admissible(psi, 0.0)
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * max(T, 1.0):
        raise EvolutionError("T must be a positive multiple of dt")
    stepper = NonlinearStepper(grid, dt, potential, w_min)
    tracker = _Tracker(grid, target) if track else None
    state = EvolutionState(0.0, psi, dt, w_min)
    _record(state.monitors, psi, 0.0, grid, tracker)
    prev = None
    for k in range(1, nsteps + 1):
        cur = state.psi
        guess = None if prev is None else 2 * cur - prev  # linear extrapolation in time
        state = step_nonlinear(state, stepper, guess)
        prev = cur
        state.t = k * dt  # avoid accumulating round-off in t
        if k % monitor_every == 0 or k == nsteps:
            _record(state.monitors, state.psi, state.t, grid, tracker)
            if callback is not None:
                callback(state)
    return state


def boundary_phase_rates(mon: Monitors, frame: str = "lab") -> tuple[float, float]:
    """Least-squares rates of theta+-(t); the lab frame rotates by -2t relative to the standing frame."""
    t = mon.array("t")
    shift = -2.0 if frame == "lab" else 0.0
    rp = np.polyfit(t, mon.array("theta_plus"), 1)[0] + shift
    rm = np.polyfit(t, mon.array("theta_minus"), 1)[0] + shift
    return float(rp), float(rm)


def relative_drift(series, period: float | None = None) -> float:
    """max |a(t) - a(0)| / |a(0)|; differences taken modulo ``period`` when given (P is mod 2 pi)."""
    a = np.asarray(series, dtype=float)
    d = a - a[0]
    if period is not None:
        d = np.array([math.remainder(x, period) for x in d])
    return float(np.max(np.abs(d)) / max(abs(a[0]), 1e-300))


# ------------------------------------------------------------ output


def fmt(x) -> str:
    """Full 17-significant-digit decimal."""
    return format(float(x), ".17g")


def write_monitors(path, mon: Monitors) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(Monitors.COLUMNS)
        for row in mon.rows():
            w.writerow([fmt(v) for v in row])


def write_snapshot(path, psi: np.ndarray, grid: Grid, t: float, dt: float, eps: float = 0.0) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# t={fmt(t)} dt={fmt(dt)} L={fmt(grid.L)} n={grid.n} eps={fmt(eps)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "re_psi", "im_psi"])
        for x, z in zip(grid.x, psi):
            w.writerow([fmt(x), fmt(z.real), fmt(z.imag)])


def read_snapshot(path) -> tuple[dict, np.ndarray, np.ndarray]:
    with open(path) as fh:
        meta = dict(item.split("=", 1) for item in fh.readline().lstrip("# ").split())
        data = np.loadtxt(fh, delimiter=",", skiprows=1)
    return meta, data[:, 0], data[:, 1] + 1j * data[:, 2]


# ------------------------------------------------------------ scenarios


SCENARIOS = ("orbital_stability", "pinned_oscillation", "pinned_instability", "dark_translation")


@dataclass
class ExperimentResult:
    name: str
    state: EvolutionState
    params: dict
    summary: dict
    series: dict = field(default_factory=dict)

    @property
    def monitors(self) -> Monitors:
        return self.state.monitors


def _defaults(name: str) -> dict:
    base = {"L": 20.0, "n": 4001}
    return base | {
        "orbital_stability": {"amp": 0.01, "dt": 1e-3, "T": 20.0, "monitor_every": 200},
        "pinned_oscillation": {"potential": "neg_sech2", "eps": 0.01, "kick": 1e-3, "dt": 0.02, "T": 120.0,
                               "monitor_every": 10},
        "pinned_instability": {"potential": "sech2", "eps": 0.01, "kick": 1e-4, "dt": 0.01, "T": 50.0,
                               "monitor_every": 10},
        "dark_translation": {"c": 0.1, "dt": 1e-2, "T": 5.0, "monitor_every": 50},
    }[name]


def run_experiment(name: str, params: dict | None = None, grid: Grid | None = None) -> ExperimentResult:
    """Run a named scenario; unknown parameters are rejected."""
    from .grid import make_grid

    if name not in SCENARIOS:
        raise EvolutionError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    p = _defaults(name)
    for k, v in (params or {}).items():
        if k not in p:
            raise EvolutionError(f"unknown parameter {k!r} for {name}")
        p[k] = type(p[k])(v) if not isinstance(p[k], str) else str(v)
    grid = grid or make_grid(p["L"], p["n"])
    return {
        "orbital_stability": _orbital_stability,
        "pinned_oscillation": _pinned_oscillation,
        "pinned_instability": _pinned_instability,
        "dark_translation": _dark_translation,
    }[name](p, grid)


def perturbed_black(grid: Grid, amp: float) -> np.ndarray:
    """phi + i amp sech^2: stays below unit modulus and decays like the weight."""
    return np.tanh(grid.x) + 1j * amp * grid.sech2


def _orbital_stability(p, grid):
    st = evolve(perturbed_black(grid, p["amp"]), grid, p["dt"], p["T"], monitor_every=p["monitor_every"])
    m = st.monitors
    d = m.array("dist")
    summary = {
        "dist_initial": float(d[0]),
        "dist_max_ratio": float(d.max() / d[0]),
        "drift_E": relative_drift(m.E),
        "drift_M": relative_drift(m.M),
        "drift_P": relative_drift(m.P, 2 * math.pi),
        "theta_rate_lab": boundary_phase_rates(m),
    }
    return ExperimentResult("orbital_stability", st, p, summary)


def _pinned_setup(p, grid):
    from .pinning import find_pinning_sites, pinned_spectrum, potential, solve_pinned

    V = potential(p["potential"], grid)
    sites = [s for s in find_pinning_sites(V, grid, (-grid.L / 4, grid.L / 4)) if s.simple]
    if not sites:
        raise EvolutionError("potential has no simple pinning site")
    site = min(sites, key=lambda s: abs(s.s))
    pin = solve_pinned(p["eps"], V, site.s, grid)
    spec = pinned_spectrum(pin)
    # kick along the translation mode, the direction the bifurcating pair grows from
    dphi = np.gradient(pin.profile, grid.x)
    return V, pin, spec, pin.profile + p["kick"] * dphi


def _projection_series(grid, pin, store):
    dphi = np.gradient(pin.profile, grid.x)
    w = grid.sech2
    norm = float(np.sum(w * dphi * dphi))

    def cb(state):
        psi = state.psi
        th = np.angle(np.sum(w * pin.profile * psi))
        r = np.real(np.exp(-1j * th) * psi) - pin.profile
        store.append((state.t, float(np.sum(w * dphi * r) / norm)))

    return cb


def _pinned_instability(p, grid):
    V, pin, spec, psi0 = _pinned_setup(p, grid)
    st = evolve(psi0, grid, p["dt"], p["T"], potential=(p["eps"], V), target=pin.profile.astype(complex),
                monitor_every=p["monitor_every"])
    t, d = st.monitors.array("t"), st.monitors.array("dist")
    win = t >= 0.4 * p["T"]
    rate = float(np.polyfit(t[win], np.log(d[win]), 1)[0])
    lam = float(np.sqrt(spec.lam2)) if spec.lam2 > 0 else math.nan
    summary = {"growth_rate": rate, "lambda_real": lam, "lam2": spec.lam2, "lam2_pred": spec.lam2_pred,
               "rel_error": abs(rate - lam) / lam if lam == lam else math.nan}
    return ExperimentResult("pinned_instability", st, p, summary)


def dominant_frequency(t: np.ndarray, y: np.ndarray) -> float:
    """Frequency of the best single-sinusoid fit, seeded by a zero-padded FFT peak."""
    from scipy.optimize import curve_fit

    y0 = y - y.mean()
    dt = t[1] - t[0]
    nfft = 64 * len(y0)
    spec = np.abs(np.fft.rfft(y0 * np.hanning(len(y0)), nfft))
    freqs = 2 * math.pi * np.fft.rfftfreq(nfft, dt)
    w0 = freqs[1:][np.argmax(spec[1:])]

    def model(tt, a, b, w, c):
        return a * np.cos(w * tt) + b * np.sin(w * tt) + c

    popt, _ = curve_fit(model, t, y, p0=[y0[0], 0.0, w0, y.mean()], maxfev=10000)
    return abs(float(popt[2]))


def _pinned_oscillation(p, grid):
    V, pin, spec, psi0 = _pinned_setup(p, grid)
    proj: list = []
    st = evolve(psi0, grid, p["dt"], p["T"], potential=(p["eps"], V), target=pin.profile.astype(complex),
                monitor_every=p["monitor_every"], callback=_projection_series(grid, pin, proj))
    ts = np.array([0.0] + [a for a, _ in proj])
    ys = np.array([p["kick"]] + [b for _, b in proj])
    freq = dominant_frequency(ts, ys)
    lam = float(np.sqrt(-spec.lam2)) if spec.lam2 < 0 else math.nan
    summary = {"frequency": freq, "lambda_imag": lam, "lam2": spec.lam2, "lam2_pred": spec.lam2_pred,
               "rel_error": abs(freq - lam) / lam if lam == lam else math.nan}
    return ExperimentResult("pinned_oscillation", st, p, summary, {"t": ts, "projection": ys})


def _dark_translation(p, grid):
    from .invariants import modulation_decompose
    from .soliton import dark_profile

    c = p["c"]
    centers: list = []

    def cb(state):
        fr = modulation_decompose(state.psi, grid)
        centers.append((state.t, -fr.zeta, fr.c))

    U = dark_profile(c, grid).profile
    fr0 = modulation_decompose(U, grid)
    centers.append((0.0, -fr0.zeta, fr0.c))
    st = evolve(U, grid, p["dt"], p["T"], monitor_every=p["monitor_every"], track=False, callback=cb)
    t = np.array([a for a, _, _ in centers])
    x = np.array([b for _, b, _ in centers])
    speed = float(np.polyfit(t, x, 1)[0])
    summary = {"speed": speed, "expected": 2 * c, "rel_error": abs(speed - 2 * c) / abs(2 * c)}
    return ExperimentResult("dark_translation", st, p, summary, {"t": t, "center": x})
