"""Conserved quantities, quadratic forms, coercivity, and the modulation frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .grid import Grid, check_field, diff, quad, weighted_inner
from .linalg import BorderedSolver, cholesky_banded, lanczos_custom_inner
from .operators import NEUMANN, assemble, neg_laplacian, row_scale
from .soliton import dark_profile, family_profile

PHASE_JUMP_LIMIT = math.pi / 2
PHASE_JUMP_MODULUS = 0.1  # jumps are only policed where both neighbours exceed this modulus


class InvariantError(ValueError):
    pass


class ModulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Conserved:
    E: float
    M: float
    P: float
    P1: float | None
    P2: float | None
    eta: np.ndarray

    @property
    def Lambda(self) -> float:
        return self.E + self.M


def unwrapped_phase(psi: np.ndarray) -> np.ndarray:
    """arg psi accumulated node to node with increments wrapped into [-pi, pi)."""
    a = np.angle(psi)
    d = np.diff(a)
    d = (d + math.pi) % (2 * math.pi) - math.pi
    mod = np.abs(psi)
    big = (mod[1:] > PHASE_JUMP_MODULUS) & (mod[:-1] > PHASE_JUMP_MODULUS)
    if np.any(np.abs(d[big]) > PHASE_JUMP_LIMIT):
        i = int(np.flatnonzero(big & (np.abs(d) > PHASE_JUMP_LIMIT))[0])
        raise InvariantError(f"phase jumps by more than pi/2 between nodes {i} and {i + 1}; grid too coarse")
    return a[0] + np.concatenate([[0.0], np.cumsum(d)])


def momentum(psi: np.ndarray, grid: Grid, dpsi: np.ndarray | None = None) -> float:
    """Renormalized momentum, finite even where psi vanishes; defined modulo 2 pi."""
    psi = check_field(grid, psi)
    if min(abs(psi[0]), abs(psi[-1])) <= 0.5:
        raise InvariantError("boundary modulus too small for a well-defined boundary phase")
    dpsi = diff(grid, psi, 1) if dpsi is None else dpsi
    j = np.imag(np.conj(psi) * dpsi)
    ph = unwrapped_phase(psi)
    return float(-quad(grid, (2.0 - np.abs(psi) ** 2) * j) + (ph[-1] - ph[0]))


def momentum_singular(psi: np.ndarray, grid: Grid) -> float:
    """(1-|psi|^2)^2/|psi|^2-weighted form; only for nonvanishing psi."""
    psi = check_field(grid, psi)
    r2 = np.abs(psi) ** 2
    if r2.min() <= 0:
        raise InvariantError("singular momentum form needs psi != 0 everywhere")
    j = np.imag(np.conj(psi) * diff(grid, psi, 1))
    return float(quad(grid, (1.0 - r2) ** 2 / r2 * j))


def conserved(psi, grid: Grid) -> Conserved:
    """E, M, P and, for nonvanishing psi, the split P = P1 + P2.

    P2 integrates (1-|psi|^2) (arg psi)' directly, so the split only matches P
    to 1e-8 once the phase core (width ~ min|psi|) is resolved by the grid.
    """
    psi = check_field(grid, np.asarray(psi, dtype=complex))
    dpsi = diff(grid, psi, 1)
    r2 = np.abs(psi) ** 2
    eta = 1.0 - r2
    E = float(quad(grid, np.abs(dpsi) ** 2))
    M = float(quad(grid, eta**2))
    P = momentum(psi, grid, dpsi)
    P1 = P2 = None
    if np.sqrt(r2.min()) > 1e-8:
        j = np.imag(np.conj(psi) * dpsi)
        P1 = float(-quad(grid, eta * j))
        P2 = float(quad(grid, eta * j / r2))
    return Conserved(E, M, P, P1, P2, eta)


def lyapunov(psi, grid: Grid) -> float:
    c = conserved(psi, grid)
    return c.E + c.M


def quadratic_forms(u, v, grid: Grid) -> tuple[float, float, float]:
    """Q+(u), Q-(v) and the remainder R(u, v) of the expansion of E + M about phi.

    Q+ and Q- use the symmetric Neumann stiffness matrix: it annihilates the
    kernels phi' and phi to ~1e-9, where squared finite differences leave 1e-8.
    """
    u = check_field(grid, np.asarray(u, dtype=float))
    v = check_field(grid, np.asarray(v, dtype=float))
    phi = np.tanh(grid.x)
    K, s = neg_laplacian(grid, NEUMANN), row_scale(grid, NEUMANN)
    Qp = u @ K.matvec(u) + u @ (s * (6 * phi**2 - 2) * u)
    Qm = v @ K.matvec(v) + v @ (s * (2 * phi**2 - 2) * v)
    eta = 2 * phi * u + u**2 + v**2
    R = quad(grid, eta**2 - 4 * phi**2 * u**2)
    return float(Qp), float(Qm), float(R)


def coercivity_constant(grid: Grid, constraints: tuple[str, ...] = ("phi", "phi_prime"), k: int = 1) -> float | np.ndarray:
    """Smallest value of Q-(v) / (||v||_H^2 + ||v'||^2) over v W-orthogonal to the constraints.

    Solved as the pencil (A-, W + K0) with K0 the discrete -d^2 form, by
    shift-invert Lanczos about sigma = -3 (A- + 3N = 4 K0 + W is positive).
    """
    Lm = assemble("Lminus", grid)
    K0 = neg_laplacian(grid, NEUMANN)
    N = K0.add_diagonal(Lm.W)
    sigma = -3.0
    shifted = Lm.A.add_diagonal(-sigma * Lm.W) + K0.scaled(-sigma)
    basis = [kernels.sample(t, grid) for t in constraints]
    if basis:
        C = np.column_stack([Lm.W * b for b in basis])
        solver = BorderedSolver(shifted.tosparse(), C)
        solve = lambda f: solver.solve(f)[0]  # noqa: E731
        E = np.column_stack(basis)
        project = lambda z: z - E @ np.linalg.solve(C.T @ E, C.T @ z)  # noqa: E731
    else:
        F = cholesky_banded(shifted)
        solve, project = F.solve, None
    start = np.cos(np.linspace(0.1, 5.3, grid.n)) + 0.3
    if project is not None:
        start = project(start)
    ritz = lanczos_custom_inner(lambda z: solve(N.matvec(z)), N.matvec, k, True,
                                v0=start, project=project, max_dim=min(grid.n, 80))
    vals = np.sort(sigma + 1.0 / ritz.values)
    return float(vals[0]) if k == 1 else vals


# ------------------------------------------------------------ (c, omega) family


def family_invariants(c: float, omega: float, grid: Grid) -> tuple[float, float]:
    U = family_profile(c, omega, grid)
    cons = conserved(U, grid)
    return cons.M, cons.P


@dataclass(frozen=True)
class CMJacobian:
    matrix: np.ndarray  # rows (M, P), columns (c, omega)
    det: float
    delta: float


def cm_jacobian(grid: Grid, delta: float = 0.01) -> CMJacobian:
    """Central differences of (M, P) over U_{c,omega} around (c, omega) = (0, 1)."""
    if not 1e-3 <= delta <= 5e-2:
        raise InvariantError("delta must lie in [1e-3, 5e-2]")
    Mcp, Pcp = family_invariants(delta, 1.0, grid)
    Mcm, Pcm = family_invariants(-delta, 1.0, grid)
    Mwp, Pwp = family_invariants(0.0, 1.0 + delta, grid)
    Mwm, Pwm = family_invariants(0.0, 1.0 - delta, grid)
    # P is only defined modulo 2 pi (it jumps from pi to -pi as c crosses 0)
    dP = lambda a, b: math.remainder(a - b, 2 * math.pi)  # noqa: E731
    J = np.array([
        [(Mcp - Mcm) / (2 * delta), (Mwp - Mwm) / (2 * delta)],
        [dP(Pcp, Pcm) / (2 * delta), dP(Pwp, Pwm) / (2 * delta)],
    ])
    return CMJacobian(J, float(np.linalg.det(J)), delta)


@dataclass(frozen=True)
class MomentumFit:
    c: np.ndarray
    P: np.ndarray
    M: np.ndarray
    slope: float
    mass_K: np.ndarray  # |M - 4/3| / c^2 per speed


def momentum_slope(cs, grid: Grid, mapper=map) -> MomentumFit:
    """Least-squares slope of P(U_c) + pi through the origin, and mass quotients."""
    cs = np.asarray(list(cs), dtype=float)
    out = list(mapper(_mp_for_c, [(float(c), grid.L, grid.n) for c in cs]))
    M = np.array([o[0] for o in out])
    P = np.array([o[1] for o in out])
    y = np.array([math.remainder(p + math.pi, 2 * math.pi) for p in P])
    slope = float(cs @ y / (cs @ cs))
    return MomentumFit(cs, P, M, slope, np.abs(M - 4.0 / 3.0) / cs**2)


def _mp_for_c(args):
    from .grid import make_grid

    c, L, n = args
    g = make_grid(L, n)
    cons = conserved(dark_profile(c, g).profile, g)
    return cons.M, cons.P


# ------------------------------------------------------------ modulation


@dataclass(frozen=True)
class ModulationFrame:
    theta: float
    zeta: float
    c: float
    omega: float
    u: np.ndarray
    v: np.ndarray
    residuals: np.ndarray  # Re/Im of (U, w) and (U', w) in the (1-|U|^2)-weighted product
    iterations: int


def h1_inner(grid: Grid, f, g, df=None, dg=None) -> complex:
    df = diff(grid, f, 1) if df is None else df
    dg = diff(grid, g, 1) if dg is None else dg
    return complex(quad(grid, grid.sech2 * np.conj(f) * g + np.conj(df) * dg))


def _coarse_orbit_fit(psi: np.ndarray, grid: Grid) -> tuple[float, float, float]:
    """Scan zeta (step 0.1) with the optimal phase for each; returns theta, zeta, distance."""
    dpsi = diff(grid, psi, 1)
    npsi = h1_inner(grid, psi, psi, dpsi, dpsi).real
    best = None
    for zeta in np.arange(-grid.L / 2, grid.L / 2 + 1e-9, 0.1):
        p = np.tanh(grid.x + zeta)
        dp = 1.0 / np.cosh(grid.x + zeta) ** 2
        ip = h1_inner(grid, p, psi, dp, dpsi)
        d2 = npsi + h1_inner(grid, p, p, dp, dp).real - 2 * abs(ip)
        if best is None or d2 < best[2]:
            best = (float(np.angle(ip)), float(zeta), d2)
    return best[0], best[1], math.sqrt(max(best[2], 0.0))


class _Shifter:
    """psi(x - zeta) on the grid nodes by cubic interpolation, constant beyond the ends."""

    def __init__(self, psi: np.ndarray, grid: Grid):
        self.grid = grid
        self.spline = CubicSpline(grid.x, psi)

    def __call__(self, zeta: float) -> np.ndarray:
        xs = np.clip(self.grid.x - zeta, -self.grid.L, self.grid.L)
        return self.spline(xs)


def _constraints(w: np.ndarray, U: np.ndarray, dU: np.ndarray, grid: Grid) -> np.ndarray:
    wt = 1.0 - np.abs(U) ** 2
    a = complex(quad(grid, wt * np.conj(U) * w))
    b = complex(quad(grid, wt * np.conj(dU) * w))
    return np.array([a.real, b.real, a.imag, b.imag])


def modulation_decompose(
    psi, grid: Grid, *, max_iter: int = 50, tol: float = 1e-10, max_distance: float = 0.2
) -> ModulationFrame:
    """Split psi = e^{i theta} [U_{c,omega} + u + i v](. + zeta) under four orthogonality conditions.

    The conditions are the real and imaginary parts of (U, w) and (U', w) in the
    (1-|U_{c,omega}|^2)-weighted product, w = u + i v.  At c = 0 they reduce to
    (phi, u) = (phi', u) = (phi, v) = (phi', v) = 0.
    """
    psi = check_field(grid, np.asarray(psi, dtype=complex))
    theta, zeta, dist = _coarse_orbit_fit(psi, grid)
    if dist > max_distance:
        raise ModulationError(f"field is {dist:.3g} away from the black-soliton orbit (limit {max_distance})")
    shift = _Shifter(psi, grid)
    fam: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def family(c, om):
        key = (c, om)
        if key not in fam:
            U = family_profile(c, om, grid)
            fam[key] = (U, diff(grid, U, 1))
        return fam[key]

    def F(p):
        th, ze, c, om = p
        U, dU = family(c, om)
        w = np.exp(-1j * th) * shift(ze) - U
        return _constraints(w, U, dU, grid), w

    # first step uses the structured Jacobian at (c, omega) = (0, 1)
    phi, dphi = np.tanh(grid.x), kernels.sample("phi_prime", grid)
    ip = lambda f, g: weighted_inner(grid, f, g)  # noqa: E731
    J0 = np.zeros((4, 4))
    J0[0, 3] = -ip(phi, grid.x * dphi)
    J0[1, 1] = -ip(dphi, dphi)
    J0[2, 0] = -ip(phi, phi)
    J0[3, 2] = 2 * ip(dphi, kernels.sample("v_phi", grid))

    p = np.array([theta, zeta, 0.0, 1.0])
    steps = np.array([1e-6, 1e-6, 1e-5, 1e-6])
    r, w = F(p)
    for it in range(1, max_iter + 1):
        if it == 1:
            J = J0
        else:
            J = np.empty((4, 4))
            for k in range(4):
                e = np.zeros(4)
                e[k] = steps[k]
                J[:, k] = (F(p + e)[0] - F(p - e)[0]) / (2 * steps[k])
        dp = np.linalg.solve(J, -r)
        p = p + dp
        fam.clear() if len(fam) > 64 else None
        r, w = F(p)
        if np.max(np.abs(r)) < tol and np.max(np.abs(dp)) < 1e-6:
            break
    else:
        raise ModulationError(f"Newton did not converge in {max_iter} iterations (|F| = {np.max(np.abs(r)):.2e})")
    th = float(math.remainder(p[0], 2 * math.pi))
    return ModulationFrame(th, float(p[1]), float(p[2]), float(p[3]), w.real.copy(), w.imag.copy(), r, it)


# ------------------------------------------------------------ orbital distance


def _distance_sq_and_grad(psi, dpsi, grid: Grid, theta: float, zeta: float, with_grad: bool = True):
    x = grid.x
    p = np.tanh(x + zeta)
    dp_exact = 1.0 / np.cosh(x + zeta) ** 2
    dp = diff(grid, p, 1)  # same stencil as for psi so exact orbit points give zero
    e = np.exp(1j * theta)
    r0 = dpsi - e * dp
    r1 = np.abs(psi) ** 2 - p * p
    r2 = psi - e * p
    s2 = grid.sech2
    d2 = quad(grid, np.abs(r0) ** 2 + r1**2 + s2 * np.abs(r2) ** 2)
    if not with_grad:
        return float(d2.real), None
    # d/dtheta and d/dzeta of each residual
    ddp = diff(grid, dp_exact, 1)
    g_th = 2 * np.real(quad(grid, np.conj(r0) * (-1j * e * dp) + s2 * np.conj(r2) * (-1j * e * p)))
    g_ze = 2 * np.real(quad(grid, np.conj(r0) * (-e * ddp) + s2 * np.conj(r2) * (-e * dp_exact))) \
        + 2 * quad(grid, r1 * (-2 * p * dp_exact))
    return float(d2.real), np.array([float(g_th), float(np.real(g_ze))])


def orbital_distance(psi, grid: Grid, *, return_params: bool = False, max_iter: int = 50,
                     start: tuple[float, float] | None = None):
    """inf over (theta, zeta) of the energy-space distance to e^{i theta} phi(. + zeta).

    ``start`` (theta, zeta) skips the coarse scan, e.g. along a time series.
    """
    psi = check_field(grid, np.asarray(psi, dtype=complex))
    dpsi = diff(grid, psi, 1)
    theta, zeta = start if start is not None else _coarse_orbit_fit(psi, grid)[:2]
    p = np.array([theta, zeta])
    hstep = 1e-6
    for _ in range(max_iter):
        _, g = _distance_sq_and_grad(psi, dpsi, grid, *p)
        H = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = hstep
            H[:, k] = (_distance_sq_and_grad(psi, dpsi, grid, *(p + e))[1]
                       - _distance_sq_and_grad(psi, dpsi, grid, *(p - e))[1]) / (2 * hstep)
        H = 0.5 * (H + H.T)
        try:
            dp = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        if np.any(np.linalg.eigvalsh(H) <= 0):
            dp = -g / max(np.abs(np.diag(H)).max(), 1.0)
        p = p + dp
        if np.max(np.abs(dp)) < 1e-12:
            break
    d2, _ = _distance_sq_and_grad(psi, dpsi, grid, *p, with_grad=False)
    d = math.sqrt(max(d2, 0.0))
    if return_params:
        return d, float(math.remainder(p[0], 2 * math.pi)), float(p[1])
    return d


def phase_distance(psi, target, grid: Grid) -> float:
    """Same distance to e^{i theta} target, minimized over the phase only."""
    psi = check_field(grid, np.asarray(psi, dtype=complex))
    target = check_field(grid, np.asarray(target, dtype=complex))
    dpsi, dt = diff(grid, psi, 1), diff(grid, target, 1)
    ip = quad(grid, np.conj(dt) * dpsi + grid.sech2 * np.conj(target) * psi)
    e = np.exp(1j * np.angle(ip))
    d2 = quad(grid, np.abs(dpsi - e * dt) ** 2 + (np.abs(psi) ** 2 - np.abs(target) ** 2) ** 2
              + grid.sech2 * np.abs(psi - e * target) ** 2)
    return math.sqrt(max(float(np.real(d2)), 0.0))
