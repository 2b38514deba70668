"""Command-line entry point: ``blacksol <command> [options]``.

Settings resolve as command-line flags > config file (flat key=value) >
built-in defaults.  Every CSV gets a ``.json`` sidecar with the resolved
configuration and library versions.  Exit codes: 0 ok, 1 bad arguments or
config, 2 solver failure, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, acceptance, evolve, invariants, kernels, pinning, soliton, spectra
from .grid import GridError, make_grid
from .linalg import LinalgError
from .operators import OperatorError, assemble

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3

SOLVER_ERRORS = (
    spectra.SpectrumError, spectra.ConstraintError, soliton.SolitonError, invariants.InvariantError,
    invariants.ModulationError, pinning.PinningError, evolve.EvolutionError, LinalgError, OperatorError,
)

DEFAULTS = {
    "L": 20.0, "n": 4001, "out": ".", "zero_tol": spectra.ZERO_TOL,
    # spectrum
    "op": "lminus", "k": 5, "constrained": True, "method": "lanczos", "sigma": None,
    # soliton / invariants
    "c": 0.1, "omega": 1.0, "family": "dark", "c_range": "0.01:0.1:10", "delta": 0.01,
    # pinning
    "potential": "neg_sech2", "eps": 0.01, "site": None, "bracket": None,
    # evolve
    "scenario": "orbital_stability", "dt": None, "T": None, "amp": None, "kick": None,
    "monitor_every": None,
    # verify
    "quick": False,
}
TYPES = {
    "L": float, "n": int, "out": str, "zero_tol": float, "op": str, "k": int, "constrained": "bool",
    "method": str, "sigma": float, "c": float, "omega": float, "family": str, "c_range": str,
    "delta": float, "potential": str, "eps": float, "site": float, "bracket": str, "scenario": str,
    "dt": float, "T": float, "amp": float, "kick": float, "monitor_every": int, "quick": "bool",
}
POSITIVE = ("L", "zero_tol", "dt", "T", "delta", "omega", "amp", "kick")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _coerce(key: str, raw):
    typ = TYPES[key]
    if raw is None or not isinstance(raw, str):
        return raw
    if typ == "bool":
        low = raw.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise UsageError(f"{key}: expected a boolean, got {raw!r}")
        return low in ("1", "true", "yes")
    try:
        return typ(raw.strip())
    except ValueError:
        raise UsageError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def read_config(path: str) -> dict:
    """Flat key=value file; '#' starts a comment; unknown keys are rejected."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{num}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    explicit = set()
    if args.config:
        from_file = read_config(args.config)
        cfg.update(from_file)
        explicit |= set(from_file)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = _coerce(key, val)
            explicit.add(key)
    for key in POSITIVE:
        if cfg[key] is not None and not cfg[key] > 0:
            raise UsageError(f"{key} must be positive (got {cfg[key]})")
    if cfg["k"] < 1:
        raise UsageError("k must be at least 1")
    cfg["command"] = args.command
    cfg["explicit"] = sorted(explicit)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value file (flags override it)")
    common.add_argument("--L", type=float, help="half-width of the grid [-L, L]")
    common.add_argument("--n", type=int, help="number of grid nodes (odd)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--zero-tol", dest="zero_tol", type=float, help="threshold for near-zero eigenvalues")

    p = _Parser(prog="blacksol", description="Spectral and dynamical analysis of the black soliton.")
    p.add_argument("--version", action="version", version=f"blacksol {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectrum", parents=[common], help="weighted eigenvalues of L+, L- or the stability problem")
    s.add_argument("--op", choices=["lminus", "lplus", "stability"])
    s.add_argument("-k", type=int, dest="k")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--constrained", dest="constrained", action="store_const", const=True)
    g.add_argument("--unconstrained", dest="constrained", action="store_const", const=False)
    s.add_argument("--method", choices=["lanczos", "dense"])
    s.add_argument("--sigma", type=float, help="shift for shift-invert")

    s = sub.add_parser("soliton", parents=[common], help="dark soliton U_c (c = 0 gives tanh)")
    s.add_argument("--c", type=float)

    s = sub.add_parser("invariants", parents=[common], help="conserved quantities along the soliton family")
    s.add_argument("--family", choices=["dark", "black"])
    s.add_argument("--c-range", dest="c_range", help="start:stop:count")
    s.add_argument("--delta", type=float, help="difference step of the (c, omega) Jacobian")

    s = sub.add_parser("pinning", parents=[common], help="pinned soliton in a weak potential")
    s.add_argument("--potential", help="sech2 | neg_sech2 | gauss(s) | shifted(name,x0) | csv:PATH")
    s.add_argument("--eps", type=float)
    s.add_argument("--site", type=float, help="pinning site (default: the simple site nearest 0)")
    s.add_argument("--bracket", help="site search interval a:b")

    s = sub.add_parser("evolve", parents=[common], help="experimental nonlinear evolution scenarios")
    s.add_argument("--scenario", choices=list(evolve.SCENARIOS))
    s.add_argument("--dt", type=float)
    s.add_argument("--T", type=float)
    s.add_argument("--c", type=float)
    s.add_argument("--eps", type=float)
    s.add_argument("--potential")
    s.add_argument("--amp", type=float)
    s.add_argument("--kick", type=float)
    s.add_argument("--monitor-every", dest="monitor_every", type=int)

    s = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    s.add_argument("--quick", action="store_const", const=True, help="skip the long evolution runs")
    return p


# ------------------------------------------------------------ output helpers


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".17g")


def versions() -> dict:
    return {"blacksol": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows, cfg: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    write_json(path.with_name(path.name + ".json"), {"file": path.name, "config": cfg, "versions": versions()})


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers() -> int:
    raw = os.environ.get("BLACKSOL_THREADS")
    cap = os.cpu_count() or 1
    if raw is None:
        return cap
    try:
        val = int(raw)
    except ValueError:
        raise UsageError(f"BLACKSOL_THREADS must be an integer, got {raw!r}") from None
    if val < 1:
        raise UsageError("BLACKSOL_THREADS must be at least 1")
    return min(val, cap)


# ------------------------------------------------------------ commands


def cmd_spectrum(cfg) -> int:
    g = make_grid(cfg["L"], cfg["n"])
    k, out = cfg["k"], _outdir(cfg)
    if cfg["op"] in ("lminus", "lplus"):
        kind = "Lminus" if cfg["op"] == "lminus" else "Lplus"
        res = spectra.eig_weighted(assemble(kind, g), k, cfg["sigma"], method=cfg["method"], zero_tol=cfg["zero_tol"])
        exact = spectra.exact_ladder(kind, k)
        rows = [(i, lam, ex, abs(lam - ex)) for i, (lam, ex) in enumerate(zip(res.eigenvalues, exact))]
        header = ["index", "computed", "exact_if_known", "abs_error"]
    else:
        res = spectra.stability_spectrum(g, k=k, constrained=cfg["constrained"], zero_tol=cfg["zero_tol"])
        if cfg["constrained"]:
            rows = [(i, mu, None, None, lam.imag) for i, (mu, lam) in enumerate(zip(res.eigenvalues, res.lam))]
        else:
            rows = [(i, mu, 0.0, abs(mu), 0.0) for i, mu in enumerate(res.eigenvalues)]
        header = ["index", "computed", "exact_if_known", "abs_error", "lambda_imag"]
    write_csv(out / "eigenvalues.csv", header, rows, cfg)
    vec = res.eigenvectors
    xs = g.x if vec.shape[0] == g.n else np.concatenate([g.x, g.x])
    write_csv(out / "eigenvectors.csv", ["x"] + [f"v{i}" for i in range(vec.shape[1])],
              ([x] + list(r) for x, r in zip(xs, vec)), cfg)
    for r in rows:
        print("  ".join(fmt(v) if not isinstance(v, int) else str(v) for v in r))
    return EXIT_OK


def cmd_soliton(cfg) -> int:
    g = make_grid(cfg["L"], cfg["n"])
    c, out = cfg["c"], _outdir(cfg)
    if c == 0:
        U = soliton.black_soliton(g)
        report = {"c": 0.0, "kind": "black", "decay_rate": 2.0}
    else:
        d = soliton.dark_profile(c, g)
        U = d.profile
        report = {
            "c": c, "kind": "dark", "turning_points": d.turning_points, "theta_plus": d.theta_plus,
            "theta_minus": d.theta_minus, "beta": d.beta, "decay_rate": d.decay_rate,
            "decay_amplitude": d.decay_amplitude, "invariant_residual": d.invariant_residual,
        }
    report["euler_lagrange_residual"] = soliton.euler_lagrange_residual(U, c, g)
    cons = invariants.conserved(U, g)
    report.update({"E": cons.E, "M": cons.M, "P": cons.P})
    write_csv(out / "profile.csv", ["x", "re_U", "im_U", "rho", "phase"],
              zip(g.x, U.real, U.imag, np.abs(U) ** 2, np.unwrap(np.angle(U))), cfg)
    write_json(out / "report.json", {"report": report, "config": cfg, "versions": versions()})
    print(json.dumps(_jsonable(report), indent=2))
    return EXIT_OK


def _parse_range(text: str) -> np.ndarray:
    try:
        a, b, m = text.split(":")
        vals = np.linspace(float(a), float(b), int(m))
    except ValueError:
        raise UsageError(f"range must be start:stop:count, got {text!r}") from None
    if vals.size < 2 or np.any(vals == 0):
        raise UsageError("range needs at least 2 nonzero speeds")
    return vals


def cmd_invariants(cfg) -> int:
    g = make_grid(cfg["L"], cfg["n"])
    out = _outdir(cfg)
    report: dict = {}
    if cfg["family"] == "dark":
        cs = _parse_range(cfg["c_range"])
        nw = _workers()
        if nw > 1:
            with ProcessPoolExecutor(max_workers=nw) as pool:
                fit = invariants.momentum_slope(cs, g, mapper=pool.map)
        else:
            fit = invariants.momentum_slope(cs, g)
        rows = [(c, M, P, math.remainder(P + math.pi, 2 * math.pi) / c, K)
                for c, M, P, K in zip(fit.c, fit.M, fit.P, fit.mass_K)]
        write_csv(out / "invariants.csv", ["c", "M", "P", "P_plus_pi_over_c", "mass_K"], rows, cfg)
        report.update({"momentum_slope": fit.slope, "mass_K_min": float(fit.mass_K.min()),
                       "mass_K_max": float(fit.mass_K.max())})
    else:
        cons = invariants.conserved(soliton.black_soliton(g), g)
        report.update({"E": cons.E, "M": cons.M, "P": cons.P,
                       "coercivity_phi_phiprime": invariants.coercivity_constant(g, ("phi", "phi_prime")),
                       "coercivity_phiprime": invariants.coercivity_constant(g, ("phi_prime",)),
                       "coercivity_none": invariants.coercivity_constant(g, ())})
    J = invariants.cm_jacobian(g, cfg["delta"])
    report.update({"cm_jacobian": J.matrix.tolist(), "cm_jacobian_det": J.det})
    write_json(out / "report.json", {"report": report, "config": cfg, "versions": versions()})
    print(json.dumps(_jsonable(report), indent=2))
    return EXIT_OK


def cmd_pinning(cfg) -> int:
    g = make_grid(cfg["L"], cfg["n"])
    out = _outdir(cfg)
    V = pinning.potential(cfg["potential"], g)
    bracket = None
    if cfg["bracket"]:
        try:
            bracket = tuple(float(v) for v in cfg["bracket"].split(":"))
        except ValueError:
            raise UsageError(f"bracket must be a:b, got {cfg['bracket']!r}") from None
    sites = pinning.find_pinning_sites(V, g, bracket)
    if cfg["site"] is None:
        simple = [s for s in sites if s.simple]
        if not simple:
            raise pinning.PinningError("no simple pinning site")
        s = min(simple, key=lambda q: abs(q.s)).s
    else:
        s = cfg["site"]
    p = pinning.solve_pinned(cfg["eps"], V, s, g)
    sp_ = pinning.pinned_spectrum(p)
    report = {
        "site": s, "sites": [{"s": q.s, "Veff_dd": q.d2, "simple": q.simple} for q in sites],
        "Veff": p.Veff.value, "Veff_d": p.Veff.d1, "Veff_dd": p.Veff.d2, "a_eps": p.a,
        "stationary_residual": p.residual, "mu_small": sp_.mu_small, "mu_pred": sp_.mu_pred,
        "lambda_sq": sp_.lam2, "lambda_sq_pred": sp_.lam2_pred, "pair": sp_.kind,
        "lambda_pair": [complex(v) for v in sp_.lam_pair],
        "sign_relation_holds": bool(np.sign(sp_.lam2) == -np.sign(p.Veff.d2)),
        "Lminus_negative_eigenvalues": sp_.Lminus_negative, "Lminus_phi_residual": sp_.Lminus_phi_residual,
        "integrability": pinning.integrability_report(V, g),
    }
    write_csv(out / "profile.csv", ["x", "V", "phi_eps"], zip(g.x, V, p.profile), cfg)
    write_json(out / "report.json", {"report": report, "config": cfg, "versions": versions()})
    print(json.dumps(_jsonable(report), indent=2))
    return EXIT_OK


def cmd_evolve(cfg) -> int:
    print("note: the nonlinear evolution is experimental (well-posedness of the model is open)", file=sys.stderr)
    out = _outdir(cfg)
    name = cfg["scenario"]
    allowed = evolve._defaults(name)
    # scenario defaults apply unless a value was given on the command line or in the config file
    params = {k: cfg[k] for k in cfg["explicit"] if k in allowed and cfg[k] is not None}
    params.update({"L": cfg["L"], "n": cfg["n"]})
    res = evolve.run_experiment(name, params)
    mon = res.monitors
    write_csv(out / "monitors.csv", list(evolve.Monitors.COLUMNS), mon.rows(), cfg)
    evolve.write_snapshot(out / "snapshot.csv", res.state.psi, make_grid(cfg["L"], cfg["n"]), res.state.t,
                          res.state.dt, float(res.params.get("eps", 0.0)))
    write_json(out / "snapshot.csv.json", {"file": "snapshot.csv", "config": cfg, "versions": versions()})
    report = {"scenario": name, "experimental": True, "params": res.params, "summary": res.summary}
    write_json(out / "report.json", {"report": report, "config": cfg, "versions": versions()})
    print(json.dumps(_jsonable(report), indent=2))
    return EXIT_OK


def cmd_verify(cfg) -> int:
    outcomes = acceptance.run(quick=cfg["quick"], zero_tol=cfg["zero_tol"], L=cfg["L"], n=cfg["n"],
                              report=lambda o: print(o.line(), flush=True))
    ok = all(o.passed for o in outcomes)
    total = sum(o.seconds for o in outcomes)
    print(f"{'ALL PASS' if ok else 'FAILURES'}: {sum(o.passed for o in outcomes)}/{len(outcomes)} in {total:.1f}s")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "spectrum": cmd_spectrum, "soliton": cmd_soliton, "invariants": cmd_invariants,
    "pinning": cmd_pinning, "evolve": cmd_evolve, "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
        make_grid(cfg["L"], cfg["n"])  # validate before dispatch
        return COMMANDS[args.command](cfg)
    except (UsageError, GridError) as exc:
        print(f"blacksol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SOLVER_ERRORS as exc:
        print(f"blacksol: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
