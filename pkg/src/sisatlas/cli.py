"""``atlas <subcommand> --config path [--out dir]``.

Exit codes: 0 success, 2 configuration or domain error, 3 solver failure.
Data files are deterministic; ``manifest.json`` carries the wall time and a
sha256 digest of every other file.
"""
from __future__ import annotations

import argparse
from importlib import metadata
from pathlib import Path
import sys
import time

import numpy as np

from . import asymptotics, curves, dynamics, io, perturbation, spectral
from .config import RunConfig
from .errors import ConfigError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _eig(cfg: RunConfig, coeffs):
    return spectral.principal_pair(coeffs, tol=float(cfg.solver["eigenTol"]))


def _curve(cfg: RunConfig, coeffs, eig, **kw):
    return curves.LogisticCurve(coeffs, eig, points_per_decade=int(cfg.solver["pointsPerDecade"]),
                                newton_tol=float(cfg.solver["newtonTol"]), **kw)


def _r0(cfg: RunConfig, coeffs, eig) -> float:
    return coeffs.resolve_r0(eig)


def cmd_eigen(cfg: RunConfig, out: Path) -> dict:
    coeffs = cfg.build_coefficients()
    eig = _eig(cfg, coeffs)
    hi, lo = spectral.r1_limits(coeffs)
    io.write_json(out / "eigen.json", {
        "r1": eig.r1, "lStar": eig.l_star, "iterations": eig.iterations,
        "residual": eig.residual, "r1LimitSmallDiffusion": hi, "r1LimitLargeDiffusion": lo})
    io.write_csv(out / "phi1.csv", ["x", "phi1"], [cfg.grid.x, eig.phi1])
    return {"eigen": "ok"}


def cmd_curve(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.section("curve")
    coeffs = cfg.build_coefficients()
    eig = _eig(cfg, coeffs)
    curve = _curve(cfg, coeffs, eig, span=float(sec.get("span", curves.INITIAL_SPAN)))
    dS = coeffs.dS
    first = curve.sample(eig.l_star, dS)
    ls = np.concatenate([[first.l], curve.l])
    iu = np.concatenate([[first.int_u], curve.int_u])
    ilv = np.concatenate([[first.int_lv], curve.int_lv])
    n_dI = np.concatenate([[1.0], curve.n_dI_scan()])
    n = np.concatenate([[1.0], curve.n_scan(dS)])
    slope = curve.slope_from(iu, ilv, dS)
    io.write_csv(out / "curve.csv", ["l", "N_dI", "N_dIdS", "slope", "int_u", "int_lv"],
                 [ls, n_dI, n, slope, iu, ilv])
    return {"curve": "ok"}


def cmd_thresholds(cfg: RunConfig, out: Path) -> dict:
    coeffs = cfg.build_coefficients()
    eig = _eig(cfg, coeffs)
    dS = cfg.dS if "dS" in cfg.model else None
    th = curves.compute_thresholds(coeffs, eig, dS=dS, curve=_curve(cfg, coeffs, eig))
    io.write_json(out / "thresholds.json", {
        "r0Low": th.r0_low, "r0LowSource": th.r0_low_source, "r0LowScan": th.r0_low_scan,
        "r0LowTail": th.r0_low_tail, "dLow": th.d_low, "mStar": th.m_star,
        "d2Star": th.d2_star, "dS": th.d_S,
        "r0Thresh": None if th.r0_thresh is None else list(th.r0_thresh),
        "segmentBreaks": list(th.segment_breaks), "criticalValues": list(th.critical_values),
        "lStar": eig.l_star, "r1": eig.r1})
    return {"thresholds": "ok"}


def _write_roots(cfg: RunConfig, out: Path, eq: curves.EquilibriumSet, prefix: str = "root") -> dict:
    entries = []
    for k, r in enumerate(eq.roots):
        name = f"{prefix}_{k}.csv"
        io.write_csv(out / name, ["x", "S", "I"], [cfg.grid.x, r.S, r.I])
        entries.append({"l": r.l, "degenerate": r.degenerate, "slope": r.slope,
                        "residual": r.residual, "isMinimal": r.is_minimal,
                        "isMaximal": r.is_maximal, "s_csv": name, "i_csv": name})
    return {"r0": eq.r0, "dS": eq.dS, "count": eq.count, "roots": entries}


def cmd_classify(cfg: RunConfig, out: Path) -> dict:
    coeffs = cfg.build_coefficients(cfg.dS)
    eig = _eig(cfg, coeffs)
    eq = curves.classify(coeffs, eig, _r0(cfg, coeffs, eig), coeffs.dS,
                         curve=_curve(cfg, coeffs, eig))
    io.write_json(out / "roots.json", _write_roots(cfg, out, eq))
    return {"classify": "ok"}


def cmd_profiles(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.section("profiles")
    coeffs = cfg.build_coefficients(0.0)
    eig = _eig(cfg, coeffs)
    r0 = _r0(cfg, coeffs, eig)
    curve = _curve(cfg, coeffs, eig)
    if "dSValues" in sec:
        ds = [float(d) for d in sec["dSValues"]]
    else:
        ds = asymptotics.scaling_sequence(curve, r0, tuple(sec.get("dSFactors", (1e-2, 5e-3, 2.5e-3))))
    rep = asymptotics.verify_scaling(coeffs, eig, r0, ds, curve=curve)
    io.write_json(out / "scaling.json", rep.to_dict())
    x = cfg.grid.x
    low = asymptotics.solve_nonlocal(coeffs, eig, r0, asymptotics.LOW, curve=curve)
    io.write_csv(out / "u_star_low.csv", ["x", "value"], [x, low.u_star])
    io.write_csv(out / "s_star_low.csv", ["x", "value"], [x, low.s_star])
    if rep.regime == "i-1":
        high = asymptotics.solve_nonlocal(coeffs, eig, r0, asymptotics.HIGH, curve=curve)
        io.write_csv(out / "u_star_high.csv", ["x", "value"], [x, high.u_star])
        io.write_csv(out / "s_star_high.csv", ["x", "value"], [x, high.s_star])
    elif rep.regime in ("i-2", "ii"):
        high = asymptotics.predict_high_profile(coeffs, eig, r0)
        io.write_csv(out / "s_star_high.csv", ["x", "value"], [x, high.s_star])
        io.write_csv(out / "i_star_high.csv", ["x", "value"], [x, high.i_star])
    return {"profiles": "ok" if rep.passed else "checks-failed"}


def _initial_data(cfg: RunConfig, coeffs, mass: float, spec: dict, eq):
    g = cfg.grid
    kind = spec.get("kind", "dfe-seed")
    amp = float(spec.get("amplitude", 1e-3))
    if kind == "dfe-seed":
        I = np.full(g.n, amp * mass / g.length)
        S = np.full(g.n, mass / g.length) - I
    elif kind == "uniform":
        frac = float(spec.get("infectedFraction", 0.5))
        I = np.full(g.n, frac * mass / g.length)
        S = np.full(g.n, (1 - frac) * mass / g.length)
    elif kind == "root":
        idx = int(spec.get("index", -1))
        if not eq.roots:
            raise ConfigError("initialData kind 'root' but no equilibrium exists")
        r = eq.roots[idx]
        # shift infected mass into S so the total is unchanged
        I = r.I * (1 + amp)
        S = r.S - amp * r.I
    else:
        raise ConfigError(f"unknown initialData kind {kind!r}")
    if np.any(S < 0) or np.any(I < 0):
        raise ConfigError("initial data would be negative")
    return S, I


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.section("simulation")
    coeffs = cfg.build_coefficients(cfg.dS)
    if coeffs.dS <= 0:
        raise ConfigError("simulation needs dS > 0")
    eig = _eig(cfg, coeffs)
    r0 = _r0(cfg, coeffs, eig)
    mass = r0 * eig.l_star * cfg.grid.length
    eq = curves.classify(coeffs, eig, r0, coeffs.dS, curve=_curve(cfg, coeffs, eig))
    S, I = _initial_data(cfg, coeffs, mass, sec.get("initialData", {}), eq)
    state = dynamics.initial_state(coeffs, S, I, float(sec.get("dt0", 1e-3)))
    stride = int(cfg.output.get("stride", 10))
    rep = dynamics.run_to_steady(
        state, coeffs, float(sec.get("tMax", 1e5)),
        float(sec.get("stagnationTol", cfg.solver["stagnationTol"])), equilibria=eq,
        dt_max=float(sec.get("dtMax", 10.0)), stride=max(stride, 1))
    x = cfg.grid.x
    cols = [[], [], [], []]
    for st in rep.snapshots:
        cols[0].append(np.full(x.size, st.t))
        cols[1].append(x)
        cols[2].append(st.S)
        cols[3].append(st.I)
    io.write_csv(out / "trajectory.csv", ["t", "x", "S", "I"], [np.concatenate(c) for c in cols])
    report = rep.to_dict()
    report["equilibria"] = _write_roots(cfg, out, eq, prefix="equilibrium")
    io.write_json(out / "steady.json", report)
    return {"simulate": "ok"}


def cmd_appendix(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.section("appendix")
    model = cfg.perturbation()
    rep = perturbation.regime_report(model.k, model.m, model.dI, cfg.grid, model.eps, model.c_m)
    eps_values = sec.get("epsValues", [0.05, 0.025, 0.0125])
    models = [perturbation.build_model(model.k, model.m, model.c_m, float(e), model.dI, cfg.grid)
              for e in eps_values]
    cons = perturbation.expansion_consistency(models)
    ex = perturbation.closed_form_expansion(model)
    io.write_json(out / "regime.json", rep.to_dict())
    io.write_json(out / "expansion.json", {
        **cons.to_dict(), "l0": ex.l0, "l1": ex.l1, "l2": ex.l2,
        "eigenfunctionError": perturbation.eigenfunction_expansion_error(model)})
    io.write_csv(out / "phi1_tilde.csv", ["x", "value"], [cfg.grid.x, ex.phi1_tilde])
    return {"appendix": "ok" if cons.passed else "checks-failed"}


COMMANDS = {
    "eigen": cmd_eigen,
    "curve": cmd_curve,
    "thresholds": cmd_thresholds,
    "classify": cmd_classify,
    "profiles": cmd_profiles,
    "simulate": cmd_simulate,
    "appendix": cmd_appendix,
}


def run(command: str, cfg: RunConfig, out_dir: Path) -> Path:
    start = time.perf_counter()
    with io.atomic_directory(out_dir) as tmp:
        stages = COMMANDS[command](cfg, tmp)
        files = {p.name: io.sha256(p) for p in sorted(tmp.iterdir()) if p.is_file()}
        io.write_json(tmp / "manifest.json", {
            "command": command,
            "config": cfg.raw,
            "version": _version(),
            "grid": {"length": cfg.grid.length, "nodes": cfg.grid.n},
            "tolerances": cfg.solver,
            "wallTime": time.perf_counter() - start,
            "stages": stages,
            "files": files,
        })
    return Path(out_dir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atlas", description="Endemic-equilibrium atlas of the diffusive SIS model.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        out = args.out if args.out is not None else Path(cfg.output["directory"])
        run(args.command, cfg, out)
    except ConfigError as exc:
        print(f"atlas: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"atlas: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
