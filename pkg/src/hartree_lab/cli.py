"""Command line entry point ``hartree-lab``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ScenarioConfig,
    dump_json,
    gating_failures,
    run_scenario,
    run_verification_suites,
)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON ({exc})") from None


def cmd_groundstate(args) -> int:
    from .grid import build_grid
    from .stationary import ground_state, nonexistence_probe, stationarity_certificate

    cfg = _load_json(args.config)
    try:
        Z = float(cfg["Z"])
        grid = build_grid(int(cfg["grid"]["n"]), float(cfg["grid"]["r_max"]))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "missing") from None
    tol = float(cfg.get("tol", 1e-7))
    max_iter = int(cfg.get("max_iter", 20000))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if "N_list" in cfg:
        report = nonexistence_probe(Z, cfg["N_list"], grid, tol=tol, max_iter=max_iter, jobs=args.jobs)
        dump_json(out / "probe.json", report)
        print(json.dumps(report, indent=2))
        return 0 if report["consistent"] else 1
    if "N" not in cfg:
        raise ConfigError("N", "missing (or give N_list)")
    res = ground_state(Z, float(cfg["N"]), grid, tol=tol, max_iter=max_iter)
    doc = res.to_json()
    status = 0
    if res.converged:
        cert = stationarity_certificate(res, args.tol_scale)
        doc["certificate"] = cert.to_dict()
        status = 0 if cert.passed else 1
    doc["outer_shell_fraction"] = res.diagnostics["outer_shell_fraction"]
    dump_json(out / "groundstate.json", doc)
    print(json.dumps(doc, indent=2, default=float))
    return status


def _evolve(args, model: str) -> int:
    cfg = ScenarioConfig.from_file(args.config)
    if cfg.model != model:
        raise ConfigError("model", f"this subcommand runs {model!r} scenarios, config says {cfg.model!r}")
    if args.tol_scale != 1.0:
        cfg.tol_scale = args.tol_scale
    bounds = run_scenario(cfg, args.out)
    _print_table(bounds)
    return 1 if gating_failures(bounds) else 0


def cmd_evolve(args) -> int:
    return _evolve(args, "hartree")


def cmd_evolve_hf(args) -> int:
    return _evolve(args, "hartree_fock")


def _suite(args, names) -> int:
    summary = run_verification_suites(names, tol_scale=args.tol_scale, jobs=args.jobs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_json(out / "verification.json", summary)
    for s in summary["suites"]:
        print(f"{s['suite']:<14} {'PASS' if s['pass'] else 'FAIL'}  ({s['elapsed_seconds']:.1f}s)")
    return summary["exit_status"]


def cmd_verify_kernels(args) -> int:
    return _suite(args, ["kernels"])


def cmd_verify_commutators(args) -> int:
    return _suite(args, ["commutators"])


def cmd_verify(args) -> int:
    return _suite(args, args.suites or "all")


def _print_table(bounds: dict):
    print(f"scenario {bounds['scenario']} ({bounds['mode']})")
    print(f"{'check':<28}{'R':>7}{'T':>9}{'lhs':>14}{'rhs':>14}  verdict")
    for c in bounds["checks"]:
        R = "" if c["R"] is None else f"{c['R']:g}"
        T = "" if c["T"] is None else f"{c['T']:g}"
        verdict = "pass" if c["pass"] else "FAIL"
        if c.get("flags"):
            verdict += " [" + ",".join(c["flags"]) + "]"
        print(f"{c['name']:<28}{R:>7}{T:>9}{c['lhs']:>14.6g}{c['rhs']:>14.6g}  {verdict}")


def cmd_bound_report(args) -> int:
    """Print the bound table of finished runs (or run ``--config`` first)."""
    dirs = [Path(d) for d in args.runs]
    if args.config:
        cfg = ScenarioConfig.from_file(args.config)
        if args.tol_scale != 1.0:
            cfg.tol_scale = args.tol_scale
        run_scenario(cfg, args.out)
        dirs.append(Path(args.out))
    if not dirs:
        dirs = [Path(args.out)]
    status = 0
    for d in dirs:
        bounds = json.loads((d / "bounds.json").read_text())
        _print_table(bounds)
        if gating_failures(bounds):
            status = 1
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hartree-lab", description="Radial Hartree / Hartree-Fock atom laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
        p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every verdict tolerance")

    for name, func, needs_config, help_text in [
        ("groundstate", cmd_groundstate, True, "mass-constrained ground state or N scan"),
        ("evolve", cmd_evolve, True, "propagate a Hartree scenario and check the bounds"),
        ("evolve-hf", cmd_evolve_hf, True, "propagate a Hartree-Fock scenario and check the bounds"),
        ("verify-kernels", cmd_verify_kernels, False, "two-point kernel and angular-average suite"),
        ("verify-commutators", cmd_verify_commutators, False, "double-commutator and Hardy suite"),
    ]:
        p = sub.add_parser(name, help=help_text)
        common(p, needs_config)
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="run several verification suites")
    common(p, False)
    p.add_argument("suites", nargs="*", help="kernels commutators stationary dynamics hartree_fock (default: all)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bound-report", help="print bound tables of finished runs")
    common(p, False)
    p.add_argument("runs", nargs="*", help="run directories holding bounds.json")
    p.set_defaults(func=cmd_bound_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "tol_scale", 1.0) <= 0:
        parser.error("--tol-scale must be positive")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
