"""Scenario configs, batch runs, verification suites and every file the lab writes."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    Absorber,
    PropagatorConfig,
    check_kinetic_bound,
    check_monotonicity,
    check_localized_mass_bound,
    default_tolerance,
    propagate,
)
from .grid import WaveFunction, build_grid
from .hartree_fock import OrbitalSet, check_hf_monotonicity, check_hf_trace_bound, evolve_orbitals
from .observables import csv_header, csv_row

log = logging.getLogger(__name__)

MODELS = ("hartree", "hartree_fock")
INITIAL_KINDS = ("gaussian", "exponential", "hf_orbitals", "file")
SCENARIO_CHECKS = ("localized_mass", "kinetic", "monotonicity", "hf_trace")
SUITES = ("kernels", "commutators", "stationary", "dynamics", "hartree_fock")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _require(d: dict, key: str, prefix: str = ""):
    if key not in d:
        raise ConfigError(prefix + key, "missing")
    return d[key]


def _positive(value, name: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number, got {value!r}") from None
    if not x > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return x


def _count(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value or value < minimum:
        raise ConfigError(name, f"expected an integer >= {minimum}, got {value!r}")
    return int(value)


@dataclass
class ScenarioConfig:
    name: str
    model: str
    Z: float
    initial: dict
    n: int
    r_max: float
    propagator: PropagatorConfig
    R_list: list
    T_list: list
    checks: list
    tol_scale: float = 1.0
    text: str = ""
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def from_text(cls, text: str, base_dir: Path | str = ".") -> "ScenarioConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON ({exc})") from None
        cfg = cls.from_dict(d, base_dir)
        cfg.text = text
        return cfg

    @classmethod
    def from_file(cls, path: Path | str) -> "ScenarioConfig":
        path = Path(path)
        return cls.from_text(path.read_text(), path.parent)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "expected a JSON object")
        model = d.get("model", "hartree")
        if model not in MODELS:
            raise ConfigError("model", f"must be one of {MODELS}, got {model!r}")
        Z = _positive(_require(d, "Z"), "Z")
        grid = _require(d, "grid")
        n = _count(_require(grid, "n", "grid."), "grid.n", 16)
        r_max = _positive(_require(grid, "r_max", "grid."), "grid.r_max")

        initial = _require(d, "initial")
        kind = initial.get("kind") if isinstance(initial, dict) else None
        if kind not in INITIAL_KINDS:
            raise ConfigError("initial.kind", f"must be one of {INITIAL_KINDS}, got {kind!r}")
        if (kind == "hf_orbitals") != (model == "hartree_fock"):
            raise ConfigError("initial.kind", f"{kind!r} does not fit model {model!r}")

        p = _require(d, "propagator")
        dt = _positive(_require(p, "dt", "propagator."), "propagator.dt")
        steps = _count(_require(p, "steps", "propagator."), "propagator.steps", 1)
        record_every = _count(p.get("record_every", 1), "propagator.record_every", 1)
        absorber = None
        if p.get("absorber") is not None:
            a = p["absorber"]
            eta = float(_require(a, "eta", "propagator.absorber."))
            if eta < 0:
                raise ConfigError("propagator.absorber.eta", "must be non-negative")
            r_a = _positive(_require(a, "r_a", "propagator.absorber."), "propagator.absorber.r_a")
            if not 0.5 * r_max <= r_a < r_max:
                raise ConfigError("propagator.absorber.r_a", f"must lie in [r_max/2, r_max) = [{0.5 * r_max}, {r_max})")
            absorber = Absorber(eta, r_a)
            if model == "hartree_fock":
                raise ConfigError("propagator.absorber", "the Hartree-Fock propagator has no absorbing layer")

        R_list = [_positive(R, f"R_list[{i}]") for i, R in enumerate(_require(d, "R_list"))]
        if not R_list:
            raise ConfigError("R_list", "needs at least one scale")
        for i, R in enumerate(R_list):
            if R > 0.5 * r_max:
                raise ConfigError(f"R_list[{i}]", f"R={R:g} exceeds r_max/2={0.5 * r_max:g}")
        T_total = dt * steps
        T_list = [_positive(T, f"T_list[{i}]") for i, T in enumerate(d.get("T_list", [T_total]))]
        for i, T in enumerate(T_list):
            if T > T_total * (1 + 1e-12):
                raise ConfigError(f"T_list[{i}]", f"T={T:g} exceeds the simulated time {T_total:g}")
        default_checks = ["hf_trace", "monotonicity"] if model == "hartree_fock" else ["localized_mass", "kinetic", "monotonicity"]
        checks = list(d.get("checks", default_checks))
        for i, c in enumerate(checks):
            if c not in SCENARIO_CHECKS:
                raise ConfigError(f"checks[{i}]", f"unknown check {c!r}")
        tol_scale = _positive(d.get("tol_scale", 1.0), "tol_scale")
        prop = PropagatorConfig(dt=dt, steps=steps, record_every=record_every, absorber=absorber, scales=tuple(R_list))
        return cls(str(d.get("name", "scenario")), model, Z, initial, n, r_max, prop, R_list, T_list, checks,
                   tol_scale, json.dumps(d, indent=2), Path(base_dir))


def build_initial(cfg: ScenarioConfig):
    """Initial ``WaveFunction`` (Hartree) or ``OrbitalSet`` (Hartree-Fock)."""
    grid = build_grid(cfg.n, cfg.r_max)
    init = cfg.initial
    kind = init["kind"]
    if kind == "gaussian":
        c = float(init.get("center", 0.0))
        w = _positive(init.get("width", 1.0), "initial.width")
        m = _positive(_require(init, "mass", "initial."), "initial.mass")
        chirp = float(init.get("chirp", 0.0))
        return WaveFunction.from_u(grid, lambda r: np.exp(-0.5 * ((r - c) / w) ** 2 + 1j * chirp * r * r)).normalized(m)
    if kind == "exponential":
        a = _positive(_require(init, "decay", "initial."), "initial.decay")
        m = _positive(_require(init, "mass", "initial."), "initial.mass")
        return WaveFunction.from_u(grid, lambda r: np.exp(-a * r)).normalized(m)
    if kind == "hf_orbitals":
        widths = [_positive(w, f"initial.widths[{i}]") for i, w in enumerate(_require(init, "widths", "initial."))]
        occ = init.get("occupations", [1.0] * len(widths))
        if len(occ) != len(widths):
            raise ConfigError("initial.occupations", "one occupation per orbital required")
        us = [lambda r, w=w: np.exp(-0.5 * (r / w) ** 2) for w in widths]
        try:
            return OrbitalSet.from_functions(grid, us, occ)
        except ValueError as exc:
            raise ConfigError("initial", str(exc)) from None
    path = Path(_require(init, "path", "initial."))
    if not path.is_absolute():
        path = cfg.base_dir / path
    v = np.load(path)
    if v.shape != (grid.n,):
        raise ConfigError("initial.path", f"array shape {v.shape} does not match grid.n={grid.n}")
    psi = WaveFunction(grid, v)
    if "mass" in init:
        psi = psi.normalized(_positive(init["mass"], "initial.mass"))
    return psi


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, records, scales, with_absorbed: bool):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(scales, with_absorbed))
        for rec in records:
            w.writerow([_fmt(x) for x in csv_row(rec, scales, with_absorbed)])


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(path: Path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n")


def scenario_checks(cfg: ScenarioConfig, traj, N: float) -> list:
    """All configured bound reports for one trajectory."""
    Z = cfg.Z
    tol = default_tolerance(N, Z, cfg.tol_scale)
    reports = []
    for R in cfg.R_list:
        for T in cfg.T_list:
            if "localized_mass" in cfg.checks:
                reports.append(check_localized_mass_bound(traj, Z, R, T, cfg.name))
            if "kinetic" in cfg.checks:
                reports += check_kinetic_bound(traj, Z, R, T, cfg.name)
            if "hf_trace" in cfg.checks:
                reports.append(check_hf_trace_bound(traj, Z, R, T, cfg.name))
        if "monotonicity" in cfg.checks:
            if cfg.model == "hartree_fock":
                reports.append(check_hf_monotonicity(traj, Z, R, tol=tol, scenario=cfg.name))
            else:
                reports.append(check_monotonicity(traj, Z, R, tol=tol, scenario=cfg.name))
    return reports


def run_scenario(cfg: ScenarioConfig | str | Path, out_dir: Path | str) -> dict:
    """Propagate one scenario and write ``observables.csv``, ``bounds.json`` and ``manifest.json``.

    Returns the bounds document. Identical configs give byte-identical CSV files.
    """
    if not isinstance(cfg, ScenarioConfig):
        cfg = ScenarioConfig.from_file(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = build_initial(cfg)
    t0 = time.perf_counter()
    if cfg.model == "hartree_fock":
        traj = evolve_orbitals(state, cfg.Z, cfg.propagator)
    else:
        traj = propagate(state, cfg.Z, cfg.propagator)
    elapsed = time.perf_counter() - t0
    N = traj.records[0].mass
    reports = scenario_checks(cfg, traj, N)
    with_absorbed = cfg.propagator.absorber is not None
    write_csv(out / "observables.csv", traj.records, cfg.R_list, with_absorbed)
    bounds = {
        "scenario": cfg.name,
        "mode": traj.mode,
        "checks": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    dump_json(out / "bounds.json", bounds)
    manifest = {
        "scenario": cfg.name,
        "config_text": cfg.text,
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "code_version": __version__,
        "mode": traj.mode,
        "tolerances": {
            "tol_scale": cfg.tol_scale,
            "monotonicity_tol": default_tolerance(N, cfg.Z, cfg.tol_scale),
            "mass_drift_limit": 1e-6,
            "reflection_heuristic": "outer 10% shell mass > 1% of N",
        },
        "diagnostics": traj.diagnostics,
        "elapsed_seconds": elapsed,
    }
    dump_json(out / "manifest.json", manifest)
    return bounds


def gating_failures(bounds: dict) -> list:
    """Failed checks that carry no reflection flag (these set a nonzero exit status)."""
    return [c for c in bounds.get("checks", []) if not c["pass"] and not c.get("flags")]


# ---------------------------------------------------------------------------
# verification suites


def suite_kernels(tol_scale: float = 1.0) -> dict:
    from .profiles import (
        VirialProfile,
        angular_average,
        angular_average_closed,
        fourth_derivative_domination,
        kernel_cubic,
        min_arctan_ratio,
        min_kernel_bruteforce,
    )

    cubic = min_kernel_bruteforce(kernel_cubic, 2000, 2000, lower_bound=0.5)
    ratio = min_arctan_ratio()
    rng = np.random.default_rng(0)
    pairs = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=(1000, 2)))
    avg_err = 0.0
    for kind in ("arctan", "log", "cubic"):
        p = VirialProfile(kind, 1.0)
        for r, s in pairs:
            exact = angular_average_closed(p.fprime, r, s)
            avg_err = max(avg_err, abs(angular_average(p.fprime, r, s) - exact) / abs(exact))
    dom = [fourth_derivative_domination(VirialProfile(k, 1.0)) for k in ("arctan", "log")]
    cases = [
        {"name": "cubic_kernel_min", **cubic.to_dict(),
         "pass": abs(cubic.min_value - 0.5) <= 1e-6 * tol_scale and cubic.max_violation <= 1e-12},
        {"name": "arctan_ratio_min", **ratio.to_dict(), "pass": ratio.min_value >= 1.0 - 1e-9 * tol_scale},
        {"name": "angular_average", "max_rel_error": avg_err, "pairs": len(pairs), "pass": avg_err <= 1e-8 * tol_scale},
    ] + [{"name": f"domination_{d.kind}", **d.to_dict()} for d in dom]
    return {
        "suite": "kernels",
        "cases": cases,
        "worst_margin": float(cubic.min_value - 0.5),
        "pass": all(c["pass"] for c in cases),
    }


def suite_commutators(tol_scale: float = 1.0) -> dict:
    from .commutators import FORM_TOL, run_commutator_suite

    return run_commutator_suite(tol=FORM_TOL * tol_scale)


def suite_stationary(tol_scale: float = 1.0) -> dict:
    from .stationary import ground_state, nonexistence_probe, stationarity_certificate

    cases = []
    for Z, N, n, r_max in [(1.0, 1e-6, 2000, 40.0), (1.0, 0.5, 2000, 60.0), (2.0, 1.0, 2000, 40.0)]:
        res = ground_state(Z, N, build_grid(n, r_max))
        cert = stationarity_certificate(res, tol_scale)
        cases.append({"name": f"ground_state(Z={Z:g},N={N:g})", **res.to_json(), "certificate": cert.to_dict(),
                      "pass": bool(res.converged and cert.passed)})
    probe = nonexistence_probe(1.0, [0.5, 1.0, 2.5], build_grid(2000, 80.0))
    cases.append({"name": "nonexistence_probe", **probe, "pass": probe["consistent"]})
    return {"suite": "stationary", "cases": cases, "worst_margin": None, "pass": all(c["pass"] for c in cases)}


def _dynamics_cases(traj, Z, R_list, T, name, tol_scale, hf=False):
    N = traj.records[0].mass
    tol = default_tolerance(N, Z, tol_scale)
    reps = []
    for R in R_list:
        if hf:
            reps += [check_hf_trace_bound(traj, Z, R, T, name), check_hf_monotonicity(traj, Z, R, tol=tol, scenario=name)]
        else:
            reps += [check_localized_mass_bound(traj, Z, R, T, name), *check_kinetic_bound(traj, Z, R, T, name),
                     check_monotonicity(traj, Z, R, tol=tol, scenario=name)]
    return reps


def suite_dynamics(tol_scale: float = 1.0) -> dict:
    from .dynamics import virial_identity_errors

    grid = build_grid(2000, 40.0)
    psi = WaveFunction.from_u(grid, lambda r: np.exp(-0.5 * r * r)).normalized(3.0)
    R_list = (5.0, 10.0)
    cfg = PropagatorConfig(dt=1e-3, steps=2000, record_every=20, scales=R_list)
    traj = propagate(psi, 1.0, cfg, keep_states=True)
    T = cfg.total_time
    reps = _dynamics_cases(traj, 1.0, R_list, T, "ci_hartree", tol_scale)
    vir = virial_identity_errors(traj, 1.0, R_list)
    cases = [r.to_dict() for r in reps]
    cases.append({"name": "virial_identity", "max_rel_error": vir["max_rel_error"],
                  "pass": vir["max_rel_error"] <= 1e-3 * tol_scale})
    cases.append({"name": "conservation", **{k: traj.diagnostics[k] for k in ("max_mass_drift", "max_energy_drift")},
                  "pass": traj.diagnostics["max_mass_drift"] < 1e-8 and traj.diagnostics["max_energy_drift"] < 1e-5})
    return _summarize("dynamics", cases)


def suite_hartree_fock(tol_scale: float = 1.0) -> dict:
    from .hartree_fock import cauchy_schwarz_defect

    grid = build_grid(1000, 40.0)
    orb = OrbitalSet.from_functions(grid, [lambda r, w=w: np.exp(-0.5 * (r / w) ** 2) for w in (0.8, 1.5, 2.5)])
    R_list = (5.0, 10.0)
    cfg = PropagatorConfig(dt=1e-3, steps=1000, record_every=10, scales=R_list)
    traj = evolve_orbitals(orb, 1.0, cfg)
    reps = _dynamics_cases(traj, 1.0, R_list, cfg.total_time, "ci_hartree_fock", tol_scale, hf=True)
    cases = [r.to_dict() for r in reps]
    d = traj.diagnostics
    cases.append({"name": "orthonormality", "max_gram_defect": d["max_gram_defect"], "pass": d["max_gram_defect"] < 1e-7})
    cases.append({"name": "hf_energy", "max_energy_drift": d["max_energy_drift"], "pass": d["max_energy_drift"] < 1e-4})
    cs = cauchy_schwarz_defect(traj.final, stride=4)
    cases.append({"name": "cauchy_schwarz", "min_defect": cs, "pass": cs >= -1e-12})
    return _summarize("hartree_fock", cases)


def _summarize(name: str, cases: list) -> dict:
    margins = [c["margin"] for c in cases if isinstance(c.get("margin"), (int, float))]
    return {
        "suite": name,
        "cases": cases,
        "worst_margin": min(margins) if margins else None,
        "pass": all(c["pass"] for c in cases),
        "gating_failures": [c.get("name") for c in cases if not c["pass"] and not c.get("flags")],
    }


_SUITE_FUNCS = {
    "kernels": suite_kernels,
    "commutators": suite_commutators,
    "stationary": suite_stationary,
    "dynamics": suite_dynamics,
    "hartree_fock": suite_hartree_fock,
}


def _run_one(args):
    name, tol_scale = args
    t0 = time.perf_counter()
    out = _SUITE_FUNCS[name](tol_scale)
    out["elapsed_seconds"] = time.perf_counter() - t0
    return out


def run_verification_suites(selection=None, tol_scale: float = 1.0, jobs: int = 1) -> dict:
    """Run the chosen suites; ``exit_status`` is 1 if any unflagged check fails."""
    names = list(SUITES) if not selection or selection == "all" else list(selection)
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}; choose from {SUITES}")
    work = [(n, tol_scale) for n in names]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    gating = any(not r["pass"] and (r.get("gating_failures", True)) for r in results)
    return {"suites": results, "pass": all(r["pass"] for r in results), "exit_status": 1 if gating else 0}
