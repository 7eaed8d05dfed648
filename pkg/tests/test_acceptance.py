"""Acceptance criteria at their stated settings and tolerances.

Each test records one PASS/FAIL line, printed in the terminal summary. The
long Hartree runs are shared through module-scoped fixtures.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hartree_lab.commutators import run_commutator_suite
from hartree_lab.dynamics import (
    Absorber,
    PropagatorConfig,
    check_kinetic_bound,
    check_localized_mass_bound,
    check_monotonicity,
    default_tolerance,
    propagate,
    virial_identity_errors,
)
from hartree_lab.grid import WaveFunction, build_grid, kinetic_form
from hartree_lab.harness import suite_kernels
from hartree_lab.hartree_fock import OrbitalSet, check_hf_monotonicity, check_hf_trace_bound, evolve_orbitals
from hartree_lab.stationary import ground_state, stationarity_certificate

Z = 1.0
N = 3.0
R_LIST = (5.0, 10.0, 20.0)
T_LIST = (10.0, 25.0, 50.0)


def _report(key, title, ok, detail):
    ACCEPTANCE_LINES[key] = f"[{'PASS' if ok else 'FAIL'}] {key} {title}: {detail}"
    print(ACCEPTANCE_LINES[key])
    assert ok, detail


def _gaussian(grid, mass=N):
    return WaveFunction.from_u(grid, lambda r: np.exp(-0.5 * r * r)).normalized(mass)


@pytest.fixture(scope="module")
def hydrogen():
    t0 = time.perf_counter()
    res = ground_state(1.0, 1e-6, build_grid(4000, 40.0))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def dirichlet_run():
    grid = build_grid(4000, 80.0)
    cfg = PropagatorConfig(dt=5e-4, steps=10_000, record_every=50, scales=R_LIST)
    t0 = time.perf_counter()
    traj = propagate(_gaussian(grid), Z, cfg, keep_states=True)
    vir = virial_identity_errors(traj, Z, R_LIST)
    return traj, vir, time.perf_counter() - t0


@pytest.fixture(scope="module")
def absorber_run():
    grid = build_grid(4000, 80.0)
    cfg = PropagatorConfig(dt=5e-4, steps=100_000, record_every=200, scales=R_LIST, absorber=Absorber(5.0, 56.0))
    return propagate(_gaussian(grid), Z, cfg)


@pytest.fixture(scope="module")
def k1_pair():
    grid = build_grid(2000, 40.0)
    psi = _gaussian(grid, 1.0)
    cfg = PropagatorConfig(dt=1e-3, steps=1000, record_every=50, scales=R_LIST[:2], mean_field=False)
    return propagate(psi, Z, cfg), evolve_orbitals(OrbitalSet(grid, psi.v[None, :], [1.0]), Z, cfg)


@pytest.fixture(scope="module")
def k4_run():
    grid = build_grid(1000, 40.0)
    orb = OrbitalSet.from_functions(grid, [lambda r, w=w: np.exp(-0.5 * (r / w) ** 2) for w in (0.7, 1.2, 2.0, 3.0)])
    cfg = PropagatorConfig(dt=1e-3, steps=10_000, record_every=100, scales=R_LIST)
    return evolve_orbitals(orb, Z, cfg)


def test_c1_hydrogen_limit(hydrogen):
    res, elapsed = hydrogen
    ref = WaveFunction.from_u(res.psi.grid, lambda r: np.exp(-0.5 * r)).normalized(1e-6)
    err = np.linalg.norm(np.abs(res.psi.v) - ref.v) / np.linalg.norm(ref.v)
    ok = abs(res.lam + 0.25) <= 1e-3 and err < 1e-2 and elapsed < 30
    _report("C1", "hydrogen linear limit", ok, f"lambda={res.lam:.7f} L2err={err:.2e} time={elapsed:.1f}s")


def test_c2_kernel_suite():
    t0 = time.perf_counter()
    out = suite_kernels()
    elapsed = time.perf_counter() - t0
    cases = {c["name"]: c for c in out["cases"]}
    cubic, ratio, avg = cases["cubic_kernel_min"], cases["arctan_ratio_min"], cases["angular_average"]
    at_corner = abs(cubic["argmin_u"] - 1.0) <= 1.0 / 1999 and abs(cubic["argmin_theta"] + 1.0) <= 2.0 / 1999
    ok = (abs(cubic["min_value"] - 0.5) <= 1e-6 and at_corner and ratio["min_value"] >= 1 - 1e-9
          and avg["max_rel_error"] <= 1e-8 and elapsed < 120)
    _report("C2", "kernel suite", ok,
            f"cubic min={cubic['min_value']:.9f} at ({cubic['argmin_u']:.4f},{cubic['argmin_theta']:.4f}) "
            f"arctan ratio min={ratio['min_value']:.9f} angular err={avg['max_rel_error']:.1e} time={elapsed:.1f}s")


def test_c3_commutator_suite():
    t0 = time.perf_counter()
    out = run_commutator_suite(n=2000, r_max=10.0)
    elapsed = time.perf_counter() - t0
    ratios = out["eight_p2"]["ratios"]
    ok = all(c["pass"] for c in out["cases"]) and all(3 <= q <= 5 for q in ratios) and elapsed < 120
    _report("C3", "commutator suite", ok,
            f"{len(out['cases'])} form checks, worst margin={out['worst_margin']:.2e}, "
            f"8p^2 ratios={[round(q, 3) for q in ratios]} time={elapsed:.1f}s")


def test_c4_virial_identity(dirichlet_run):
    traj, vir, elapsed = dirichlet_run
    ok = vir["max_rel_error"] <= 1e-3 and elapsed < 600
    _report("C4", "virial identity", ok,
            f"max rel error={vir['max_rel_error']:.2e} over {vir['samples']} samples (worst R={vir['worst']['R']:g}, "
            f"t={vir['worst']['t']:.3f}) time={elapsed:.1f}s")


def test_c5_localized_mass_bound(absorber_run):
    traj = absorber_run
    reports = [check_localized_mass_bound(traj, Z, R, T) for R in R_LIST for T in T_LIST]
    mono = [check_monotonicity(traj, Z, R, tol=default_tolerance(N, Z)) for R in R_LIST]
    bad = [r for r in reports + mono if not r.passed]
    worst = min(r.margin for r in reports)
    worst_mono = min(m.extra["worst_margin"] for m in mono)
    _report("C5", "time-averaged localized mass bound", not bad,
            f"{len(reports)} (R,T) pairs, {len(bad)} violations, min margin={worst:.3f}, "
            f"monotonicity worst margin={worst_mono:.2e} (tol {mono[0].extra['tol']:.1e})")


def test_c6_kinetic_bounds(dirichlet_run, absorber_run):
    traj4 = dirichlet_run[0]
    reps = [r for R in R_LIST for r in check_kinetic_bound(traj4, Z, R, 5.0)]
    reps += [r for R in R_LIST for T in T_LIST for r in check_kinetic_bound(absorber_run, Z, R, T)]
    bad = [r for r in reps if not r.passed]
    uniform = [r for r in reps if r.name == "kinetic_uniform_bound"]
    _report("C6", "kinetic bounds", not bad,
            f"{len(reps)} checks, {len(bad)} violations, sup K={max(r.lhs for r in uniform):.3f} "
            f"<= {uniform[0].rhs:.3f}")


def test_c7_hartree_fock(k1_pair, k4_run):
    h, f = k1_pair
    diff = 0.0
    for a, b in zip(h.records, f.records):
        pairs = [(a.mass, b.mass), (a.energy, b.energy), (a.kinetic, b.kinetic)]
        for R in a.M_R:
            pairs += [(a.M_R[R], b.M_R[R]), (a.K_R[R], b.K_R[R]), (a.A_arctan[R], b.A_arctan[R]), (a.A_log[R], b.A_log[R])]
        diff = max(diff, max(abs(x - y) for x, y in pairs))
    d = k4_run.diagnostics
    T_end = k4_run.times[-1]
    trace = [check_hf_trace_bound(k4_run, Z, R, T) for R in R_LIST for T in (T_end / 4, T_end / 2, T_end)]
    bad = [r for r in trace if not r.passed]
    # informational: once the orbitals reach the hard wall its pressure term can break monotonicity
    mono = [check_hf_monotonicity(k4_run, Z, R) for R in R_LIST]
    mono_gating = [m for m in mono if not m.passed and not m.flags]
    mono_flagged = [m for m in mono if not m.passed and m.flags]
    ok = diff <= 1e-6 and d["max_gram_defect"] < 1e-7 and d["max_energy_drift"] < 1e-4 and not bad and not mono_gating
    _report("C7", "Hartree-Fock", ok,
            f"K=1 max diff={diff:.1e}; K=4 Gram defect={d['max_gram_defect']:.1e} "
            f"energy drift={d['max_energy_drift']:.1e} trace-bound violations={len(bad)}/{len(trace)} "
            f"(monotonicity: {len(mono_flagged)} reflection-flagged, outer shell {d['outer_shell_fraction']:.1%})")


def test_c8_conservation(hydrogen, dirichlet_run, k1_pair, k4_run):
    runs = {"C4": dirichlet_run[0], "K=1 Hartree": k1_pair[0], "K=1 HF": k1_pair[1], "K=4 HF": k4_run}
    mass_drift = max(t.diagnostics["max_mass_drift"] for t in runs.values())
    energy_drift = max(t.diagnostics["max_energy_drift"] for t in runs.values())
    grid = build_grid(1000, 40.0)
    drifts = []
    for dt in (2e-3, 1e-3):
        cfg = PropagatorConfig(dt=dt, steps=int(round(1.0 / dt)), record_every=1, scales=(5.0,))
        drifts.append(propagate(_gaussian(grid), Z, cfg).diagnostics["max_energy_drift"])
    ratio = drifts[0] / drifts[1]
    ok = mass_drift < 1e-8 and energy_drift < 1e-5 and 3 <= ratio <= 5
    _report("C8", "conservation", ok,
            f"max mass drift={mass_drift:.1e} max energy drift={energy_drift:.1e} dt-halving ratio={ratio:.3f}")


def test_c9_stationary_certificates(hydrogen):
    cases = [(1.0, 0.5, 4000, 60.0), (1.0, 1.0, 4000, 80.0), (2.0, 1.0, 4000, 40.0), (1.0, 2.5, 4000, 80.0)]
    results = [hydrogen[0]] + [ground_state(z, n, build_grid(m, rm)) for z, n, m, rm in cases]
    lines, bad = [], 0
    for res in results:
        if not res.converged:
            lines.append(f"(Z={res.Z:g},N={res.N:g}) not converged")
            continue
        cert = stationarity_certificate(res)
        kin = kinetic_form(res.psi.v, res.psi.grid)
        ok = cert.passed and kin <= res.Z**2 * res.N * 1.01
        bad += not ok
        lines.append(f"(Z={res.Z:g},N={res.N:g}) {'ok' if ok else 'FAILED'}")
    converged = sum(r.converged for r in results)
    _report("C9", "stationary certificates", bad == 0 and converged > 0,
            f"{converged} converged, {bad} failed: " + "; ".join(lines))
