import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

import hartree_lab.dynamics as dyn
from hartree_lab.dynamics import (
    Absorber,
    CoverageError,
    PropagationError,
    PropagatorConfig,
    check_kinetic_bound,
    check_localized_mass_bound,
    check_monotonicity,
    default_tolerance,
    kinetic_sup_bound,
    kinetic_sup_bound_energy_form,
    localized_mass_bound_rhs,
    propagate,
    time_average,
    virial_identity_errors,
)
from hartree_lab.grid import WaveFunction, build_grid


@pytest.fixture(scope="module")
def short_run(gaussian3):
    cfg = PropagatorConfig(dt=2e-3, steps=500, record_every=10, scales=(5.0, 10.0))
    return propagate(gaussian3, 1.0, cfg, keep_states=True)


def test_config_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(dt=0.0, steps=10)
    with pytest.raises(ValueError):
        PropagatorConfig(dt=1e-3, steps=-1)
    with pytest.raises(ValueError):
        PropagatorConfig(dt=1e-3, steps=10, record_every=0)
    with pytest.raises(ValueError):
        PropagatorConfig(dt=1e-3, steps=10, absorber=Absorber(-1.0, 30.0))
    cfg = PropagatorConfig(dt=1e-3, steps=10, absorber=Absorber(1.0, 10.0))
    with pytest.raises(ValueError):
        cfg.validate_for(build_grid(100, 40.0))


def test_conservation(short_run):
    d = short_run.diagnostics
    assert d["max_mass_drift"] < 1e-10
    assert d["max_energy_drift"] < 1e-5
    assert short_run.times[-1] == pytest.approx(1.0)
    assert len(short_run.records) == 51


def test_virial_identity_short_run(short_run):
    out = virial_identity_errors(short_run, 1.0, (5.0, 10.0))
    assert out["samples"] == 2 * 49
    assert out["max_rel_error"] < 5e-3


def test_virial_identity_needs_states(gaussian3):
    traj = propagate(gaussian3, 1.0, PropagatorConfig(dt=2e-3, steps=5, scales=(5.0,)))
    with pytest.raises(ValueError):
        virial_identity_errors(traj, 1.0, (5.0,))


def test_linear_eigenstate_only_rotates_phase():
    g = build_grid(1000, 40.0)
    diag = 2.0 / g.dr**2 - 1.0 / g.r
    off = np.full(g.n - 1, -1.0 / g.dr**2)
    w, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    assert w[0] == pytest.approx(-0.25, abs=1e-3)
    psi = WaveFunction(g, vec[:, 0]).normalized(1.0)
    cfg = PropagatorConfig(dt=1e-3, steps=1000, record_every=100, scales=(5.0,), mean_field=False)
    traj = propagate(psi, 1.0, cfg)
    np.testing.assert_allclose(np.abs(traj.final.v), np.abs(psi.v), atol=1e-5 * np.abs(psi.v).max())
    overlap = np.vdot(psi.v, traj.final.v) / np.vdot(psi.v, psi.v)
    assert np.angle(overlap) == pytest.approx(-w[0] * 1.0, abs=1e-5)
    assert np.ptp(traj.series("M_R", 5.0)) < 1e-7  # splitting error only


def test_dry_run_catches_unstable_step(gaussian3, monkeypatch):
    monkeypatch.setattr(dyn, "strang_step", lambda v, *a, **k: 1.001 * v)
    with pytest.raises(PropagationError):
        propagate(gaussian3, 1.0, PropagatorConfig(dt=1e-3, steps=10))


def test_absorber_removes_mass_monotonically():
    g = build_grid(600, 30.0)
    psi = WaveFunction.from_u(g, lambda r: np.exp(-0.5 * (r - 10) ** 2 + 2j * r)).normalized(1.0)
    cfg = PropagatorConfig(dt=2e-3, steps=2000, record_every=50, scales=(5.0,), absorber=Absorber(5.0, 20.0))
    traj = propagate(psi, 1.0, cfg)
    m = traj.series("mass")
    assert m[-1] < 0.5
    assert traj.diagnostics["max_mass_increase"] <= 1e-14
    assert traj.diagnostics["max_mass_drift"] is None
    assert traj.records[-1].A_absorbed[5.0] != 0.0


def test_absorber_mask_shape():
    g = build_grid(100, 10.0)
    m = Absorber(2.0, 5.0).mask(g, 0.1)
    assert np.all(m[g.r <= 5.0] == 1.0)
    assert m[-1] == pytest.approx(np.exp(-0.2))
    assert np.all(np.diff(m) <= 0)


def test_time_average():
    t = np.linspace(0, 2, 201)
    assert time_average(t, t, 2.0) == pytest.approx(1.0)
    assert time_average(t, t**2, 1.0) == pytest.approx(1 / 3, rel=1e-4)
    assert time_average(t, np.ones_like(t), 1.234) == pytest.approx(1.0)
    with pytest.raises(CoverageError):
        time_average(t, t, 3.0)
    with pytest.raises(CoverageError):
        time_average(t[5:], t[5:], 1.0)
    with pytest.raises(ValueError):
        time_average(t, t, 0.0)


def test_bound_arithmetic():
    assert localized_mass_bound_rhs(1.0, 10.0, 12.0, 3.0, 1000.0) == pytest.approx(3.5)
    assert localized_mass_bound_rhs(1.0, 10.0, 12.0, 3.0, 1000.0, extra=1.0) == pytest.approx(4.5)
    assert localized_mass_bound_rhs(1.0, 10.0, 12.0, 3.0, 1000.0, kappa=0.5) == pytest.approx(5.5)
    assert kinetic_sup_bound(1.0, 2.0, 4.0) == pytest.approx(2 + 8 + 16)
    assert kinetic_sup_bound_energy_form(1.0, 4.0, 4.0) == pytest.approx(4 + 8 + 16)
    assert default_tolerance(3.0, 1.0) == pytest.approx(1.2e-3)


def test_bound_reports(short_run):
    for R in (5.0, 10.0):
        rep = check_localized_mass_bound(short_run, 1.0, R, 1.0)
        assert rep.passed and rep.margin > 0
        assert all(r.passed for r in check_kinetic_bound(short_run, 1.0, R, 0.5))
        mono = check_monotonicity(short_run, 1.0, R)
        assert mono.passed
        assert mono.extra["worst_margin"] >= -mono.extra["tol"]
    d = rep.to_dict()
    assert {"name", "lhs", "rhs", "margin", "pass", "flags"} <= set(d)


def test_coverage_error_for_long_window(short_run):
    with pytest.raises(CoverageError):
        check_localized_mass_bound(short_run, 1.0, 5.0, 10.0)


def test_virial_grows_for_excess_charge():
    # N = 4 > 2Z: the virial expectation at a scale well beyond the data keeps growing
    from hartree_lab.stationary import mass_extent

    g = build_grid(2000, 80.0)
    psi = WaveFunction.from_u(g, lambda r: np.exp(-0.5 * r * r)).normalized(4.0)
    R = 5 * mass_extent(psi)
    traj = propagate(psi, 1.0, PropagatorConfig(dt=1e-3, steps=4000, record_every=20, scales=(R,)))
    rep = check_monotonicity(traj, 1.0, R)
    assert rep.passed
    assert rep.extra["A_strictly_increasing"]
