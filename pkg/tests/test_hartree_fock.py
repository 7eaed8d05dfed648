import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hartree_lab.dynamics import Absorber, PropagatorConfig, propagate
from hartree_lab.grid import FOUR_PI, WaveFunction, build_grid, second_diff
from hartree_lab.hartree_fock import (
    OrbitalSet,
    apply_fock,
    cauchy_schwarz_defect,
    check_hf_monotonicity,
    check_hf_trace_bound,
    evolve_orbitals,
    exchange_apply,
    exchange_virial,
    hf_energy,
    hf_virial_rhs,
    localized_traces,
)
from hartree_lab.profiles import VirialProfile

GRID = build_grid(600, 30.0)


def _orbitals(widths, occ=None, grid=GRID):
    return OrbitalSet.from_functions(grid, [lambda r, w=w: np.exp(-0.5 * (r / w) ** 2) * (1 + 0.3j * r) for w in widths], occ)


@pytest.fixture(scope="module")
def hf_run():
    orb = _orbitals((0.8, 1.5, 2.5))
    cfg = PropagatorConfig(dt=2e-3, steps=300, record_every=10, scales=(5.0, 10.0))
    return evolve_orbitals(orb, 1.0, cfg)


def test_orbital_set_validation():
    V = np.vstack([GRID.r * np.exp(-GRID.r), GRID.r * np.exp(-GRID.r)])
    with pytest.raises(ValueError):
        OrbitalSet(GRID, V, [1.0, 1.0])
    orb = _orbitals((1.0,))
    with pytest.raises(ValueError):
        OrbitalSet(GRID, orb.V, [1.5])
    with pytest.raises(ValueError):
        OrbitalSet(GRID, orb.V, [1.0, 1.0])


def test_lowdin_orthonormalizes():
    orb = _orbitals((0.5, 1.0, 2.0, 4.0), [1.0, 0.5, 0.5, 0.2])
    assert orb.gram_defect() < 1e-12
    assert orb.K == 4
    assert orb.trace == pytest.approx(2.2)


def test_single_orbital_self_interaction_cancels():
    orb = _orbitals((1.3,))
    v = orb.V[0]
    expected = -second_diff(v, GRID) - v / GRID.r
    np.testing.assert_allclose(apply_fock(orb, 0, 1.0).v, expected, atol=1e-12 * np.abs(expected).max())


def test_fock_operator_is_hermitian():
    orb = _orbitals((0.7, 1.4, 2.8))
    F = np.array([apply_fock(orb, j, 1.0).v for j in range(orb.K)])
    G = FOUR_PI * GRID.dr * (np.conj(orb.V) @ F.T)
    np.testing.assert_allclose(G, np.conj(G.T), atol=1e-10)


def test_exchange_operator_is_hermitian_and_positive():
    orb = _orbitals((0.7, 1.4))
    rng = np.random.default_rng(5)
    W = (rng.normal(size=(2, GRID.n)) + 1j * rng.normal(size=(2, GRID.n))) * np.exp(-0.1 * GRID.r)
    XW = exchange_apply(orb.V, orb.occupations, GRID, W)
    a = np.vdot(W[0], XW[1])
    b = np.conj(np.vdot(W[1], XW[0]))
    assert a == pytest.approx(b, rel=1e-10)
    assert np.real(np.vdot(W[0], XW[0])) >= 0


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.3, 4.0), min_size=1, max_size=4, unique=True), st.floats(0.1, 1.0))
def test_exchange_below_direct(widths, occ0):
    if len(widths) > 1 and np.min(np.diff(sorted(widths))) < 0.05:
        return  # nearly dependent profiles
    occ = [occ0] + [1.0] * (len(widths) - 1)
    orb = _orbitals(widths, occ)
    h = VirialProfile("arctan", 3.0)
    br = hf_virial_rhs(orb, h, 1.0)
    assert br.repulsion >= -1e-12
    assert exchange_virial(orb, h) >= 0
    tr1, tr2 = localized_traces(orb, 3.0)
    assert tr2 <= tr1 + 1e-12
    assert cauchy_schwarz_defect(orb, stride=6) >= -1e-12


def test_hf_energy_one_orbital_equals_linear_energy():
    orb = _orbitals((1.1,))
    v = orb.V[0]
    linear = FOUR_PI * GRID.dr * np.real(np.vdot(v, -second_diff(v, GRID) - v / GRID.r))
    assert hf_energy(orb.V, orb.occupations, GRID, 1.0) == pytest.approx(linear, rel=1e-12)


def test_k1_matches_hartree_without_self_interaction():
    psi = WaveFunction.from_u(GRID, lambda r: np.exp(-0.5 * r * r)).normalized(1.0)
    cfg = PropagatorConfig(dt=1e-3, steps=200, record_every=20, scales=(5.0,), mean_field=False)
    h = propagate(psi, 1.0, cfg)
    f = evolve_orbitals(OrbitalSet(GRID, psi.v[None, :], [1.0]), 1.0, cfg)
    for a, b in zip(h.records, f.records):
        assert a.energy == pytest.approx(b.energy, abs=1e-6)
        assert a.M_R[5.0] == pytest.approx(b.M_R[5.0], abs=1e-6)
        assert a.A_arctan[5.0] == pytest.approx(b.A_arctan[5.0], abs=1e-6)


def test_evolution_preserves_structure(hf_run):
    d = hf_run.diagnostics
    assert d["max_gram_defect"] < 1e-10
    assert d["max_mass_drift"] < 1e-10
    assert d["max_energy_drift"] < 1e-4
    assert isinstance(hf_run.final, OrbitalSet)


def test_hf_bounds(hf_run):
    for R in (5.0, 10.0):
        rep = check_hf_trace_bound(hf_run, 1.0, R, 0.6)
        assert rep.passed
        assert rep.extra["operator_inequality"]
        assert check_hf_monotonicity(hf_run, 1.0, R).passed


def test_absorber_rejected():
    cfg = PropagatorConfig(dt=1e-3, steps=2, absorber=Absorber(1.0, 20.0))
    with pytest.raises(ValueError):
        evolve_orbitals(_orbitals((1.0,)), 1.0, cfg)
