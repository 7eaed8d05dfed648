import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hartree_lab.grid import WaveFunction, build_grid, kinetic_form, mass
from hartree_lab.potentials import (
    coulomb_attraction,
    exchange_kernel_l0,
    hartree_potential,
    max_kernel_double_integral,
    shell_potential,
)


def _ball(g):
    # uniform unit-charge ball of radius 1: density 3/(4 pi)
    return WaveFunction.from_u(g, lambda r: np.where(r <= 1.0, 1.0, 0.0)).normalized(1.0)


def test_uniform_ball_oracle():
    g = build_grid(20000, 4.0)
    W = hartree_potential(_ball(g)).values
    # W(r) = (3 - r^2)/2 inside, 1/r outside
    assert np.interp(0.0, g.r, W) == pytest.approx(1.5, abs=2e-3)
    assert np.interp(0.5, g.r, W) == pytest.approx(1.375, abs=2e-3)
    assert np.interp(2.0, g.r, W) == pytest.approx(0.5, abs=1e-3)


def test_far_field_is_total_charge():
    g = build_grid(2000, 40.0)
    psi = WaveFunction.from_u(g, lambda r: np.exp(-r)).normalized(2.5)
    W = hartree_potential(psi).values
    assert g.r[-1] * W[-1] == pytest.approx(2.5, rel=1e-10)


def test_potential_is_positive_and_decreasing(gaussian3):
    W = hartree_potential(gaussian3).values
    assert np.all(W > 0)
    assert np.all(np.diff(W) <= 1e-14)


def test_batched_matches_rowwise(grid_small):
    rng = np.random.default_rng(2)
    rows = rng.normal(size=(3, 2, grid_small.n))
    batched = shell_potential(rows, grid_small)
    for idx in np.ndindex(3, 2):
        np.testing.assert_allclose(batched[idx], shell_potential(rows[idx], grid_small))


def test_kernel_is_symmetric_form(grid_small):
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, grid_small.n))
    lhs = np.dot(b, shell_potential(a, grid_small))
    rhs = np.dot(a, shell_potential(b, grid_small))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_max_kernel_double_integral_bruteforce():
    g = build_grid(40, 4.0)
    rng = np.random.default_rng(4)
    a = rng.normal(size=g.n) + 1j * rng.normal(size=g.n)
    b = rng.normal(size=g.n) + 1j * rng.normal(size=g.n)
    h = 1.0 / g.r
    H = exchange_kernel_l0(g.r[:, None], g.r[None, :])
    brute = np.sum(H * np.outer(a, np.conj(b)))
    assert max_kernel_double_integral(a, b, h) == pytest.approx(brute, rel=1e-12)


def test_attraction_requires_positive_charge(grid_small):
    with pytest.raises(ValueError):
        coulomb_attraction(0.0, grid_small)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.1, 5.0))
def test_sup_bounded_by_norms(width, N):
    # Hardy: sup W_u <= ||u|| ||grad u||
    g = build_grid(1500, 40.0)
    psi = WaveFunction.from_u(g, lambda r: np.exp(-0.5 * (r / width) ** 2) * (1 + r)).normalized(N)
    W = hartree_potential(psi).values
    assert W.max() <= np.sqrt(mass(psi) * kinetic_form(psi.v, g)) * (1 + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(0.1, 4.0))
def test_linear_in_density(s, t):
    g = build_grid(300, 20.0)
    a = np.exp(-g.r)
    b = g.r * np.exp(-0.5 * g.r)
    np.testing.assert_allclose(
        shell_potential(s * a + t * b, g), s * shell_potential(a, g) + t * shell_potential(b, g), rtol=1e-12
    )
