"""Scalar diagnostics of radial states: energies, localized mass/kinetic, virial terms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import FOUR_PI, WaveFunction, forward_diff, kinetic_form
from .potentials import hartree_potential, max_kernel_double_integral
from .profiles import VirialProfile, localization_weight

KAPPA_RADIAL = 1.0
KAPPA_GENERAL = 0.5


def kinetic(psi: WaveFunction) -> float:
    return kinetic_form(psi.v, psi.grid)


def attraction_energy(psi: WaveFunction, Z: float) -> float:
    """``-Z int |u|^2 / |x| dx``."""
    g = psi.grid
    return float(-Z * FOUR_PI * g.dr * np.sum(np.abs(psi.v) ** 2 / g.r))


def repulsion_energy(psi: WaveFunction) -> float:
    """``(1/2) int int |u(x)|^2 |u(y)|^2 / |x - y| = (1/2) 4 pi int W_u |v|^2 dr``."""
    W = hartree_potential(psi).values
    return float(0.5 * FOUR_PI * psi.grid.dr * np.sum(W * np.abs(psi.v) ** 2))


def energy(psi: WaveFunction, Z: float) -> float:
    """Hartree energy: kinetic + attraction + repulsion."""
    return kinetic(psi) + attraction_energy(psi, Z) + repulsion_energy(psi)


def localized_mass(psi: WaveFunction, R: float) -> float:
    """``M_R = int |u|^2 / (1 + |x|^2 / R^2) dx``."""
    return localized_mass_density(np.abs(psi.v) ** 2, psi.grid, R)


def localized_mass_density(vsq: np.ndarray, grid, R: float) -> float:
    if not R > 0:
        raise ValueError(f"R must be positive, got {R!r}")
    return float(FOUR_PI * grid.dr * np.sum(localization_weight(R, grid.r) * vsq))


def _kinetic_weight(R: float, r):
    return 1.0 / (1.0 + r / R) ** 2


def localized_kinetic_orbital(v: np.ndarray, grid, R: float) -> float:
    """``int |grad u|^2 / (1 + |x|/R)^2 dx`` for one orbital ``v = r u``.

    Uses ``r^2 |u'|^2 = |v'|^2 - (|v|^2)'/r + |v|^2/r^2`` integrated by parts:
    ``K_R = 4 pi [int w |v'|^2 dr + int (w'/r) |v|^2 dr]``. With w' <= 0 and
    w <= 1 this keeps ``0 <= K_R <= kinetic`` and monotonicity in R on the grid.
    """
    if not R > 0:
        raise ValueError(f"R must be positive, got {R!r}")
    mid = grid.midpoints()
    dv = forward_diff(v, grid)
    w_prime_over_r = -2.0 / (R * grid.r) / (1.0 + grid.r / R) ** 3
    return float(
        FOUR_PI * grid.dr * (np.sum(_kinetic_weight(R, mid) * np.abs(dv) ** 2)
                             + np.sum(w_prime_over_r * np.abs(v) ** 2))
    )


def localized_kinetic(psi: WaveFunction, R: float) -> float:
    """``K_R = int |grad u|^2 / (1 + |x|/R)^2 dx``."""
    return localized_kinetic_orbital(psi.v, psi.grid, R)


def virial_expectation_orbital(v: np.ndarray, grid, profile: VirialProfile) -> float:
    """``2 Im int conj(u) f'(|x|) d_r u dx = 8 pi Im int f'(r) conj(v) v' dr``.

    Discretized as ``8 pi sum_j Im(conj(v_j) v_{j+1}) (f'_j + f'_{j+1}) / 2``,
    the symmetric centered-difference form.
    """
    fp = profile(grid.r, 1)
    cross = np.imag(np.conj(v[:-1]) * v[1:])
    return float(8.0 * np.pi * np.sum(cross * 0.5 * (fp[:-1] + fp[1:])))


def virial_expectation(psi: WaveFunction, profile: VirialProfile) -> float:
    return virial_expectation_orbital(psi.v, psi.grid, profile)


@dataclass
class VirialBreakdown:
    gradient: float
    fourth_derivative: float
    attraction: float
    repulsion: float
    wall: float = 0.0
    localized_mass: float | None = None

    @property
    def bulk(self) -> float:
        """Sum of the four whole-space terms."""
        return self.gradient + self.fourth_derivative + self.attraction + self.repulsion

    @property
    def total(self) -> float:
        return self.bulk + self.wall

    @property
    def magnitude(self) -> float:
        """Sum of absolute values of all terms (scale for relative comparisons)."""
        return (abs(self.gradient) + abs(self.fourth_derivative) + abs(self.attraction)
                + abs(self.repulsion) + abs(self.wall))

    def to_dict(self) -> dict:
        return {
            "gradient": self.gradient,
            "fourth_derivative": self.fourth_derivative,
            "attraction": self.attraction,
            "repulsion": self.repulsion,
            "wall": self.wall,
            "bulk": self.bulk,
            "total": self.total,
        }


def angular_average_on_grid(profile: VirialProfile, r):
    """``f_R'(r_>) / r_>^2`` as a function of the larger radius."""
    return profile(r, 1) / np.asarray(r) ** 2


def virial_rhs_density(
    vs: list[np.ndarray],
    occupations,
    grid,
    profile: VirialProfile,
    Z: float,
    exchange: bool = False,
) -> VirialBreakdown:
    """Terms of ``d/dt <A_f>`` for radial (s-wave) states.

    gradient   ``4 int f'' |d_r u + u/|x||^2 dx = 16 pi int f'' |v'|^2 dr``
    fourth     ``-int f'''' |u|^2 dx``
    attraction ``-2 Z int f'/|x|^2 |u|^2 dx``
    repulsion  ``int int avg(r, s) rho(x) rho(y)`` with ``avg = f'(r_>)/r_>^2``;
    with ``exchange=True`` the ``|gamma(x, y)|^2`` part is subtracted.

    The hard wall at ``L = (n + 1) dr`` adds the boundary pressure
    ``wall = -8 pi f'(L) |v'(L)|^2`` with ``v'(L) ~ -v_n / dr``; it vanishes for
    states that do not reach the wall and has no whole-space counterpart.
    """
    r = grid.r
    dr = grid.dr
    occ = np.asarray(occupations, dtype=float)
    f2_mid = profile(grid.midpoints(), 2)
    f4 = profile(r, 4)
    h = angular_average_on_grid(profile, r)
    fp_wall = profile((grid.n + 1) * dr, 1)
    grad = 0.0
    wall = 0.0
    vsq = np.zeros(grid.n)
    for o, v in zip(occ, vs):
        grad += o * 16.0 * np.pi * dr * np.sum(f2_mid * np.abs(forward_diff(v, grid)) ** 2)
        wall -= o * 8.0 * np.pi * fp_wall * abs(v[-1] / dr) ** 2
        vsq += o * np.abs(v) ** 2
    fourth = -FOUR_PI * dr * np.sum(f4 * vsq)
    attraction = -2.0 * Z * FOUR_PI * dr * np.sum(h * vsq)
    a = FOUR_PI * dr * vsq
    repulsion = float(np.real(max_kernel_double_integral(a, a, h)))
    if exchange:
        repulsion -= exchange_double_integral(vs, occ, grid, h)
    m_r = None
    if profile.kind == "arctan":
        m_r = float(FOUR_PI * dr * np.sum(localization_weight(profile.R, r) * vsq))
    return VirialBreakdown(float(grad), float(fourth), float(attraction), float(repulsion), float(wall), m_r)


def exchange_double_integral(vs, occ, grid, h) -> float:
    """``sum_kl occ_k occ_l int int h(r_>) conj(v_k v_l-bar)(r) ... = int int h |gamma|^2`` (4 pi factors in)."""
    total = 0.0
    K = len(vs)
    for k in range(K):
        for l in range(K):
            p = FOUR_PI * grid.dr * np.conj(vs[k]) * vs[l]
            total += occ[k] * occ[l] * np.real(max_kernel_double_integral(p, p, h))
    return float(total)


def virial_rhs(psi: WaveFunction, profile: VirialProfile, Z: float, kappa_mode: str = "radial") -> VirialBreakdown:
    """Right-hand side of the localized virial identity for a radial Hartree state.

    ``kappa_mode`` only labels which kernel constant downstream bounds use
    ("radial" -> 1, "general" -> 1/2); the radial angular average is exact here.
    """
    if kappa_mode not in ("radial", "general"):
        raise ValueError(f"kappa_mode must be 'radial' or 'general', got {kappa_mode!r}")
    return virial_rhs_density([psi.v], [1.0], psi.grid, profile, Z)


def kappa(mode: str) -> float:
    return KAPPA_RADIAL if mode == "radial" else KAPPA_GENERAL


@dataclass
class ObservableRecord:
    t: float
    mass: float
    energy: float
    kinetic: float
    M_R: dict = field(default_factory=dict)
    K_R: dict = field(default_factory=dict)
    A_arctan: dict = field(default_factory=dict)
    A_log: dict = field(default_factory=dict)
    A_absorbed: dict = field(default_factory=dict)


def record_state(
    t: float,
    vs: list[np.ndarray],
    occupations,
    grid,
    scales,
    energy_value: float,
    absorbed: dict | None = None,
) -> ObservableRecord:
    """Evaluate every per-scale observable of a (possibly multi-orbital) radial state."""
    occ = np.asarray(occupations, dtype=float)
    vsq = sum(o * np.abs(v) ** 2 for o, v in zip(occ, vs))
    rec = ObservableRecord(
        t=float(t),
        mass=float(FOUR_PI * grid.dr * np.sum(vsq)),
        energy=float(energy_value),
        kinetic=float(sum(o * kinetic_form(v, grid) for o, v in zip(occ, vs))),
    )
    for R in scales:
        fa = VirialProfile("arctan", R)
        fg = VirialProfile("log", R)
        rec.M_R[R] = localized_mass_density(vsq, grid, R)
        rec.K_R[R] = float(sum(o * localized_kinetic_orbital(v, grid, R) for o, v in zip(occ, vs)))
        rec.A_arctan[R] = float(sum(o * virial_expectation_orbital(v, grid, fa) for o, v in zip(occ, vs)))
        rec.A_log[R] = float(sum(o * virial_expectation_orbital(v, grid, fg) for o, v in zip(occ, vs)))
        if absorbed is not None:
            rec.A_absorbed[R] = float(absorbed.get(R, 0.0))
    return rec


def csv_header(scales, with_absorbed: bool = False) -> list[str]:
    cols = ["t", "mass", "energy", "kinetic"]
    cols += [f"M_R@{R:g}" for R in scales]
    cols += [f"K_R@{R:g}" for R in scales]
    cols += [f"A_f@{R:g}" for R in scales]
    cols += [f"A_g@{R:g}" for R in scales]
    if with_absorbed:
        cols += [f"A_f_absorbed@{R:g}" for R in scales]
    return cols


def csv_row(rec: ObservableRecord, scales, with_absorbed: bool = False) -> list[float]:
    row = [rec.t, rec.mass, rec.energy, rec.kinetic]
    row += [rec.M_R[R] for R in scales]
    row += [rec.K_R[R] for R in scales]
    row += [rec.A_arctan[R] for R in scales]
    row += [rec.A_log[R] for R in scales]
    if with_absorbed:
        row += [rec.A_absorbed.get(R, 0.0) for R in scales]
    return row

