"""Radial (s-wave) Hartree-Fock dynamics of a finite-rank density matrix.

``gamma = sum_k occ_k |u_k><u_k|`` with orthonormal radial orbitals. For s-waves
only the monopole of ``1/|x - y|`` survives in both the direct and the exchange
term, so

    (X_gamma w)(r) = sum_k occ_k u_k(r) * W[conj(u_k) w](r)

with ``W`` the shell-theorem potential of the pair density.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    BoundReport,
    CrankNicolson,
    PropagationError,
    PropagatorConfig,
    Trajectory,
    check_monotonicity,
    outer_shell_fraction,
    reflection_flags,
    localized_mass_bound_rhs,
    time_average,
)
from .grid import FOUR_PI, RadialGrid, WaveFunction, kinetic_form, second_diff
from .observables import exchange_double_integral, record_state, virial_rhs_density
from .potentials import coulomb_attraction, shell_potential
from .profiles import VirialProfile, localization_weight

log = logging.getLogger(__name__)

GRAM_TOL = 1e-8
TAYLOR_MAX_TERMS = 40
FIXED_POINT_SWEEPS = 2


def _gram(V: np.ndarray, grid: RadialGrid) -> np.ndarray:
    return FOUR_PI * grid.dr * (np.conj(V) @ V.T)


@dataclass(frozen=True)
class OrbitalSet:
    """Orthonormal radial orbitals (rows of ``V``, each ``v = r u``) with occupations in [0, 1]."""

    grid: RadialGrid
    V: np.ndarray
    occupations: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=complex)).copy()
        occ = np.asarray(self.occupations, dtype=float).copy()
        if V.shape[1] != self.grid.n:
            raise ValueError(f"orbitals need {self.grid.n} samples, got {V.shape[1]}")
        if occ.shape != (V.shape[0],):
            raise ValueError("one occupation per orbital required")
        if np.any(occ < 0) or np.any(occ > 1):
            raise ValueError("occupations must lie in [0, 1]")
        defect = np.max(np.abs(_gram(V, self.grid) - np.eye(V.shape[0])))
        if defect > GRAM_TOL:
            raise ValueError(f"orbitals are not orthonormal (Gram defect {defect:.2e})")
        V.setflags(write=False)
        occ.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "occupations", occ)

    @classmethod
    def from_functions(cls, grid: RadialGrid, us, occupations=None) -> "OrbitalSet":
        """Orthonormalize the given ``u`` profiles (callables or arrays) symmetrically."""
        V = np.array([grid.r * (u(grid.r) if callable(u) else np.asarray(u)) for u in us], dtype=complex)
        V = lowdin(V, grid)
        occ = np.ones(len(V)) if occupations is None else occupations
        return cls(grid, V, occ)

    @property
    def K(self) -> int:
        return self.V.shape[0]

    @property
    def trace(self) -> float:
        return float(self.occupations.sum())

    def orbital(self, k: int) -> WaveFunction:
        return WaveFunction(self.grid, self.V[k])

    def gram_defect(self) -> float:
        return float(np.max(np.abs(_gram(self.V, self.grid) - np.eye(self.K))))

    def density_v(self) -> np.ndarray:
        """``sum_k occ_k |v_k|^2`` (that is ``r^2 rho``)."""
        return self.occupations @ (np.abs(self.V) ** 2)


def lowdin(V: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Symmetric orthonormalization ``V <- S^{-1/2} V`` with the Gram matrix ``S``."""
    S = _gram(V, grid)
    w, U = np.linalg.eigh(S)
    if np.min(w) <= 0:
        raise PropagationError("orbitals became linearly dependent")
    S_inv_half = (U * w**-0.5) @ np.conj(U).T
    return S_inv_half.T @ V


def exchange_apply(V: np.ndarray, occ: np.ndarray, grid: RadialGrid, Wv: np.ndarray) -> np.ndarray:
    """``X_gamma`` applied to each row of ``Wv``."""
    pair = np.conj(V)[:, None, :] * Wv[None, :, :]  # (k, j, n)
    S = shell_potential(pair, grid)
    return np.einsum("k,kn,kjn->jn", occ, V, S)


def _mean_field(V, occ, grid, v_ext):
    """Return the local potential and the bound exchange operator for the state ``V``."""
    local = v_ext + shell_potential(occ @ (np.abs(V) ** 2), grid)

    def X(W):
        return exchange_apply(V, occ, grid, W)

    return local, X


def apply_fock(orbitals: OrbitalSet, j: int, Z: float) -> WaveFunction:
    """``H_gamma u_j = -Delta u_j - (Z/r) u_j + W_rho u_j - X_gamma u_j``."""
    grid = orbitals.grid
    local, X = _mean_field(orbitals.V, orbitals.occupations, grid, coulomb_attraction(Z, grid).values)
    v = orbitals.V[j]
    out = -second_diff(v, grid) + local * v - X(v[None, :])[0]
    return WaveFunction(grid, out)


def _exp_potential(W, h, local, X):
    """``exp(-i h (local - X)) W`` to third order in ``h``.

    The diagonal part is applied as an exact phase split around the exchange
    flow ``exp(i h X)``, which is summed as a Taylor series down to 1e-16.
    """
    phase = np.exp(-0.5j * h * local)
    W = phase * W
    out = W.copy()
    term = W
    scale = max(np.max(np.abs(W)), 1e-300)
    for m in range(1, TAYLOR_MAX_TERMS + 1):
        term = (1j * h / m) * X(term)
        out = out + term
        if np.max(np.abs(term)) < 1e-16 * scale:
            return phase * out
    raise PropagationError("exchange exponential did not converge; reduce dt")


def hf_energy(V, occ, grid, Z) -> float:
    """Kinetic + attraction + direct/2 - exchange/2."""
    dens = occ @ (np.abs(V) ** 2)
    kin = sum(o * kinetic_form(v, grid) for o, v in zip(occ, V))
    attr = -Z * FOUR_PI * grid.dr * np.sum(dens / grid.r)
    direct = FOUR_PI * grid.dr * np.sum(shell_potential(dens, grid) * dens)
    XV = exchange_apply(V, occ, grid, V)
    exch = FOUR_PI * grid.dr * np.real(np.sum(occ[:, None] * np.conj(V) * XV))
    return float(kin + attr + 0.5 * direct - 0.5 * exch)


def hf_step(V, occ, grid, v_ext, cn: CrankNicolson, dt: float) -> np.ndarray:
    """One symmetric step: mean-field half step, kinetic Crank-Nicolson, mean-field half step.

    The closing half step uses the mean field of its own end state, found by
    ``FIXED_POINT_SWEEPS`` fixed-point sweeps; orbitals are then Lowdin-orthonormalized.
    """
    h = 0.5 * dt
    local, X = _mean_field(V, occ, grid, v_ext)
    V = _exp_potential(V, h, local, X)
    V = np.array([cn.apply(v) for v in V])
    V_mid = V
    V_end = V_mid
    for _ in range(FIXED_POINT_SWEEPS):
        local, X = _mean_field(V_end, occ, grid, v_ext)
        V_end = _exp_potential(V_mid, h, local, X)
    return lowdin(V_end, grid)


def evolve_orbitals(orbitals: OrbitalSet, Z: float, config: PropagatorConfig) -> Trajectory:
    """Propagate ``i d_t gamma = [H_gamma, gamma]`` for s-wave orbitals.

    Returns a ``Trajectory`` whose ``final`` is an ``OrbitalSet``. Absorbing masks
    are not supported here: they break orthonormality, which the symmetric
    re-orthonormalization would silently undo.
    """
    if config.absorber is not None:
        raise ValueError("the Hartree-Fock propagator runs with the hard wall only")
    grid = orbitals.grid
    dt = config.dt
    occ = orbitals.occupations
    v_ext = coulomb_attraction(Z, grid).values
    cn = CrankNicolson(grid, dt)
    V = np.array(orbitals.V)
    scales = tuple(config.scales)
    N = orbitals.trace

    def energy_of(X):
        return hf_energy(X, occ, grid, Z)

    records = [record_state(0.0, list(V), occ, grid, scales, energy_of(V))]
    m0 = records[0].mass
    e0 = records[0].energy
    max_mass_drift = 0.0
    max_energy_drift = 0.0
    max_gram = orbitals.gram_defect()
    for step in range(1, config.steps + 1):
        V = hf_step(V, occ, grid, v_ext, cn, dt)
        if step % config.record_every == 0 or step == config.steps:
            if not np.all(np.isfinite(V)):
                raise PropagationError(f"non-finite values at step {step}")
            rec = record_state(step * dt, list(V), occ, grid, scales, energy_of(V))
            records.append(rec)
            max_mass_drift = max(max_mass_drift, abs(rec.mass - m0) / m0)
            max_energy_drift = max(max_energy_drift, abs(rec.energy - e0) / max(abs(e0), 1e-300))
            max_gram = max(max_gram, float(np.max(np.abs(_gram(V, grid) - np.eye(len(V))))))
    final = OrbitalSet(grid, V, occ)
    diagnostics = {
        "max_mass_drift": max_mass_drift,
        "max_energy_drift": max_energy_drift,
        "max_gram_defect": max_gram,
        "mode": config.mode,
        "dt": dt,
        "steps": config.steps,
        "N": N,
        "outer_shell_fraction": outer_shell_fraction(np.sqrt(occ @ (np.abs(V) ** 2)), grid),
    }
    return Trajectory(records, final, Z, config.mode, diagnostics)


def exchange_virial(orbitals: OrbitalSet, profile: VirialProfile) -> float:
    """``int int avg(r, s) |gamma(x, y)|^2`` with ``avg = f'(r_>) / r_>^2``."""
    h = profile(orbitals.grid.r, 1) / orbitals.grid.r**2
    return exchange_double_integral(list(orbitals.V), orbitals.occupations, orbitals.grid, h)


def hf_virial_rhs(orbitals: OrbitalSet, profile: VirialProfile, Z: float):
    """Virial right-hand side for ``gamma``: direct minus exchange in the repulsion term."""
    return virial_rhs_density(list(orbitals.V), orbitals.occupations, orbitals.grid, profile, Z, exchange=True)


def localized_traces(orbitals: OrbitalSet, R: float) -> tuple[float, float]:
    """``(Tr(h gamma), Tr(h gamma h gamma))`` for ``h = 1/(1 + r^2/R^2)``."""
    grid = orbitals.grid
    h = localization_weight(R, grid.r)
    occ = orbitals.occupations
    Hm = FOUR_PI * grid.dr * (np.conj(orbitals.V) * h) @ orbitals.V.T
    tr1 = float(np.real(np.sum(occ * np.diag(Hm))))
    tr2 = float(np.real(np.sum(np.outer(occ, occ) * np.abs(Hm) ** 2)))
    return tr1, tr2


def cauchy_schwarz_defect(orbitals: OrbitalSet, stride: int = 1) -> float:
    """``min_{r,s} rho(r) rho(s) - |gamma(r, s)|^2`` on the (strided) node grid, v-scaled."""
    V = orbitals.V[:, ::stride]
    occ = orbitals.occupations
    rho = occ @ (np.abs(V) ** 2)
    gam = (V.T * occ) @ np.conj(V)
    return float(np.min(np.outer(rho, rho) - np.abs(gam) ** 2))


def check_hf_trace_bound(traj: Trajectory, Z: float, R: float, T: float, scenario: str = "") -> BoundReport:
    """Time-averaged localized trace against ``2Z + 1 + 3/R + 2 sqrt(KN) R^2/(ZT)``.

    Also records whether ``Tr(h gamma h gamma) <= Tr(h gamma)`` holds at the final state.
    """
    t = traj.times
    lhs = time_average(t, traj.series("M_R", R), T)
    N = traj.records[0].mass
    K = float(traj.series("kinetic")[t <= T * (1 + 1e-12)].max())
    rhs = localized_mass_bound_rhs(Z, R, K, N, T, extra=1.0)
    extra = {"K": K, "N": N}
    if isinstance(traj.final, OrbitalSet):
        tr1, tr2 = localized_traces(traj.final, R)
        extra.update({"tr_h_gamma": tr1, "tr_h_gamma_h_gamma": tr2, "operator_inequality": tr2 <= tr1 + 1e-12})
    return BoundReport("hf_localized_trace_average", lhs, rhs, lhs <= rhs, scenario, R, T, traj.mode,
                       reflection_flags(traj, N), extra)


def check_hf_monotonicity(traj: Trajectory, Z: float, R: float, tol: float | None = None, scenario: str = "") -> BoundReport:
    """``dA/dt >= -(2Z + 1 + 3/R) M + M^2``: the exchange term costs at most ``M_R``."""
    rep = check_monotonicity(traj, Z, R, tol=tol, scenario=scenario, extra=1.0)
    rep.name = "hf_monotonicity"
    return rep
