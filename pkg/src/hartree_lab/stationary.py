"""Mass-constrained ground states of ``-Delta u - Z/|x| u + W_u u = lambda u``.

The solver is a damped imaginary-time iteration with implicit Euler steps:

    (1 + tau (-d^2/dr^2 + V)) v_new = v,   V = -Z/r + W_mix,

followed by renormalization to mass ``N`` and the density mixing
``W_mix <- alpha W[v_new] + (1 - alpha) W_mix``. A step that raises the energy is
rejected and retried with ``tau / 2`` (floor ``TAU_FLOOR``).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .dynamics import hartree_energy_v, outer_shell_fraction
from .grid import FOUR_PI, RadialGrid, WaveFunction, kinetic_form, second_diff
from .observables import virial_rhs
from .potentials import coulomb_attraction, shell_potential
from .profiles import VirialProfile

log = logging.getLogger(__name__)

TAU_START = 0.1
TAU_FLOOR = 1e-4
ENERGY_SLACK = 1e-10
OUTER_SHELL_LIMIT = 1e-6
EXTENT_QUANTILE = 1.0 - 1e-6


@dataclass
class StationaryResult:
    psi: WaveFunction
    lam: float
    residual: float
    iterations: int
    converged: bool
    Z: float
    N: float
    energy: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "Z": self.Z,
            "N": self.N,
            "lambda": self.lam,
            "energy": self.energy,
            "residual": self.residual,
            "converged": bool(self.converged),
            "iterations": self.iterations,
        }


def _apply_h(v: np.ndarray, grid: RadialGrid, V: np.ndarray) -> np.ndarray:
    return -second_diff(v, grid) + V * v


def residual(psi: WaveFunction, lam: float, Z: float) -> float:
    """Relative defect ``||H_u u - lambda u|| / ||u||`` with ``H_u = -Delta - Z/r + W_u``."""
    grid = psi.grid
    v = psi.v
    V = coulomb_attraction(Z, grid).values + shell_potential(np.abs(v) ** 2, grid)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("residual of the zero state is undefined")
    return float(np.linalg.norm(_apply_h(v, grid, V) - lam * v) / norm)


def rayleigh_multiplier(psi: WaveFunction, Z: float) -> float:
    """``lambda = <u, H_u u> / N``."""
    grid = psi.grid
    v = psi.v
    V = coulomb_attraction(Z, grid).values + shell_potential(np.abs(v) ** 2, grid)
    return float(np.real(np.vdot(v, _apply_h(v, grid, V))) / np.vdot(v, v).real)


def _implicit_step(v, grid, V, tau):
    n = grid.n
    a = tau / grid.dr**2
    ab = np.empty((3, n))
    ab[0, 1:] = -a
    ab[0, 0] = 0.0
    ab[1] = 1.0 + 2.0 * a + tau * V
    ab[2, :-1] = -a
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, v)


def _normalize(v, grid, N):
    return v * np.sqrt(N / (FOUR_PI * grid.dr * np.sum(v * v)))


def ground_state(
    Z: float,
    N: float,
    grid: RadialGrid,
    tol: float = 1e-7,
    max_iter: int = 20000,
    alpha: float = 0.5,
    tau: float = TAU_START,
    initial: WaveFunction | None = None,
) -> StationaryResult:
    """Imaginary-time ground state with mass ``N``.

    ``converged`` requires the residual below ``tol`` and less than
    ``OUTER_SHELL_LIMIT`` of the mass in the outer 10% of the box: on a finite box
    a lowest state always exists, and one pressed against the wall is not a bound
    state of the whole-space problem.
    """
    if not Z > 0:
        raise ValueError(f"Z must be positive, got {Z!r}")
    if not N > 0:
        raise ValueError(f"N must be positive, got {N!r}")
    if not 0 < alpha <= 1:
        raise ValueError("mixing factor must lie in (0, 1]")
    r = grid.r
    v_ext = coulomb_attraction(Z, grid).values
    if initial is None:
        v = r * np.exp(-0.5 * Z * r)
    else:
        v = np.real(np.asarray(initial.v))
    v = _normalize(v, grid, N)
    W = shell_potential(v * v, grid)
    E = hartree_energy_v(v, grid, Z)
    history = []
    forced = 0
    rejected = 0
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            v_new = _normalize(_implicit_step(v, grid, v_ext + W, tau), grid, N)
            E_new = hartree_energy_v(v_new, grid, Z)
            if E_new <= E + ENERGY_SLACK * max(1.0, abs(E)):
                break
            if tau <= TAU_FLOOR:
                forced += 1
                break
            tau = max(0.5 * tau, TAU_FLOOR)
            rejected += 1
        v, E = v_new, E_new
        W = alpha * shell_potential(v * v, grid) + (1.0 - alpha) * W
        if it % 10 == 0 or it == max_iter:
            psi = WaveFunction(grid, v)
            lam = rayleigh_multiplier(psi, Z)
            res = residual(psi, lam, Z)
            history.append(res)
            if res < tol:
                break
    psi = WaveFunction(grid, v)
    lam = rayleigh_multiplier(psi, Z)
    res = residual(psi, lam, Z)
    outer = outer_shell_fraction(v, grid)
    converged = bool(res < tol and outer < OUTER_SHELL_LIMIT)
    if not converged:
        log.info("ground_state(Z=%g, N=%g): not converged (residual %.3e, outer shell %.3e)", Z, N, res, outer)
    diagnostics = {
        "residual_history": history,
        "outer_shell_fraction": outer,
        "forced_steps": forced,
        "rejected_steps": rejected,
        "final_tau": tau,
    }
    return StationaryResult(psi, lam, res, it, converged, float(Z), float(N), float(E), diagnostics)


def mass_extent(psi: WaveFunction, quantile: float = EXTENT_QUANTILE) -> float:
    """Smallest node radius enclosing ``quantile`` of the mass."""
    vsq = np.abs(psi.v) ** 2
    c = np.cumsum(vsq)
    j = int(np.searchsorted(c, quantile * c[-1]))
    return float(psi.grid.r[min(j, psi.grid.n - 1)])


@dataclass
class Certificate:
    R: float
    lam_ok: bool
    kinetic_ok: bool
    virial_ok: bool
    count_ok: bool
    virial_total: float
    tol: float
    kinetic: float

    @property
    def passed(self) -> bool:
        return self.lam_ok and self.kinetic_ok and self.virial_ok and self.count_ok

    def to_dict(self) -> dict:
        return {**self.__dict__, "pass": self.passed}


def stationarity_certificate(result: StationaryResult, tol_scale: float = 1.0) -> Certificate:
    """Post-checks for a converged ground state.

    ``lambda <= 1e-8``; ``||grad u||^2 <= 1.01 Z^2 N``; the arctan virial right-hand
    side at ``R = 4 * extent`` vanishes within ``1e-4 (N^2 + Z N)``; and
    ``N < 2Z + 3/R + tol``.
    """
    Z, N = result.Z, result.N
    tol = tol_scale * 1e-4 * (N * N + Z * N)
    R = 4.0 * mass_extent(result.psi)
    total = virial_rhs(result.psi, VirialProfile("arctan", R), Z).total
    kin = kinetic_form(result.psi.v, result.psi.grid)
    return Certificate(
        R=R,
        lam_ok=result.lam <= 1e-8,
        kinetic_ok=kin <= Z * Z * N * 1.01,
        virial_ok=abs(total) <= tol,
        count_ok=N < 2.0 * Z + 3.0 / R + tol,
        virial_total=float(total),
        tol=tol,
        kinetic=kin,
    )


def nonexistence_probe(Z: float, N_list, grid: RadialGrid, tol: float = 1e-7, max_iter: int = 20000, jobs: int = 1) -> dict:
    """Run ``ground_state`` for each ``N`` and summarize the transition window.

    Only the theorem side is judged: each converged case must have ``N < 2Z (1 + 1e-2)``.
    """
    N_list = [float(x) for x in N_list]
    if any(b < a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be ascending")

    def one(N):
        return ground_state(Z, N, grid, tol=tol, max_iter=max_iter)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, N_list))
    else:
        results = [one(N) for N in N_list]
    cases = []
    consistent = True
    for res in results:
        ok = (not res.converged) or res.N < 2.0 * Z * (1.0 + 1e-2)
        consistent &= ok
        cases.append({
            "N": res.N,
            "converged": res.converged,
            "lambda": res.lam,
            "residual": res.residual,
            "outer_shell_fraction": res.diagnostics["outer_shell_fraction"],
            "consistent": ok,
        })
    return {"Z": float(Z), "cases": cases, "consistent": bool(consistent)}
