"""Time propagation of the radial Hartree equation and trajectory bound checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .grid import FOUR_PI, RadialGrid, WaveFunction, kinetic_form
from .observables import (
    ObservableRecord,
    record_state,
    virial_expectation_orbital,
    virial_rhs_density,
)
from .potentials import coulomb_attraction, shell_potential
from .profiles import VirialProfile

log = logging.getLogger(__name__)

MASS_DRIFT_LIMIT = 1e-6
DRY_RUN_STEPS = 10
DRY_RUN_DRIFT = 1e-8


class PropagationError(RuntimeError):
    """Raised when a run becomes unstable (mass drift or non-finite values)."""


@dataclass(frozen=True)
class Absorber:
    """Smooth mask over ``[r_a, r_max]``: ``exp(-eta dt (1 - cos^2(pi/2 xi)))``, ``xi`` in [0, 1]."""

    eta: float
    r_a: float

    def mask(self, grid: RadialGrid, dt: float) -> np.ndarray:
        xi = np.clip((grid.r - self.r_a) / (grid.r_max - self.r_a), 0.0, 1.0)
        return np.exp(-self.eta * dt * (1.0 - np.cos(0.5 * np.pi * xi) ** 2))


@dataclass
class PropagatorConfig:
    dt: float
    steps: int
    record_every: int = 1
    absorber: Absorber | None = None
    scales: tuple = (5.0, 10.0, 20.0)
    mean_field: bool = True
    check_dry_run: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0 or int(self.steps) != self.steps:
            raise ValueError("steps must be a non-negative integer")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.absorber is not None and self.absorber.eta < 0:
            raise ValueError("absorber strength must be non-negative")

    @property
    def total_time(self) -> float:
        return self.dt * self.steps

    def validate_for(self, grid: RadialGrid):
        if self.absorber is not None and not (0.5 * grid.r_max <= self.absorber.r_a < grid.r_max):
            raise ValueError("absorber start radius must lie in [r_max/2, r_max)")

    @property
    def mode(self) -> str:
        return "absorber" if self.absorber is not None else "dirichlet"


@dataclass
class Trajectory:
    records: list[ObservableRecord]
    final: WaveFunction
    Z: float
    mode: str
    diagnostics: dict = field(default_factory=dict)
    A_series: dict | None = None
    states: list | None = None

    def series(self, name: str, R: float | None = None) -> np.ndarray:
        if R is None:
            return np.array([getattr(rec, name) for rec in self.records])
        return np.array([getattr(rec, name)[R] for rec in self.records])

    @property
    def times(self) -> np.ndarray:
        return self.series("t")


class CrankNicolson:
    """Cayley step ``(1 + i dt/2 T) v' = (1 - i dt/2 T) v`` for ``T = -d^2/dr^2`` (Dirichlet).

    ``extra`` adds a diagonal potential to T (used by the imaginary-time solver).
    The tridiagonal LU factorization is computed once and reused.
    """

    def __init__(self, grid: RadialGrid, dt: float):
        self.grid = grid
        self.dt = dt
        a = 1.0 / grid.dr**2
        n = grid.n
        c = 0.5j * dt
        self._off = c * (-a)
        self._diag = c * (2.0 * a)
        dl = np.full(n - 1, self._off, dtype=complex)
        d = np.full(n, 1.0 + self._diag, dtype=complex)
        du = np.full(n - 1, self._off, dtype=complex)
        self._lu = lapack.zgttrf(dl, d, du)[:5]

    def apply(self, v: np.ndarray) -> np.ndarray:
        rhs = (1.0 - self._diag) * v
        rhs[1:] -= self._off * v[:-1]
        rhs[:-1] -= self._off * v[1:]
        dl, d, du, du2, ipiv = self._lu
        x, info = lapack.zgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            raise PropagationError(f"tridiagonal solve failed (info={info})")
        return x


def hartree_energy_v(v: np.ndarray, grid: RadialGrid, Z: float, mean_field: bool = True) -> float:
    vsq = np.abs(v) ** 2
    e = kinetic_form(v, grid) - Z * FOUR_PI * grid.dr * np.sum(vsq / grid.r)
    if mean_field:
        e += 0.5 * FOUR_PI * grid.dr * np.sum(shell_potential(vsq, grid) * vsq)
    return float(e)


def _potential(v, v_ext, grid, mean_field):
    if not mean_field:
        return v_ext
    return v_ext + shell_potential(np.abs(v) ** 2, grid)


def strang_step(v, grid, v_ext, cn: CrankNicolson, dt: float, mean_field: bool = True):
    """One Strang step: half phase, Crank-Nicolson kinetic, half phase (W refreshed)."""
    v = np.exp(-0.5j * dt * _potential(v, v_ext, grid, mean_field)) * v
    v = cn.apply(v)
    return np.exp(-0.5j * dt * _potential(v, v_ext, grid, mean_field)) * v


def _mass_v(v, grid):
    return FOUR_PI * grid.dr * float(np.sum(np.abs(v) ** 2))


def propagate(psi0: WaveFunction, Z: float, config: PropagatorConfig, keep_states: bool = False) -> Trajectory:
    """Integrate ``i d_t v = -v'' + (-Z/r + W_u) v`` with Strang splitting.

    With the absorber off both substeps are unitary, so the mass is conserved to
    rounding; a drift above ``MASS_DRIFT_LIMIT`` aborts with ``PropagationError``.
    With the absorber on, the change of ``<A_f>`` caused by each mask application
    is accumulated per scale (reported as ``A_absorbed``).

    ``keep_states`` stores the state at every record and ``<A_{f_R}>`` after every
    step, which is what ``virial_identity_errors`` needs.
    """
    grid = psi0.grid
    config.validate_for(grid)
    dt = config.dt
    v_ext = coulomb_attraction(Z, grid).values
    cn = CrankNicolson(grid, dt)
    v = np.array(psi0.v, dtype=complex)
    m0 = _mass_v(v, grid)
    if m0 == 0.0:
        raise ValueError("initial state has zero mass")

    if config.check_dry_run and config.absorber is None:
        w = v.copy()
        for _ in range(DRY_RUN_STEPS):
            w = strang_step(w, grid, v_ext, cn, dt, config.mean_field)
        drift = abs(_mass_v(w, grid) - m0) / m0
        if not drift < DRY_RUN_DRIFT:
            raise PropagationError(f"dry run mass drift {drift:.3e} >= {DRY_RUN_DRIFT:g}; reduce dt")

    scales = tuple(config.scales)
    arctan_profiles = {R: VirialProfile("arctan", R) for R in scales}
    mask = config.absorber.mask(grid, dt) if config.absorber is not None else None
    absorbed = {R: 0.0 for R in scales} if mask is not None else None

    def energy_of(x):
        return hartree_energy_v(x, grid, Z, config.mean_field)

    records = [record_state(0.0, [v], [1.0], grid, scales, energy_of(v), absorbed)]
    states = [v.copy()] if keep_states else None
    A_steps = {R: [virial_expectation_orbital(v, grid, p)] for R, p in arctan_profiles.items()} if keep_states else None
    e0 = records[0].energy
    max_mass_drift = 0.0
    max_energy_drift = 0.0
    max_mass_increase = 0.0
    prev_mass = m0
    for step in range(1, config.steps + 1):
        v = strang_step(v, grid, v_ext, cn, dt, config.mean_field)
        if mask is not None:
            before = {R: virial_expectation_orbital(v, grid, p) for R, p in arctan_profiles.items()}
            v = mask * v
            for R, p in arctan_profiles.items():
                absorbed[R] += virial_expectation_orbital(v, grid, p) - before[R]
        if A_steps is not None:
            for R, p in arctan_profiles.items():
                A_steps[R].append(virial_expectation_orbital(v, grid, p))
        if step % config.record_every == 0 or step == config.steps:
            if not np.all(np.isfinite(v)):
                raise PropagationError(f"non-finite values at step {step}")
            rec = record_state(step * dt, [v], [1.0], grid, scales, energy_of(v), absorbed)
            records.append(rec)
            if states is not None:
                states.append(v.copy())
            if mask is None:
                drift = abs(rec.mass - m0) / m0
                max_mass_drift = max(max_mass_drift, drift)
                max_energy_drift = max(max_energy_drift, abs(rec.energy - e0) / max(abs(e0), 1e-300))
                if drift > MASS_DRIFT_LIMIT:
                    raise PropagationError(f"mass drift {drift:.3e} at t={step * dt:g}; reduce dt")
            else:
                max_mass_increase = max(max_mass_increase, (rec.mass - prev_mass) / m0)
                prev_mass = rec.mass
    final = WaveFunction(grid, v)
    diagnostics = {
        # drifts are meaningless once the mask removes mass
        "max_mass_drift": max_mass_drift if mask is None else None,
        "max_energy_drift": max_energy_drift if mask is None else None,
        "max_mass_increase": max_mass_increase if mask is not None else None,
        "mode": config.mode,
        "dt": dt,
        "steps": config.steps,
        "outer_shell_fraction": outer_shell_fraction(v, grid),
    }
    traj = Trajectory(records, final, Z, config.mode, diagnostics, states=states)
    traj.diagnostics["record_every"] = config.record_every
    if A_steps is not None:
        traj.A_series = {R: np.array(vals) for R, vals in A_steps.items()}
    return traj


def virial_identity_errors(traj: Trajectory, Z: float, R_list) -> dict:
    """Compare ``(A(t + dt) - A(t - dt)) / 2dt`` with the virial right-hand side at each interior record.

    The relative error divides by ``VirialBreakdown.magnitude``, the sum of the
    absolute values of the terms. Requires ``propagate(..., keep_states=True)``
    on a run without absorber.
    """
    if traj.states is None or traj.A_series is None:
        raise ValueError("trajectory must be propagated with keep_states=True")
    if traj.mode != "dirichlet":
        raise ValueError("the centered difference is only meaningful without the absorber")
    dt = traj.diagnostics["dt"]
    every = traj.diagnostics["record_every"]
    grid = traj.final.grid
    rows = []
    for R in R_list:
        A = traj.A_series[R]
        prof = VirialProfile("arctan", R)
        for i, v in enumerate(traj.states):
            step = i * every
            if step == 0 or step + 1 >= len(A):
                continue
            fd = (A[step + 1] - A[step - 1]) / (2.0 * dt)
            br = virial_rhs_density([v], [1.0], grid, prof, Z)
            rows.append((R, step * dt, fd, br.total, abs(fd - br.total) / br.magnitude))
    worst = max(rows, key=lambda x: x[-1])
    return {
        "max_rel_error": float(worst[-1]),
        "worst": {"R": worst[0], "t": worst[1], "finite_difference": worst[2], "rhs": worst[3]},
        "samples": len(rows),
        "rows": rows,
    }


def outer_shell_fraction(v: np.ndarray, grid: RadialGrid, shell: float = 0.1) -> float:
    """Fraction of the mass in the outer ``shell * r_max`` of the domain."""
    vsq = np.abs(v) ** 2
    total = vsq.sum()
    if total == 0:
        return 0.0
    return float(vsq[grid.r >= (1.0 - shell) * grid.r_max].sum() / total)


# ---------------------------------------------------------------------------
# time averages and bound reports


class CoverageError(ValueError):
    pass


def time_average(t: np.ndarray, values: np.ndarray, T: float) -> float:
    """Trapezoid average ``(1/T) int_0^T q dt`` using the samples with ``t <= T``."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if T <= 0:
        raise ValueError("averaging window must be positive")
    if t.size < 2 or t[0] > 1e-12 * max(T, 1.0) or t[-1] < T * (1 - 1e-12):
        raise CoverageError(f"records cover [{t[0] if t.size else np.nan}, {t[-1] if t.size else np.nan}], need [0, {T}]")
    keep = t <= T * (1 + 1e-12)
    tk, vk = t[keep], values[keep]
    if tk[-1] < T:
        vk = np.append(vk, np.interp(T, t, values))
        tk = np.append(tk, T)
    return float(np.trapezoid(vk, tk) / T)


def default_tolerance(N: float, Z: float, scale: float = 1.0) -> float:
    """Inequality-margin tolerance ``1e-4 (N^2 + Z N)``."""
    return scale * 1e-4 * (N * N + Z * N)


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    passed: bool
    scenario: str = ""
    R: float | None = None
    T: float | None = None
    mode: str = "dirichlet"
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "scenario": self.scenario,
            "R": self.R,
            "T": self.T,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": bool(self.passed),
            "mode": self.mode,
            "flags": list(self.flags),
        }
        if self.extra:
            d["extra"] = self.extra
        return d


def reflection_flags(traj, N: float) -> list[str]:
    """Flag Dirichlet runs whose outer 10% shell holds more than 1% of the mass."""
    frac = traj.diagnostics.get("outer_shell_fraction", 0.0) if traj.diagnostics else 0.0
    if traj.mode == "dirichlet" and frac * traj.records[-1].mass > 0.01 * N:
        return ["reflection"]
    return []


def localized_mass_bound_rhs(Z: float, R: float, K: float, N: float, T: float, kappa: float = 1.0, extra: float = 0.0) -> float:
    """``2Z/kappa + extra + 3/R + 2 sqrt(K N) R^2 / (Z T)``."""
    return 2.0 * Z / kappa + extra + 3.0 / R + 2.0 * np.sqrt(K * N) * R**2 / (Z * T)


def check_localized_mass_bound(traj: Trajectory, Z: float, R: float, T: float, scenario: str = "") -> BoundReport:
    """Time-averaged localized mass against ``2Z + 3/R + 2 sqrt(KN) R^2/(ZT)``."""
    t = traj.times
    lhs = time_average(t, traj.series("M_R", R), T)
    N = traj.records[0].mass
    K = float(traj.series("kinetic")[t <= T * (1 + 1e-12)].max())
    rhs = localized_mass_bound_rhs(Z, R, K, N, T)
    return BoundReport("localized_mass_average", lhs, rhs, lhs <= rhs, scenario, R, T, traj.mode,
                       reflection_flags(traj, N), {"K": K, "N": N})


def kinetic_sup_bound(Z: float, N: float, K0: float) -> float:
    """``Z^2 N + 2 K0 + N^3 sqrt(K0)`` with ``K0 = ||grad u_0||^2``."""
    return Z * Z * N + 2.0 * K0 + N**3 * np.sqrt(K0)


def kinetic_sup_bound_energy_form(Z: float, N: float, K0: float) -> float:
    """``Z^2 N + 2 K0 + N^{3/2} sqrt(K0)`` (energy-conservation argument, ``||u_0||^3 = N^{3/2}``)."""
    return Z * Z * N + 2.0 * K0 + N**1.5 * np.sqrt(K0)


def check_kinetic_bound(traj: Trajectory, Z: float, R: float, T: float, scenario: str = "") -> list[BoundReport]:
    """Time-averaged local kinetic energy bound and the uniform kinetic bound."""
    t = traj.times
    N = traj.records[0].mass
    K0 = traj.records[0].kinetic
    kin = traj.series("kinetic")
    in_window = t <= T * (1 + 1e-12)
    K = float(kin[in_window].max())
    flags = reflection_flags(traj, N)
    avg_KR = time_average(t, traj.series("K_R", R), T)
    avg_MR = time_average(t, traj.series("M_R", R), T)
    rhs = (Z * Z / 4.0 + 2.0 * Z / R + 3.0 * Z / R**2) * avg_MR + 2.0 * R * np.sqrt(K * N) / T
    local = BoundReport("local_kinetic_average", avg_KR, rhs, avg_KR <= rhs, scenario, R, T, traj.mode, flags,
                        {"avg_M_R": avg_MR, "K": K})
    bound = kinetic_sup_bound(Z, N, K0)
    sup = float(kin[in_window].max())
    uniform = BoundReport("kinetic_uniform_bound", sup, bound, sup <= bound, scenario, None, T, traj.mode, flags,
                          {"energy_argument_rhs": kinetic_sup_bound_energy_form(Z, N, K0)})
    return [local, uniform]


def check_monotonicity(
    traj: Trajectory, Z: float, R: float, tol: float | None = None, scenario: str = "", extra: float = 0.0
) -> BoundReport:
    """Worst margin of ``dA/dt >= -(2Z + extra + 3/R) M + M^2`` over consecutive record pairs.

    ``A`` is the arctan virial expectation; in absorber runs the change caused by the
    mask (``A_absorbed``) is removed so that only the Hamiltonian flow is tested.
    """
    t = traj.times
    A = traj.series("A_arctan", R)
    if traj.records[0].A_absorbed:
        A = A - traj.series("A_absorbed", R)
    M = traj.series("M_R", R)
    N = traj.records[0].mass
    if tol is None:
        tol = default_tolerance(N, Z)
    dA = np.diff(A) / np.diff(t)
    Mbar = 0.5 * (M[1:] + M[:-1])
    bound = -(2.0 * Z + extra + 3.0 / R) * Mbar + Mbar**2
    margins = dA - bound
    worst = int(np.argmin(margins))
    growth = bool(np.all(np.diff(A) > 0))
    return BoundReport("monotonicity", float(bound[worst]), float(dA[worst]), bool(margins[worst] >= -tol),
                       scenario, R, float(t[-1]), traj.mode, reflection_flags(traj, N),
                       {"worst_margin": float(margins[worst]), "tol": tol, "t_worst": float(t[worst]),
                        "A_strictly_increasing": growth})
