"""Virial profiles, two-point kernels and their brute-force lower-bound scans.

Three radial profiles are provided, each with closed-form derivatives up to
order four:

* ``arctan``: ``f(r) = r - arctan r``, scaled as ``R^3 f(r/R)``;
* ``log``: ``g(r) = r - log(1 + r)``, scaled as ``R^2 g(r/R)``;
* ``cubic``: ``r^3 / 3`` (scale invariant).

The two-point kernel of a profile is

    k(x, y) = (f'(|x|) w_x - f'(|y|) w_y) . (x - y) / |x - y|^3

which in the variables ``r, s, theta = w_x . w_y`` reads
``(r f'(r) + s f'(s) - theta (s f'(r) + r f'(s))) / (r^2 + s^2 - 2 r s theta)^{3/2}``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

KINDS = ("arctan", "log", "cubic")
SCALE_EXPONENT = {"arctan": 3, "log": 2, "cubic": 3}
CORNER_EPS = 1e-6


def _arctan(x, k):
    q = 1.0 + x * x
    if k == 0:
        return x - np.arctan(x)
    if k == 1:
        return x * x / q
    if k == 2:
        return 2.0 * x / q**2
    if k == 3:
        return (2.0 - 6.0 * x * x) / q**3
    return -24.0 * x * (1.0 - x * x) / q**4


def _log(x, k):
    q = 1.0 + x
    if k == 0:
        return x - np.log1p(x)
    if k == 1:
        return x / q
    if k == 2:
        return 1.0 / q**2
    if k == 3:
        return -2.0 / q**3
    return 6.0 / q**4


def _cubic(x, k):
    x = np.asarray(x, dtype=float)
    if k == 0:
        return x**3 / 3.0
    if k == 1:
        return x * x
    if k == 2:
        return 2.0 * x
    if k == 3:
        return np.full_like(x, 2.0)
    return np.zeros_like(x)


_UNSCALED = {"arctan": _arctan, "log": _log, "cubic": _cubic}


@dataclass(frozen=True)
class VirialProfile:
    """Radial virial function ``f_R(r) = R^p f(r / R)`` (p = 3, or 2 for ``log``)."""

    kind: str
    R: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {KINDS}")
        if not self.R > 0:
            raise ValueError(f"scale R must be positive, got {self.R!r}")

    @property
    def exponent(self) -> int:
        return SCALE_EXPONENT[self.kind]

    def __call__(self, r, order: int = 0):
        return profile_eval(self, r, order)

    def fprime(self, r):
        return profile_eval(self, r, 1)

    def sup_fprime(self) -> float:
        """``sup_r f_R'``: R^2 for arctan, R for log; the cubic profile is unbounded."""
        if self.kind == "cubic":
            return np.inf
        return self.R ** (self.exponent - 1)


def profile_eval(p: VirialProfile, r, order: int = 0):
    """Order-k derivative of the scaled profile, ``R^{p-k} f^{(k)}(r/R)``."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"derivative order must be 0..4, got {order!r}")
    x = np.asarray(r, dtype=float) / p.R
    out = p.R ** (p.exponent - order) * _UNSCALED[p.kind](x, order)
    return out if np.ndim(out) else float(out)


def localization_weight(R: float, r):
    """``h_R(r) = f_R'(r) / r^2 = 1 / (1 + r^2 / R^2)`` for the arctan profile."""
    r = np.asarray(r, dtype=float)
    return 1.0 / (1.0 + (r / R) ** 2)


class KernelSingularity(ValueError):
    """Raised when a kernel is evaluated at coincident points."""


def kernel_cubic(u, theta):
    """Reduced cubic kernel ``(1 + u^3 - (u + u^2) theta) / (1 + u^2 - 2 u theta)^{3/2}``."""
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    den = 1.0 + u * u - 2.0 * u * theta
    if np.any(den <= 0.0):
        raise KernelSingularity("cubic kernel is singular at (u, theta) = (1, 1)")
    out = (1.0 + u**3 - (u + u * u) * theta) / den**1.5
    return out if np.ndim(out) else float(out)


def kernel_general(fprime: Callable, r, s, theta):
    """Two-point kernel of a radial profile with derivative ``fprime``."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    fr = fprime(r)
    fs = fprime(s)
    den = r * r + s * s - 2.0 * r * s * theta
    if np.any(den <= 0.0):
        raise KernelSingularity("kernel is singular at coincident points")
    out = (r * fr + s * fs - theta * (s * fr + r * fs)) / den**1.5
    return out if np.ndim(out) else float(out)


@dataclass
class KernelReport:
    min_value: float
    argmin_u: float
    argmin_theta: float
    n_u: int
    n_theta: int
    samples: int
    claimed_lower_bound: float
    max_violation: float
    argmin_extra: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _scan(func, u_values, theta_values):
    uu, tt = np.meshgrid(u_values, theta_values, indexing="ij")
    keep = (1.0 - uu) ** 2 + (1.0 - tt) ** 2 >= CORNER_EPS**2
    vals = np.full(uu.shape, np.inf)
    vals[keep] = func(uu[keep], tt[keep])
    idx = np.unravel_index(np.argmin(vals), vals.shape)
    return vals[idx], uu[idx], tt[idx], int(keep.sum())


def min_kernel_bruteforce(
    kernel: Callable,
    n_u: int = 2000,
    n_theta: int = 2000,
    lower_bound: float = 0.0,
    refine_rounds: int = 3,
) -> KernelReport:
    """Minimize ``kernel(u, theta)`` over ``[0, 1] x [-1, 1]``.

    Uniform scan followed by ``refine_rounds`` rescans of the 2 x 2 cell block
    around the current best point. The corner (1, 1) is excluded by ``CORNER_EPS``.
    """
    if n_u < 1000 or n_theta < 1000:
        raise ValueError("brute-force scan needs at least 1000 steps per axis")
    us = np.linspace(0.0, 1.0, n_u)
    ts = np.linspace(-1.0, 1.0, n_theta)
    best, bu, bt, count = _scan(kernel, us, ts)
    hu, ht = us[1] - us[0], ts[1] - ts[0]
    for _ in range(refine_rounds):
        us_f = np.clip(np.linspace(bu - hu, bu + hu, 41), 0.0, 1.0)
        ts_f = np.clip(np.linspace(bt - ht, bt + ht, 41), -1.0, 1.0)
        val, u_f, t_f, extra = _scan(kernel, us_f, ts_f)
        count += extra
        if val < best:
            best, bu, bt = val, u_f, t_f
        hu, ht = hu / 20.0, ht / 20.0
    best = float(kernel(bu, bt))
    return KernelReport(
        min_value=best,
        argmin_u=float(bu),
        argmin_theta=float(bt),
        n_u=n_u,
        n_theta=n_theta,
        samples=count,
        claimed_lower_bound=lower_bound,
        max_violation=float(max(lower_bound - best, 0.0)),
    )


def arctan_ratio_kernel(r, s, theta):
    """Kernel of the unscaled arctan profile divided by ``1/2 h(r) h(s)``, h = f'/r^2."""
    p = VirialProfile("arctan", 1.0)
    k = kernel_general(p.fprime, r, s, theta)
    return k / (0.5 * localization_weight(1.0, r) * localization_weight(1.0, s))


def min_arctan_ratio(
    n_u: int = 1000,
    n_theta: int = 1000,
    r_outer: np.ndarray | None = None,
) -> KernelReport:
    """Scan the arctan ratio kernel over (r_>, u, theta); the claimed bound is 1.

    The ratio is not scale invariant, so the scan also runs over the larger
    radius ``r_> = max(r, s)`` on a log grid.
    """
    if r_outer is None:
        r_outer = np.geomspace(1e-3, 1e3, 61)
    best = np.inf
    arg = (np.nan, np.nan, np.nan)
    total = 0
    for ro in r_outer:
        rep = min_kernel_bruteforce(
            lambda u, t: arctan_ratio_kernel(ro, u * ro, t), n_u, n_theta, lower_bound=1.0
        )
        total += rep.samples
        if rep.min_value < best:
            best = rep.min_value
            arg = (rep.argmin_u, rep.argmin_theta, float(ro))
    return KernelReport(
        min_value=float(best),
        argmin_u=arg[0],
        argmin_theta=arg[1],
        n_u=n_u,
        n_theta=n_theta,
        samples=total,
        claimed_lower_bound=1.0,
        max_violation=float(max(1.0 - best, 0.0)),
        argmin_extra={"r_outer": arg[2]},
    )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def angular_average(fprime: Callable, r: float, s: float) -> float:
    """``(1/2) int_{-1}^{1} kernel_general(fprime, r, s, theta) d theta`` by Gauss-Legendre.

    The integrand peaks like ``1/|r - s|`` at theta = 1, so the rule is applied in
    the variable ``tau = log|x - y|`` where it is smooth:
    ``theta = (r^2 + s^2 - e^{2 tau}) / (2 r s)``, ``d theta = -e^{2 tau} / (r s) d tau``.
    """
    r = float(r)
    s = float(s)
    if r == s:
        raise ValueError("angular quadrature needs r != s; use angular_average_closed")
    lo, hi = np.log(abs(r - s)), np.log(r + s)
    tau = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * _GL_WEIGHTS
    rho2 = np.exp(2.0 * tau)
    theta = np.clip((r * r + s * s - rho2) / (2.0 * r * s), -1.0, 1.0)
    jac = rho2 / (r * s)
    return float(0.5 * np.sum(w * jac * kernel_general(fprime, r, s, theta)))


def angular_average_closed(fprime: Callable, r, s):
    """Closed form ``f'(r_>) / r_>^2`` of the angular average."""
    ro = np.maximum(r, s)
    return fprime(ro) / ro**2


@dataclass
class DominationReport:
    kind: str
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "checks": self.checks, "pass": self.passed}


def fourth_derivative_domination(profile: VirialProfile, r: np.ndarray | None = None) -> DominationReport:
    """Check the derivative bounds used to close the localized virial estimates.

    arctan: ``f''''(r) (1 + r^2) <= 3``; also reports the observed supremum.
    log: ``g''''(r) (1 + r^2) <= 6`` and ``-g'''(r) (1 + r^2) <= 2``.
    Unscaled profiles are used; the bounds are scale covariant.
    """
    if r is None:
        r = np.concatenate((np.geomspace(1e-8, 1e-2, 2000), np.linspace(1e-2, 1e3, 200000)))
    q = 1.0 + r * r
    base = VirialProfile(profile.kind, 1.0)
    checks = {}
    if profile.kind == "arctan":
        val = base(r, 4) * q
        checks["f4_times_1pr2_le_3"] = {"sup": float(val.max()), "bound": 3.0, "pass": bool(val.max() <= 3.0),
                                        "argsup": float(r[np.argmax(val)])}
    elif profile.kind == "log":
        v4 = base(r, 4) * q
        v3 = -base(r, 3) * q
        checks["g4_times_1pr2_le_6"] = {"sup": float(v4.max()), "bound": 6.0, "pass": bool(v4.max() <= 6.0),
                                        "argsup": float(r[np.argmax(v4)])}
        checks["minus_g3_times_1pr2_le_2"] = {"sup": float(v3.max()), "bound": 2.0, "pass": bool(v3.max() <= 2.0),
                                              "argsup": float(r[np.argmax(v3)])}
    else:
        raise ValueError("fourth-derivative domination is defined for the arctan and log profiles")
    return DominationReport(profile.kind, checks)
