"""Quadratic-form checks of double commutators ``-[p^2, [p^2, f]]`` on radial functions.

Radial functions on R^d are held through ``w = r^{(d-1)/2} u``, which maps
``L^2(r^{d-1} dr)`` unitarily onto ``L^2(dr)`` and turns the Laplacian into

    L = d^2/dr^2 - (d - 1)(d - 3) / (4 r^2).

Multiplication operators are unchanged by the substitution, so
``<phi, -[L, [L, F]] phi>`` is the radial double-commutator form. All checks
use test functions vanishing near both ends of the mesh, where the discrete
commutators are free of boundary rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import RadialGrid, build_grid

SUPPORTED_DIMS = range(1, 9)
FORM_TOL = 1e-6
SUPPORT_MARGIN = 0.1


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: sp.csr_matrix
    d: int
    grid: RadialGrid

    def form(self, phi: np.ndarray) -> float:
        return float(np.real(np.vdot(phi, self.matrix @ phi)) * self.grid.dr)


def radial_laplacian_d(grid: RadialGrid, d: int) -> DiscreteOperator:
    """Three-point ``w''`` (Dirichlet) minus the centrifugal diagonal ``(d-1)(d-3)/(4 r^2)``."""
    if int(d) != d or d not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be an integer in 1..8, got {d!r}")
    n = grid.n
    a = 1.0 / grid.dr**2
    c = (d - 1) * (d - 3) / 4.0
    main = np.full(n, -2.0 * a) - c / grid.r**2
    off = np.full(n - 1, a)
    L = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    return DiscreteOperator(L, int(d), grid)


def _diag(f) -> sp.csr_matrix:
    return sp.diags(np.asarray(f, dtype=float), 0, format="csr")


def commutator(A, B):
    return (A @ B - B @ A).tocsr()


def double_commutator(L: DiscreteOperator, f: np.ndarray) -> sp.csr_matrix:
    """``-[L, [L, F]]`` with ``F = diag(f)``."""
    F = _diag(f)
    return (-commutator(L.matrix, commutator(L.matrix, F))).tocsr()


def double_commutator_form(L: DiscreteOperator, f: np.ndarray, phi: np.ndarray) -> float:
    """``<phi, -[L, [L, F]] phi>`` (real by symmetry of the double commutator)."""
    return float(np.real(np.vdot(phi, double_commutator(L, f) @ phi)) * L.grid.dr)


def symmetry_defects(L: DiscreteOperator, f: np.ndarray) -> tuple[float, float]:
    """Max-entry defects of ``[L,F]`` antisymmetry and ``[L,[L,F]]`` symmetry, relative to the largest entry."""
    F = _diag(f)
    C1 = commutator(L.matrix, F)
    C2 = commutator(L.matrix, C1)
    d1 = abs(C1 + C1.T).max() / max(abs(C1).max(), 1e-300)
    d2 = abs(C2 - C2.T).max() / max(abs(C2).max(), 1e-300)
    return float(d1), float(d2)


def h2_norm(phi: np.ndarray, grid: RadialGrid) -> float:
    """Discrete ``||phi||^2 + ||phi'||^2 + ||phi''||^2`` (squared norm, Dirichlet ghosts)."""
    padded = np.concatenate(([0.0], phi, [0.0]))
    d1 = np.diff(padded) / grid.dr
    d2 = np.diff(padded, 2) / grid.dr**2
    return float(grid.dr * (np.sum(np.abs(phi) ** 2) + np.sum(np.abs(d1) ** 2) + np.sum(np.abs(d2) ** 2)))


def _bump(x):
    """``exp(-1/(1 - x^2))`` on (-1, 1), zero outside."""
    out = np.zeros_like(x, dtype=float)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@dataclass
class TestFunctionSuite:
    """Smooth arrays that vanish identically within ``margin * r_max`` of both ends."""

    __test__ = False  # not a pytest class

    grid: RadialGrid
    functions: np.ndarray
    labels: list = field(default_factory=list)
    margin: float = SUPPORT_MARGIN

    def __post_init__(self):
        self.functions = np.atleast_2d(np.asarray(self.functions, dtype=float))
        if self.functions.shape[1] != self.grid.n:
            raise ValueError("suite arrays must match the grid")
        r = self.grid.r
        outside = (r < self.margin * self.grid.r_max) | (r > (1 - self.margin) * self.grid.r_max)
        if np.any(self.functions[:, outside] != 0.0):
            raise ValueError("suite members must vanish within the boundary margins")

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    @classmethod
    def standard(cls, grid: RadialGrid, margin: float = SUPPORT_MARGIN) -> "TestFunctionSuite":
        """Twelve members: four bumps, four windowed Gaussians, four oscillating bumps."""
        L = grid.r_max
        lo, hi = margin * L, (1 - margin) * L
        r = grid.r
        # a hair inside the margins so that the nodes at the edges are exactly zero
        inner_lo, inner_hi = lo + 2 * grid.dr, hi - 2 * grid.dr
        window = _bump((2 * r - inner_lo - inner_hi) / (inner_hi - inner_lo))
        funcs, labels = [], []
        span = inner_hi - inner_lo
        for c, w in [(0.3, 0.2), (0.5, 0.45), (0.7, 0.25), (0.45, 0.1)]:
            center = inner_lo + c * span
            half = w * span
            funcs.append(_bump((r - center) / half))
            labels.append(f"bump(c={c},w={w})")
        for c, s in [(0.25, 0.05), (0.5, 0.1), (0.65, 0.2), (0.8, 0.07)]:
            center = inner_lo + c * span
            funcs.append(window * np.exp(-0.5 * ((r - center) / (s * span)) ** 2))
            labels.append(f"gauss(c={c},s={s})")
        for k in (2.0, 5.0, 9.0, 14.0):
            funcs.append(window * np.cos(k * 2 * np.pi * (r - inner_lo) / span))
            labels.append(f"osc(k={k})")
        F = np.array(funcs)
        F /= np.sqrt(grid.dr * np.sum(F**2, axis=1))[:, None]
        return cls(grid, F, labels, margin)


@dataclass
class FormReport:
    name: str
    params: dict
    worst_margin: float
    worst_label: str
    tol_unit: float
    passed: bool
    margins: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "worst_margin": self.worst_margin,
            "worst_label": self.worst_label,
            "tol_unit": self.tol_unit,
            "pass": bool(self.passed),
        }


def _margins(suite, lhs_of, rhs_of, tol):
    """Per-member ``lhs - rhs`` normalized by the member's H2 norm, judged against ``-tol``."""
    rows = []
    for label, phi in zip(suite.labels, suite):
        scale = h2_norm(phi, suite.grid)
        rows.append((label, (lhs_of(phi) - rhs_of(phi)) / scale))
    label, worst = min(rows, key=lambda x: x[1])
    return rows, label, worst, worst >= -tol


def convex_commutator_check(
    f: Callable, f4: Callable, suite: TestFunctionSuite, tol: float = FORM_TOL, name: str = ""
) -> FormReport:
    """``-[p^2, [p^2, f]] >= -f''''`` in d = 3 for convex non-decreasing ``f`` (``f4`` is ``f''''``)."""
    grid = suite.grid
    L = radial_laplacian_d(grid, 3)
    M = double_commutator(L, f(grid.r))
    neg_f4 = -f4(grid.r)
    rows, label, worst, ok = _margins(
        suite,
        lambda phi: float(np.dot(phi, M @ phi)) * grid.dr,
        lambda phi: float(np.dot(phi, neg_f4 * phi)) * grid.dr,
        tol,
    )
    return FormReport("convex_commutator", {"profile": name}, worst, label, tol, ok, rows)


def power_coefficient(beta: float, d: int) -> float:
    return beta * (beta + d - 4) * (d - beta)


def power_commutator_check(beta: float, d: int, suite: TestFunctionSuite, tol: float = FORM_TOL) -> FormReport:
    """``-[p^2, [p^2, r^beta]] >= beta (beta + d - 4)(d - beta) r^(beta - 4)`` on the suite."""
    if beta < max(1.0, 4.0 - d):
        raise ValueError(f"beta={beta} outside the range beta >= max(1, 4 - d) for d={d}")
    grid = suite.grid
    L = radial_laplacian_d(grid, d)
    M = double_commutator(L, grid.r**beta)
    pot = power_coefficient(beta, d) * grid.r ** (beta - 4.0)
    rows, label, worst, ok = _margins(
        suite,
        lambda phi: float(np.dot(phi, M @ phi)) * grid.dr,
        lambda phi: float(np.dot(phi, pot * phi)) * grid.dr,
        tol,
    )
    return FormReport("power_commutator", {"beta": beta, "d": d}, worst, label, tol, ok, rows)


def hardy_power_check(beta: float, d: int, suite: TestFunctionSuite, tol: float = FORM_TOL) -> FormReport:
    """``int r^(beta-2) |u'|^2 r^(d-1) dr >= (beta+d-4)^2/4 int r^(beta-4) |u|^2 r^(d-1) dr``.

    Suite members are read as ``u`` (not ``w``); the derivative lives on cell midpoints.
    """
    if not beta > 1:
        raise ValueError("the Hardy form is checked for beta > 1 only")
    grid = suite.grid
    mid = grid.midpoints()
    r = grid.r
    c = (beta + d - 4) ** 2 / 4.0
    wmid = mid ** (beta - 2 + d - 1)
    wnode = r ** (beta - 4 + d - 1)

    def lhs(u):
        du = np.diff(np.concatenate(([0.0], u, [0.0]))) / grid.dr
        return float(grid.dr * np.sum(wmid * du**2))

    def rhs(u):
        return float(c * grid.dr * np.sum(wnode * u**2))

    rows, label, worst, ok = _margins(suite, lhs, rhs, tol)
    return FormReport("hardy_power", {"beta": beta, "d": d}, worst, label, tol, ok, rows)


def eight_p2_discrepancy(n: int, r_max: float, phi_of_r: Callable) -> float:
    """Interior norm of ``(-[L, [L, R^2]] - 8(-L)) phi`` in d = 3 for a smooth ``phi``."""
    grid = build_grid(n, r_max)
    L = radial_laplacian_d(grid, 3)
    phi = phi_of_r(grid.r)
    diff = double_commutator(L, grid.r**2) @ phi - 8.0 * (-(L.matrix @ phi))
    interior = slice(2, n - 2)
    return float(np.sqrt(grid.dr * np.sum(diff[interior] ** 2)))


def eight_p2_convergence(r_max: float = 10.0, ns=(500, 1000, 2000), phi_of_r: Callable | None = None) -> dict:
    """Discrepancies on three refinements and their successive ratios (second order: about 4)."""
    if phi_of_r is None:
        def phi_of_r(r):
            return _bump((2 * r - r_max) / (0.8 * r_max)) * np.cos(3.0 * r)
    errs = [eight_p2_discrepancy(n, r_max, phi_of_r) for n in ns]
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    return {"n": list(ns), "discrepancy": errs, "ratios": ratios,
            "pass": bool(all(3.0 <= q <= 5.0 for q in ratios))}


BETA_D_MATRIX = ((1, 3), (2, 3), (3, 3), (2, 2), (4, 5), (4, 4))
HARDY_BETAS = (2, 3, 4)


def run_commutator_suite(n: int = 2000, r_max: float = 10.0, tol: float = FORM_TOL) -> dict:
    """Every commutator check on one grid; returns a JSON-ready summary."""
    from .profiles import VirialProfile

    grid = build_grid(n, r_max)
    suite = TestFunctionSuite.standard(grid)
    reports = [power_commutator_check(b, d, suite, tol) for b, d in BETA_D_MATRIX]
    for kind in ("arctan", "log", "cubic"):
        p = VirialProfile(kind, 1.0)
        reports.append(convex_commutator_check(lambda r, p=p: p(r, 0), lambda r, p=p: p(r, 4), suite, tol, kind))
    reports += [hardy_power_check(b, 3, suite, tol) for b in HARDY_BETAS]
    conv = eight_p2_convergence(r_max)
    cases = [rep.to_dict() for rep in reports]
    passed = all(rep.passed for rep in reports) and conv["pass"]
    return {
        "suite": "commutators",
        "cases": cases,
        "eight_p2": conv,
        "worst_margin": min(rep.worst_margin for rep in reports),
        "pass": bool(passed),
    }
