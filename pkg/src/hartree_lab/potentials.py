"""Coulomb attraction, radial Hartree potential and the s-wave exchange kernel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import FOUR_PI, RadialGrid, WaveFunction


@dataclass(frozen=True)
class PotentialField:
    grid: RadialGrid
    values: np.ndarray = field(repr=False)


def coulomb_attraction(Z: float, grid: RadialGrid) -> PotentialField:
    """``-Z / r`` at the nodes. Only the attractive case ``Z > 0`` is supported."""
    if not Z > 0:
        raise ValueError(f"nuclear charge must be positive, got Z={Z!r}")
    return PotentialField(grid, -Z / grid.r)


def shell_potential(pair_density: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Monopole potential of a (possibly complex) radial pair density.

    ``pair_density`` holds ``a_j = conj(v_k) v_l`` at the nodes and the result is

        W_i = 4 pi dr sum_j a_j / max(r_i, r_j)

    evaluated with an inner-charge and an outer-shell cumulative sum. The discrete
    kernel is symmetric, so the Hartree energy is an exact quadratic form.
    Leading axes are batched; the radial axis is the last one.
    """
    r = grid.r
    q = FOUR_PI * grid.dr * np.asarray(pair_density)
    inner = np.cumsum(q, axis=-1)
    outer = np.flip(np.cumsum(np.flip(q / r, axis=-1), axis=-1), axis=-1)
    out = inner / r
    out[..., :-1] += outer[..., 1:]
    return out


def hartree_potential(psi: WaveFunction) -> PotentialField:
    """``W_u = |u|^2 * |x|^{-1}`` via Newton's shell theorem; zero density beyond r_max."""
    return PotentialField(psi.grid, shell_potential(np.abs(psi.v) ** 2, psi.grid))


def exchange_kernel_l0(r, s):
    """l = 0 multipole of ``1/|x - y|``: ``1 / max(r, s)``."""
    return 1.0 / np.maximum(r, s)


def max_kernel_double_integral(a: np.ndarray, b: np.ndarray, h_of_max: np.ndarray) -> complex:
    """``sum_ij h(max(r_i, r_j)) a_i conj(b_j)`` in O(n).

    Splits into ``i > j``, ``i < j`` and the diagonal; ``h_of_max`` is ``h`` at the nodes.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    cb = np.concatenate(([0.0], np.cumsum(np.conj(b))[:-1]))
    ca = np.concatenate(([0.0], np.cumsum(a)[:-1]))
    return np.sum(h_of_max * (a * cb + np.conj(b) * ca + a * np.conj(b)))
