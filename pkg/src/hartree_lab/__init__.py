"""Radial time-dependent Hartree and Hartree-Fock atoms: dynamics, virial diagnostics, bound checks."""

__version__ = "0.1.0"
