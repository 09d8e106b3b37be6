"""Parallel-quantum-walk circuits for uniform-structured Hamiltonians, with
desk-scale verification of every block encoding against dense references."""

from . import circuit, hamiltonians, lcu, models, refsim, simulate, walk

__all__ = ["circuit", "hamiltonians", "lcu", "models", "refsim", "simulate", "walk"]
__version__ = "0.1.0"
