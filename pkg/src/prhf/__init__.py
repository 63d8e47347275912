"""Pseudorelativistic Hartree-Fock spectral solver and regularity lab."""

from .errors import ConvergenceError, PreconditionError, RankError, ResolutionError
from .grid import Field, Grid3, Space, forward_dft, inverse_dft, read_snapshot, sample, write_snapshot
from .state import OrbitalSet, Physics

__all__ = [
    "ConvergenceError",
    "PreconditionError",
    "RankError",
    "ResolutionError",
    "Field",
    "Grid3",
    "Space",
    "forward_dft",
    "inverse_dft",
    "sample",
    "read_snapshot",
    "write_snapshot",
    "OrbitalSet",
    "Physics",
]

__version__ = "0.1.0"
