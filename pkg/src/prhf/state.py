"""Physical parameters and the orbital state shared by the operator and SCF layers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, Grid3, Space

__all__ = ["Physics", "OrbitalSet", "STABILITY_THRESHOLD"]

STABILITY_THRESHOLD = 2.0 / math.pi


@dataclass(frozen=True)
class Physics:
    """Coupling ``alpha``, nuclear charge ``Z`` and electron count ``N``."""

    alpha: float
    Z: float
    N: int

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.Z > 0:
            raise ValueError(f"Z must be positive, got {self.Z}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not self.stable:
            warnings.warn(
                f"Z*alpha = {self.Z * self.alpha:.6g} >= 2/pi: the form sum T - V is not bounded below",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def coupling(self) -> float:
        return self.Z * self.alpha

    @property
    def stable(self) -> bool:
        return self.Z * self.alpha < STABILITY_THRESHOLD

    @property
    def flags(self) -> tuple[str, ...]:
        return () if self.stable else ("supercritical_coupling",)


@dataclass(frozen=True, eq=False)
class OrbitalSet:
    """N orbitals with their multipliers.

    ``epsilons`` are eigenvalues of the Hartree-Fock operator itself, whose
    kinetic part is ``sqrt(p^2 + alpha^-2) - alpha^-1``; divide by ``alpha``
    (see :attr:`epsilons_hartree`) for the usual atomic energy scale.
    """

    orbitals: tuple[Field, ...]
    epsilons: np.ndarray
    physics: Physics
    grid: Grid3 = field(default=None)

    def __post_init__(self) -> None:
        orbs = tuple(self.orbitals)
        grid = self.grid if self.grid is not None else (orbs[0].grid if orbs else None)
        if grid is None:
            raise ValueError("an empty OrbitalSet needs an explicit grid")
        for f in orbs:
            if f.grid != grid or f.space is not Space.REAL:
                raise ValueError("orbitals must be real-space fields on one grid")
        eps = np.asarray(self.epsilons, dtype=float).reshape(-1)
        if eps.size != len(orbs):
            raise ValueError(f"{len(orbs)} orbitals but {eps.size} multipliers")
        eps.setflags(write=False)
        object.__setattr__(self, "orbitals", orbs)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def from_stack(cls, grid: Grid3, stack: np.ndarray, epsilons, physics: Physics) -> "OrbitalSet":
        return cls(tuple(Field(grid, s) for s in stack), epsilons, physics, grid)

    def __len__(self) -> int:
        return len(self.orbitals)

    def stack(self) -> np.ndarray:
        if not self.orbitals:
            return np.zeros((0,) + self.grid.shape, dtype=np.complex128)
        return np.stack([f.values for f in self.orbitals])

    def gram(self) -> np.ndarray:
        s = self.stack().reshape(len(self), -1)
        return (s.conj() @ s.T) * self.grid.cell_volume

    def gram_deviation(self) -> float:
        if not self.orbitals:
            return 0.0
        return float(np.abs(self.gram() - np.eye(len(self))).max())

    @property
    def epsilons_hartree(self) -> np.ndarray:
        return self.epsilons / self.physics.alpha

    def with_epsilons(self, epsilons) -> "OrbitalSet":
        return OrbitalSet(self.orbitals, epsilons, self.physics, self.grid)
