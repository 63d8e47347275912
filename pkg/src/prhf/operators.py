"""Matrix-free application of the operators in the Hartree-Fock equations.

Every operator acts on real-space samples.  Kinetic terms are Fourier
multipliers; the direct and exchange terms go through a periodic Poisson
solve with the zero mode set to zero (uniform neutralising background).
That gauge shifts pair potentials by an additive constant; see
:func:`periodic_gauge_shift` for the leading-order estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid3, Space, fftn, ifftn
from .state import OrbitalSet, Physics

__all__ = [
    "Physics",
    "PairPotential",
    "energy_symbol",
    "kinetic_symbol",
    "inverse_radius",
    "poisson_solve",
    "apply_kinetic",
    "apply_energy",
    "apply_inverse_energy",
    "coulomb_attraction",
    "hartree_potential",
    "pair_potential",
    "apply_direct",
    "apply_exchange",
    "apply_hf",
    "HFOperator",
    "MADELUNG_SC",
    "periodic_gauge_shift",
]

# Madelung-type constant for a point charge in a simple cubic box with neutralising background
MADELUNG_SC = 2.837297479480620


def energy_symbol(grid: Grid3, alpha: float) -> np.ndarray:
    """``E(p) = sqrt(|p|^2 + alpha^-2)`` on the frequency lattice."""
    return np.sqrt(grid.p2 + alpha**-2)


def kinetic_symbol(grid: Grid3, alpha: float) -> np.ndarray:
    """``T(p) = E(p) - 1/alpha`` in the cancellation-free form ``p^2 / (E + 1/alpha)``."""
    return grid.p2 / (energy_symbol(grid, alpha) + 1.0 / alpha)


def inverse_radius(grid: Grid3) -> np.ndarray:
    """``1/|x|`` with the singular cell replaced by the ball-average ``3 / (2 r_cell)``.

    ``r_cell`` is the radius of the ball with the cell's volume, so the cell
    integral of ``1/|x|`` is preserved.
    """
    r = grid.radius
    h = grid.spacing
    r_cell = (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0) * h
    singular = r < 0.5 * h
    out = np.empty_like(r)
    out[~singular] = 1.0 / r[~singular]
    out[singular] = 1.5 / r_cell
    return out


def _multiplier(grid: Grid3, a: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    return ifftn(symbol * fftn(a))


def _coulomb_symbol(grid: Grid3) -> np.ndarray:
    p2 = grid.p2
    out = np.zeros_like(p2)
    nz = p2 > 0
    out[nz] = 4.0 * math.pi / p2[nz]
    return out


def poisson_solve(grid: Grid3, density: np.ndarray) -> np.ndarray:
    """Solve ``-Lap U = 4 pi rho`` spectrally (zero mode dropped); batched over leading axes."""
    return _multiplier(grid, np.asarray(density, dtype=np.complex128), _coulomb_symbol(grid))


def _apply_multiplier(f: Field, symbol: np.ndarray) -> Field:
    g = f.grid
    if f.space is Space.FOURIER:
        return Field(g, symbol * f.values, Space.FOURIER)
    return Field(g, _multiplier(g, f.values, symbol), Space.REAL)


def apply_kinetic(f: Field, physics: Physics) -> Field:
    """Apply ``T(p) = sqrt(p^2 + alpha^-2) - alpha^-1``; result keeps ``f``'s space."""
    return _apply_multiplier(f, kinetic_symbol(f.grid, physics.alpha))


def apply_energy(f: Field, physics: Physics) -> Field:
    return _apply_multiplier(f, energy_symbol(f.grid, physics.alpha))


def apply_inverse_energy(f: Field, physics: Physics) -> Field:
    """Apply ``E(p)^-1``, which is positive and bounded by ``alpha``."""
    return _apply_multiplier(f, 1.0 / energy_symbol(f.grid, physics.alpha))


def coulomb_attraction(grid: Grid3, physics: Physics) -> Field:
    """Nuclear potential ``Z alpha / |x|`` with the singular-cell rule of :func:`inverse_radius`."""
    return Field(grid, physics.Z * physics.alpha * inverse_radius(grid))


def hartree_potential(density: Field) -> Field:
    """Periodic Newtonian potential of a real density (zero-mean gauge)."""
    rho = density.to_real()
    scale = max(float(np.abs(rho.values).max()), np.finfo(float).tiny)
    if float(np.abs(rho.values.imag).max()) > 1e-10 * scale:
        raise ValueError("hartree_potential needs a real density")
    u = poisson_solve(rho.grid, rho.values.real)
    return Field(rho.grid, u.real)


@dataclass(frozen=True, eq=False)
class PairPotential:
    """``U_ab``: potential of the pair density ``phi_a * conj(phi_b)``."""

    a: int
    b: int
    field: Field

    def sup_norm(self) -> float:
        return float(np.abs(self.field.values).max())

    def poisson_residual(self, phi_a: Field, phi_b: Field) -> float:
        """Relative discrete residual of ``-Lap U = 4 pi phi_a conj(phi_b)``."""
        g = self.field.grid
        src = 4.0 * math.pi * phi_a.values * np.conj(phi_b.values)
        src = src - src.mean()  # zero mode is not represented by U
        lap = _multiplier(g, self.field.values, -g.p2)
        den = np.linalg.norm(src)
        return float(np.linalg.norm(-lap - src) / den) if den > 0 else float(np.linalg.norm(lap))


def pair_potential(a: Field, b: Field, indices: tuple[int, int] = (0, 0)) -> PairPotential:
    if a.grid != b.grid:
        raise ValueError("pair_potential: fields live on different grids")
    ra, rb = a.to_real(), b.to_real()
    u = poisson_solve(a.grid, ra.values * np.conj(rb.values))
    return PairPotential(indices[0], indices[1], Field(a.grid, u))


class HFOperator:
    """Hartree-Fock operator ``T - V + alpha R - alpha K`` frozen at a set of orbitals.

    Works on raw arrays of shape ``(..., n, n, n)`` and caches the symbols,
    the nuclear potential and the direct potential.
    """

    def __init__(self, grid: Grid3, physics: Physics, orbitals: np.ndarray):
        self.grid = grid
        self.physics = physics
        phi = np.asarray(orbitals, dtype=np.complex128).reshape((-1,) + grid.shape)
        self.orbitals = phi
        self.kinetic_symbol = kinetic_symbol(grid, physics.alpha)
        self.inv_energy_symbol = 1.0 / energy_symbol(grid, physics.alpha)
        self.nuclear = physics.Z * physics.alpha * inverse_radius(grid)
        if len(phi):
            self.direct_potential = poisson_solve(grid, np.sum(np.abs(phi) ** 2, axis=0)).real
        else:
            self.direct_potential = np.zeros(grid.shape)

    @classmethod
    def from_state(cls, state: OrbitalSet) -> "HFOperator":
        return cls(state.grid, state.physics, state.stack())

    def kinetic(self, u: np.ndarray) -> np.ndarray:
        return ifftn(self.kinetic_symbol * fftn(u))

    def inverse_energy(self, u: np.ndarray) -> np.ndarray:
        return ifftn(self.inv_energy_symbol * fftn(u))

    def h0(self, u: np.ndarray) -> np.ndarray:
        return self.kinetic(u) - self.nuclear * u

    def direct(self, u: np.ndarray) -> np.ndarray:
        return self.direct_potential * u

    def exchange(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.complex128)
        out = np.zeros_like(u)
        # sequential sum over orbitals keeps the reduction order fixed
        for phi in self.orbitals:
            out += poisson_solve(self.grid, u * np.conj(phi)) * phi
        return out

    def interaction(self, u: np.ndarray) -> np.ndarray:
        """``R u - K u``."""
        return self.direct(u) - self.exchange(u)

    def apply(self, u: np.ndarray) -> np.ndarray:
        a = self.physics.alpha
        return self.h0(u) + a * self.interaction(u)

    __call__ = apply

    def quadratic_form(self, u: np.ndarray, v: np.ndarray | None = None) -> complex:
        v = u if v is None else v
        return complex(np.vdot(u, self.apply(v)) * self.grid.cell_volume)


def _state_operator(orbitals: OrbitalSet, u: Field) -> HFOperator:
    if u.grid != orbitals.grid:
        raise ValueError("field and orbitals live on different grids")
    return HFOperator.from_state(orbitals)


def apply_direct(orbitals: OrbitalSet, u: Field) -> Field:
    """``R u`` with ``R = sum_l U_ll``."""
    op = _state_operator(orbitals, u)
    return Field(u.grid, op.direct(u.to_real().values))


def apply_exchange(orbitals: OrbitalSet, u: Field) -> Field:
    """``K u = sum_l U[u conj(phi_l)] phi_l`` (one Poisson solve per orbital)."""
    op = _state_operator(orbitals, u)
    return Field(u.grid, op.exchange(u.to_real().values))


def apply_hf(orbitals: OrbitalSet, u: Field, physics: Physics | None = None) -> Field:
    """``h u = T u - V u + alpha R u - alpha K u``."""
    if physics is not None and physics != orbitals.physics:
        orbitals = OrbitalSet(orbitals.orbitals, orbitals.epsilons, physics, orbitals.grid)
    op = _state_operator(orbitals, u)
    return Field(u.grid, op.apply(u.to_real().values))


def periodic_gauge_shift(grid: Grid3, charge_a: float, second_moment_a: float,
                         charge_b: float, second_moment_b: float,
                         dipole_a=(0.0, 0.0, 0.0), dipole_b=(0.0, 0.0, 0.0)) -> float:
    """Leading-order change of a Coulomb pair energy caused by the periodic gauge.

    For localized densities A and B centred near the origin the zero-mean
    periodic interaction differs from the free-space one by
    ``-xi Qa Qb / L + (2 pi / 3V)(Qa <r^2>_b + Qb <r^2>_a) - (4 pi / 3V) da.conj(db)``
    with ``xi`` the simple-cubic Madelung constant.  Second moments are
    unnormalised, ``<r^2> = integral |x|^2 rho``.
    """
    L = grid.box_length
    V = grid.volume
    da = np.asarray(dipole_a, dtype=complex)
    db = np.asarray(dipole_b, dtype=complex)
    shift = -MADELUNG_SC * charge_a * charge_b / L
    shift += 2.0 * math.pi / (3.0 * V) * (charge_a * second_moment_b + charge_b * second_moment_a)
    shift -= 4.0 * math.pi / (3.0 * V) * float(np.real(np.vdot(da, db)))
    return float(shift)
