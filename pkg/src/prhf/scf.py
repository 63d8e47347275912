"""Self-consistent solution of the Hartree-Fock equations.

Two routes to the same fixed point are provided:

* ``eigen``: iterate "build h from the current orbitals, occupy its N lowest
  eigenvectors" (Aufbau filling), with damped orbital mixing.
* ``fixed_point``: Picard iteration on the inverted equation
  ``phi_i = E^-1 [V phi_i - a R phi_i + a K phi_i + (1/a + eps_i) phi_i]``,
  optionally accelerated by Anderson mixing.

All residuals and multipliers are in the units of the operator ``h`` itself.
Energies returned by :func:`hf_energy` are divided by ``alpha`` and carry
the usual atomic scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, PreconditionError, RankError
from .grid import Grid3
from .lobpcg import lobpcg
from .operators import HFOperator, periodic_gauge_shift
from .state import OrbitalSet, Physics

__all__ = [
    "OrbitalSet",
    "ScfConfig",
    "ScfReport",
    "initial_guess",
    "guess_block",
    "orthonormalize",
    "canonicalize",
    "lowest_eigenpairs",
    "eigen_residuals",
    "picard_proposal",
    "picard_step",
    "picard_residual",
    "solve",
    "hf_energy",
    "gauge_shift_estimate",
]

log = logging.getLogger(__name__)

DEGENERACY_GAP = 1e-10
RANK_COND = 1e12


@dataclass
class ScfConfig:
    mode: str = "eigen"
    mixing: float = 0.3
    max_iter: int = 200
    tol_residual: float = 1e-6
    tol_energy: float = 1e-8
    krylov_dim: int | None = None
    seed: int = 0
    anderson: bool = False
    anderson_depth: int = 8
    preconditioner: str = "kinetic"
    eig_max_iter: int = 300
    force: bool = False

    def validate(self, N: int) -> None:
        if self.mode not in ("eigen", "fixed_point"):
            raise PreconditionError(f"scf.mode must be 'eigen' or 'fixed_point', got {self.mode!r}")
        if not 0.0 < self.mixing <= 1.0:
            raise PreconditionError(f"scf.mixing must lie in (0, 1], got {self.mixing}")
        if not self.tol_residual > 0:
            raise PreconditionError("scf.tol_residual must be positive")
        if self.tol_energy < 0:
            raise PreconditionError("scf.tol_energy must be non-negative")
        if self.max_iter < 1:
            raise PreconditionError("scf.max_iter must be >= 1")
        if self.krylov_dim is not None and self.krylov_dim < N + 2:
            raise PreconditionError(f"scf.krylov_dim must be >= N + 2 = {N + 2}")
        if self.preconditioner not in ("kinetic", "inverse_energy", "none"):
            raise PreconditionError(f"unknown preconditioner {self.preconditioner!r}")

    def block_size(self, N: int) -> int:
        return self.krylov_dim if self.krylov_dim is not None else N + 2


@dataclass
class ScfReport:
    iterations: int = 0
    energy: float = 0.0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energy_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    flags: list[str] = field(default_factory=list)
    gauge_shift: float = 0.0
    mode: str = "eigen"

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0


# ---------------------------------------------------------------------------
# guesses and orthonormality


def _solid_harmonics(dx, dy, dz):
    return {
        0: [np.ones_like(dx * dy * dz)],
        1: [dx + 0 * dy * dz, dy + 0 * dx * dz, dz + 0 * dx * dy],
        2: [dx * dy + 0 * dz, dy * dz + 0 * dx, dx * dz + 0 * dy,
            dx**2 - dy**2 + 0 * dz, 2 * dz**2 - dx**2 - dy**2],
    }


def _gaussian_pool(grid: Grid3, z_eff: float) -> np.ndarray:
    dx, dy, dz = grid.coords()
    r2 = dx**2 + dy**2 + dz**2
    harmonics = _solid_harmonics(dx, dy, dz)
    a_max = 1.0 / grid.spacing**2
    scales = {0: [4.0, 1.2, 0.35, 0.1, 0.03, 0.01], 1: [1.0, 0.3, 0.09, 0.027], 2: [0.3, 0.09, 0.027]}
    funcs = []
    for l, factors in scales.items():
        for f in factors:
            a = min(f * z_eff**2, a_max)
            g = np.exp(-a * r2)
            for y in harmonics[l]:
                funcs.append(y * g)
    return np.stack(funcs).astype(np.complex128)


def guess_block(grid: Grid3, physics: Physics, count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``count`` lowest Ritz pairs of the screened one-body operator in a Gaussian pool.

    Returns ``(values, vectors)`` with vectors normalised in the continuum L^2 sense.
    """
    if count > grid.n**3:
        raise PreconditionError(f"cannot represent {count} orbitals on {grid.n}^3 points")
    z_eff = max(1.0, physics.Z - (physics.N - 1) / 2.0)
    screened = Physics(physics.alpha, z_eff, physics.N) if z_eff * physics.alpha < 2 / math.pi else physics
    pool = _gaussian_pool(grid, z_eff)
    rng = np.random.default_rng(seed)
    # weak smooth seeded perturbation breaks lattice degeneracies deterministically
    noise = rng.standard_normal(pool.shape[:1] + grid.shape)
    damp = np.exp(-0.5 * grid.p2 * (2.0 * grid.spacing) ** 2)
    noise = np.fft.ifftn(damp * np.fft.fftn(noise, axes=(1, 2, 3)), axes=(1, 2, 3)).real
    envelope = np.exp(-0.1 * z_eff * grid.radius)
    pool = pool / np.linalg.norm(pool.reshape(len(pool), -1), axis=1)[:, None, None, None]
    noise = noise * envelope
    noise /= np.linalg.norm(noise.reshape(len(noise), -1), axis=1)[:, None, None, None]
    pool = pool + 1e-4 * noise
    flat = pool.reshape(len(pool), -1)
    from .lobpcg import orthonormal_rows

    Q = orthonormal_rows(flat, drop=1e-10)
    if Q.shape[0] < count:
        raise PreconditionError(f"guess pool spans only {Q.shape[0]} states, {count} requested")
    op = HFOperator(grid, screened, np.zeros((0,) + grid.shape))
    HQ = op.h0(Q.reshape((-1,) + grid.shape)).reshape(Q.shape)
    H = Q.conj() @ HQ.T
    w, C = np.linalg.eigh(0.5 * (H + H.conj().T))
    vecs = (C[:, :count].T @ Q) / math.sqrt(grid.cell_volume)
    return w[:count], vecs.reshape((count,) + grid.shape)


def initial_guess(grid: Grid3, physics: Physics, seed: int = 0) -> OrbitalSet:
    """N lowest states of ``T - V`` with screened charge ``max(1, Z - (N-1)/2)`` in a Gaussian pool."""
    w, vecs = guess_block(grid, physics, physics.N, seed)
    return orthonormalize(OrbitalSet.from_stack(grid, vecs, w, physics))


def _gram(stack: np.ndarray, w: float) -> np.ndarray:
    flat = stack.reshape(len(stack), -1)
    return (flat.conj() @ flat.T) * w


def _first_dependent(S: np.ndarray) -> int:
    """Index of the first orbital that is (numerically) in the span of its predecessors."""
    scale = np.max(np.abs(np.diag(S))) or 1.0
    for k in range(1, len(S) + 1):
        sub = S[:k, :k]
        ev = np.linalg.eigvalsh(sub)
        if ev[0] <= scale / RANK_COND:
            return k - 1
    return len(S) - 1


def _lowdin(stack: np.ndarray, w: float) -> np.ndarray:
    if len(stack) == 0:
        return stack
    S = _gram(stack, w)
    S = 0.5 * (S + S.conj().T)
    ev, U = np.linalg.eigh(S)
    if ev[0] <= 0 or ev[-1] / ev[0] > RANK_COND:
        idx = _first_dependent(S)
        raise RankError(f"orbital {idx} is linearly dependent on its predecessors "
                        f"(Gram condition {ev[-1] / max(ev[0], 1e-300):.3g})", idx)
    s_inv_half = (U / np.sqrt(ev)) @ U.conj().T
    M = s_inv_half.T
    return np.tensordot(M, stack, axes=1)


def orthonormalize(orbitals: OrbitalSet) -> OrbitalSet:
    """Symmetric (Lowdin) orthonormalisation, the closest orthonormal set in the least-squares sense."""
    g = orbitals.grid
    stack = _lowdin(orbitals.stack(), g.cell_volume)
    return OrbitalSet.from_stack(g, stack, orbitals.epsilons, orbitals.physics) if len(stack) else orbitals


def canonicalize(state: OrbitalSet, op: HFOperator | None = None) -> tuple[OrbitalSet, HFOperator]:
    """Rotate within the occupied span so that ``h`` is diagonal there; multipliers sorted ascending."""
    if len(state) == 0:
        return state, op or HFOperator.from_state(state)
    op = op or HFOperator.from_state(state)
    phi = state.stack()
    hphi = op.apply(phi)
    w = state.grid.cell_volume
    H = (phi.reshape(len(phi), -1).conj() @ hphi.reshape(len(phi), -1).T) * w
    eps, C = np.linalg.eigh(0.5 * (H + H.conj().T))
    new = np.tensordot(C.T, phi, axes=1)
    return OrbitalSet.from_stack(state.grid, new, eps, state.physics), op


def eigen_residuals(state: OrbitalSet, op: HFOperator | None = None) -> np.ndarray:
    """``||h phi_i - eps_i phi_i||_2`` with ``h`` built from ``state`` itself."""
    if len(state) == 0:
        return np.zeros(0)
    op = op or HFOperator.from_state(state)
    phi = state.stack()
    r = op.apply(phi) - state.epsilons[:, None, None, None] * phi
    return np.sqrt(np.sum(np.abs(r) ** 2, axis=(1, 2, 3)) * state.grid.cell_volume)


# ---------------------------------------------------------------------------
# eigenproblem


def _preconditioner(op: HFOperator, kind: str):
    if kind == "none":
        return None
    if kind == "inverse_energy":
        shape = op.grid.shape

        def apply(block, shifts):
            b = block.reshape((-1,) + shape)
            return op.inverse_energy(b).reshape(block.shape)

        return apply
    tsym = op.kinetic_symbol
    shape = op.grid.shape
    alpha = op.physics.alpha
    from .grid import fftn, ifftn

    def apply(block, shifts):
        b = block.reshape((-1,) + shape)
        floor = 0.5 * alpha
        s = np.maximum(-np.asarray(shifts, dtype=float), floor)
        out = ifftn(fftn(b) / (tsym[None] + s[:, None, None, None]))
        return out.reshape(block.shape)

    return apply


def lowest_eigenpairs(orbitals_ctx: OrbitalSet, count: int, cfg: ScfConfig | None = None,
                      start: np.ndarray | None = None, tol: float | None = None,
                      op: HFOperator | None = None):
    """``count`` smallest eigenpairs of ``h`` assembled from ``orbitals_ctx``.

    Returns ``(values, vectors, residuals)``; vectors have shape
    ``(count, n, n, n)`` and unit continuum norm.  ``start`` seeds the block;
    it may hold more rows than ``count`` (the extras improve convergence).
    """
    cfg = cfg or ScfConfig()
    grid = orbitals_ctx.grid
    if count == 0:
        return np.zeros(0), np.zeros((0,) + grid.shape, dtype=np.complex128), np.zeros(0)
    op = op or HFOperator.from_state(orbitals_ctx)
    k = max(count + 2, cfg.block_size(count))
    if start is None or len(start) < k:
        _, extra = guess_block(grid, orbitals_ctx.physics, k, cfg.seed)
        start = extra if start is None else np.concatenate([start, extra[len(start):]])
    X0 = np.asarray(start[:k], dtype=np.complex128).reshape(k, -1)
    shape = grid.shape

    def apply(block):
        return op.apply(block.reshape((-1,) + shape)).reshape(block.shape)

    tol = cfg.tol_residual if tol is None else tol
    res = lobpcg(apply, X0, count, tol, cfg.eig_max_iter, _preconditioner(op, cfg.preconditioner))
    vecs = res.vectors.reshape((k,) + shape) / math.sqrt(grid.cell_volume)
    if not res.converged:
        raise ConvergenceError(
            f"lowest_eigenpairs: residuals {res.residuals[:count]} above {tol} after {res.iterations} iterations",
            residuals=res.residuals[:count], values=res.values[:count])
    return res.values, vecs, res.residuals


# ---------------------------------------------------------------------------
# fixed-point form


def picard_proposal(state: OrbitalSet, op: HFOperator | None = None) -> np.ndarray:
    """Right side of the inverted equation evaluated at ``state`` (not orthonormalised)."""
    op = op or HFOperator.from_state(state)
    a = state.physics.alpha
    phi = state.stack()
    eps = state.epsilons[:, None, None, None]
    rhs = op.nuclear * phi - a * op.direct(phi) + a * op.exchange(phi) + (1.0 / a + eps) * phi
    return op.inverse_energy(rhs)


def picard_residual(state: OrbitalSet, op: HFOperator | None = None) -> np.ndarray:
    """``||proposal_i - phi_i||_2`` per orbital."""
    if len(state) == 0:
        return np.zeros(0)
    d = picard_proposal(state, op) - state.stack()
    return np.sqrt(np.sum(np.abs(d) ** 2, axis=(1, 2, 3)) * state.grid.cell_volume)


def picard_step(state: OrbitalSet, physics: Physics | None = None, theta: float = 0.3,
                op: HFOperator | None = None) -> OrbitalSet:
    """One damped Picard update; multipliers are refreshed to Rayleigh quotients of the result."""
    if physics is not None and physics != state.physics:
        state = OrbitalSet(state.orbitals, state.epsilons, physics, state.grid)
    if theta == 0.0 or len(state) == 0:
        return state
    w = state.grid.cell_volume
    proposed = _lowdin(picard_proposal(state, op), w)
    mixed = _lowdin(theta * proposed + (1.0 - theta) * state.stack(), w)
    new = OrbitalSet.from_stack(state.grid, mixed, state.epsilons, state.physics)
    return _with_rayleigh(new)


def _with_rayleigh(state: OrbitalSet, op: HFOperator | None = None) -> OrbitalSet:
    op = op or HFOperator.from_state(state)
    phi = state.stack()
    hphi = op.apply(phi)
    eps = np.real(np.sum(np.conj(phi) * hphi, axis=(1, 2, 3))) * state.grid.cell_volume
    return state.with_epsilons(eps)


# ---------------------------------------------------------------------------
# energy


def hf_energy(state: OrbitalSet, op: HFOperator | None = None) -> float:
    """``sum_j (1/alpha)(u_j, h0 u_j) + 1/2 sum (u_i, R u_i) - 1/2 sum (u_i, K u_i)``."""
    if len(state) == 0:
        return 0.0
    op = op or HFOperator.from_state(state)
    phi = state.stack()
    w = state.grid.cell_volume
    one = np.real(np.sum(np.conj(phi) * op.h0(phi))) * w / state.physics.alpha
    two = np.real(np.sum(np.conj(phi) * op.interaction(phi))) * w
    return float(one + 0.5 * two)


def gauge_shift_estimate(state: OrbitalSet) -> float:
    """Leading-order energy offset introduced by the periodic Poisson gauge.

    Self-interaction contributions cancel exactly between the direct and the
    exchange terms, so only pairs ``i < j`` enter.
    """
    g = state.grid
    w = g.cell_volume
    x, y, z = g.coords()
    phi = state.stack()
    dens = np.abs(phi) ** 2
    r2 = x**2 + y**2 + z**2
    m2 = np.sum(dens * r2, axis=(1, 2, 3)) * w
    dip = np.stack([np.sum(dens * c, axis=(1, 2, 3)) * w for c in (x, y, z)], axis=1)
    shift = 0.0
    for i in range(len(phi)):
        for j in range(i + 1, len(phi)):
            pair = phi[i] * np.conj(phi[j])
            dij = np.array([np.sum(pair * c) * w for c in (x, y, z)])
            shift += periodic_gauge_shift(g, 1.0, m2[i], 1.0, m2[j], dip[i], dip[j])
            shift -= periodic_gauge_shift(g, 0.0, 0.0, 0.0, 0.0, dij, np.conj(dij))
    return float(shift)


# ---------------------------------------------------------------------------
# driver


def _align(target: np.ndarray, vecs: np.ndarray, w: float) -> np.ndarray:
    """Unitary recombination of ``vecs`` closest to ``target`` (orthogonal Procrustes)."""
    A = (target.reshape(len(target), -1).conj() @ vecs.reshape(len(vecs), -1).T) * w
    U, _, Wh = np.linalg.svd(A.T)
    M = Wh.conj().T @ U.conj().T
    return np.tensordot(M, vecs, axes=1)


def _phase_align(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    out = cur.copy()
    for i in range(min(len(prev), len(cur))):
        ov = np.vdot(prev[i], cur[i])
        if abs(ov) > 0:
            out[i] *= np.conj(ov) / abs(ov)
    return out


def _aufbau(values: np.ndarray, vecs: np.ndarray, N: int, previous: np.ndarray, w: float) -> np.ndarray:
    """Occupy the N lowest vectors; inside a degenerate cluster at the Fermi level pick the
    directions that overlap most with the previous occupied space."""
    if len(values) <= N or values[N] - values[N - 1] >= DEGENERACY_GAP:
        return vecs[:N]
    lvl = values[N - 1]
    cluster = np.nonzero(np.abs(values - lvl) < DEGENERACY_GAP)[0]
    first = int(cluster[0])
    need = N - first
    Vc = vecs[cluster]
    A = (previous.reshape(len(previous), -1).conj() @ Vc.reshape(len(Vc), -1).T) * w
    _, _, Wh = np.linalg.svd(A)
    chosen = np.tensordot(Wh[:need].conj(), Vc, axes=1)
    return np.concatenate([vecs[:first], chosen])


def _monotone_tail(history: list[float], n: int = 5) -> bool:
    tail = history[-n:]
    return all(b <= a for a, b in zip(tail, tail[1:]))


def solve(grid: Grid3, physics: Physics, cfg: ScfConfig | None = None,
          guess: OrbitalSet | None = None) -> tuple[OrbitalSet, ScfReport]:
    """Iterate to self-consistency; returns the final canonical state and a report."""
    cfg = cfg or ScfConfig()
    cfg.validate(physics.N)
    if not physics.stable and not cfg.force:
        raise PreconditionError(
            f"Z*alpha = {physics.coupling:.6g} >= 2/pi; refusing to solve without force")
    report = ScfReport(mode=cfg.mode)
    report.flags.extend(physics.flags)
    state = guess if guess is not None else initial_guess(grid, physics, cfg.seed)
    state, op = canonicalize(orthonormalize(state))
    w = grid.cell_volume
    N = physics.N
    energy = hf_energy(state, op)
    resid = eigen_residuals(state, op)
    extras = None
    anderson_x: list[np.ndarray] = []
    anderson_g: list[np.ndarray] = []

    for it in range(1, cfg.max_iter + 1):
        prev_phi = state.stack()
        if cfg.mode == "eigen":
            inner_tol = max(0.1 * cfg.tol_residual, min(1e-2 * physics.alpha, 0.1 * float(resid.max())))
            start = prev_phi if extras is None else np.concatenate([prev_phi, extras])
            try:
                vals, vecs, _ = lowest_eigenpairs(state, N, cfg, start=start, tol=inner_tol, op=op)
            except ConvergenceError as exc:
                report.flags.append("inner_eigensolver_stalled")
                log.warning("%s", exc)
                raise
            extras = vecs[N:]
            occ = _aufbau(vals, vecs, N, prev_phi, w)
            occ = _align(prev_phi, occ, w)
            mixed = cfg.mixing * occ + (1.0 - cfg.mixing) * prev_phi
            new_phi = _lowdin(mixed, w)
        else:
            proposed = _lowdin(picard_proposal(state, op), w)
            if cfg.anderson:
                increment = _residual_metric(op, state.epsilons)(proposed - prev_phi)
                new_phi = _anderson(prev_phi, increment, anderson_x, anderson_g, cfg)
                new_phi = _lowdin(new_phi, w)
            else:
                new_phi = _lowdin(cfg.mixing * proposed + (1.0 - cfg.mixing) * prev_phi, w)
        new_state = OrbitalSet.from_stack(grid, new_phi, state.epsilons, physics)
        new_state, op = canonicalize(new_state)
        new_state = OrbitalSet.from_stack(grid, _phase_align(prev_phi, new_state.stack()),
                                          new_state.epsilons, physics)
        new_energy = hf_energy(new_state, op)
        resid = eigen_residuals(new_state, op)
        d_energy = abs(new_energy - energy)
        state, energy = new_state, new_energy
        report.energy_history.append(energy)
        report.residual_history.append(float(resid.max()))
        report.iterations = it
        log.debug("scf %s it=%d E=%.12f res=%.3e", cfg.mode, it, energy, resid.max())
        if resid.max() <= cfg.tol_residual and d_energy <= cfg.tol_energy:
            report.converged = True
            break

    report.energy = energy
    report.residuals = resid
    report.gauge_shift = gauge_shift_estimate(state)
    if not report.converged:
        report.flags.append("not_converged")
    elif report.iterations >= 5 and not _monotone_tail(report.residual_history):
        report.flags.append("nonmonotone_residual_tail")
    if np.any(state.epsilons >= 0):
        report.flags.append("nonnegative_multiplier")
    return state, report


def _residual_metric(op: HFOperator, eps: np.ndarray):
    """Map a Picard increment ``-E^-1 (h - eps) phi`` to ``-(T + s)^-1 (h - eps) phi``.

    The map is invertible, so fixed points are unchanged; it only rescales
    the increment so that Anderson's least-squares problem is well conditioned.
    """
    from .grid import fftn, ifftn

    e_sym = 1.0 / op.inv_energy_symbol
    shifts = np.maximum(-np.asarray(eps, dtype=float), 0.5 * op.physics.alpha)
    ratio = e_sym[None] / (op.kinetic_symbol[None] + shifts[:, None, None, None])

    def apply(f: np.ndarray) -> np.ndarray:
        return ifftn(ratio * fftn(f))

    return apply


def _anderson(x: np.ndarray, f: np.ndarray, xs: list, fs: list, cfg: ScfConfig) -> np.ndarray:
    """Type-II Anderson update on the flattened orbital block from iterate ``x`` and increment ``f``."""
    xs.append(x.reshape(-1).copy())
    fs.append(f.reshape(-1).copy())
    if len(xs) > cfg.anderson_depth + 1:
        del xs[0], fs[0]
    beta = cfg.mixing
    if len(xs) == 1:
        return (xs[-1] + beta * fs[-1]).reshape(x.shape)
    F = np.stack(fs, axis=1)
    X = np.stack(xs, axis=1)
    dF = F[:, 1:] - F[:, :-1]
    dX = X[:, 1:] - X[:, :-1]
    gamma, *_ = np.linalg.lstsq(dF, fs[-1], rcond=1e-12)
    out = xs[-1] + beta * fs[-1] - (dX + beta * dF) @ gamma
    return out.reshape(x.shape)
