"""Lower estimates of operator norms by random probing.

An operator norm cannot be computed on a grid, only bounded from below by
``max ||A f|| / ||f||`` over trial inputs.  A probe above a claimed upper
bound therefore falsifies either the bound or the implementation; a probe
below it is only consistent with it.

Trial inputs are sums of Gaussian bumps with random centres, widths and
signs.  They are defined in continuum coordinates, so the same seed gives
the same function on every grid and the estimates converge under refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import PreconditionError
from ..grid import Field, Grid3, fftn, ifftn, lp_norm
from .multiindex import MultiIndex

__all__ = [
    "GRID_SLACK",
    "ProbeResult",
    "admissible_r",
    "smoothing_bound",
    "smoothing_bound_r1",
    "support_distance",
    "random_bumps",
    "smoothing_norm_probe",
    "multiplier_norm_probe",
    "multiplier_advisory",
]

GRID_SLACK = 0.05
_N_BUMPS = 6
_ADMISSIBLE_TOL = 1e-12


@dataclass(frozen=True)
class ProbeResult:
    probe_norm: float
    paper_bound: float
    distance: float
    r: float

    @property
    def margin(self) -> float:
        return 1.0 - self.probe_norm / self.paper_bound

    @property
    def passed(self) -> bool:
        return self.probe_norm <= self.paper_bound * (1.0 + GRID_SLACK)

    def __iter__(self):
        # unpacks as (probe_norm, paper_bound)
        return iter((self.probe_norm, self.paper_bound))


def admissible_r(p: float, q: float) -> float:
    """The ``r`` with ``1/p + 1/q + 1/r = 2``; raises unless ``p, r >= 1`` and ``q > 1``."""
    if not (1.0 <= p < math.inf and 1.0 < q < math.inf):
        raise PreconditionError(f"need 1 <= p < inf and 1 < q < inf, got p={p}, q={q}")
    inv_r = 2.0 - 1.0 / p - 1.0 / q
    if inv_r <= 0.0 or inv_r > 1.0 + _ADMISSIBLE_TOL:
        raise PreconditionError(f"(p, q) = ({p}, {q}) leaves 1/r = {inv_r} outside (0, 1]")
    return 1.0 / min(inv_r, 1.0)


def _check_decay(beta: MultiIndex, r: float) -> None:
    # the kernel majorant |z|^(-|beta|-2) is in L^r away from 0 iff r(|beta| + 2) > 3
    if r * (beta.order + 2) <= 3.0:
        raise PreconditionError(f"r = {r} with |beta| = {beta.order}: need r(|beta| + 2) > 3"
                                + (" (|beta| > 1 when r = 1)" if r == 1.0 else ""))


def smoothing_bound(beta, d: float, r: float, sup_phi: float = 1.0, sup_chi: float = 1.0) -> float:
    """``(4 sqrt2 / pi) beta! (8/d)^|beta| d^(3/r - 2) (r(|beta| + 2) - 3)^(-1/r) |Phi|_inf |chi|_inf``."""
    b = MultiIndex.of(beta)
    _check_decay(b, r)
    return (4.0 * math.sqrt(2.0) / math.pi * b.factorial * (8.0 / d) ** b.order * d ** (3.0 / r - 2.0)
            * (r * (b.order + 2) - 3.0) ** (-1.0 / r) * sup_phi * sup_chi)


def smoothing_bound_r1(beta, d: float, sup_phi: float = 1.0, sup_chi: float = 1.0) -> float:
    """The ``r = 1`` form ``(32 sqrt2 / pi) beta! / (|beta| - 1) (8/d)^(|beta| - 1)``."""
    b = MultiIndex.of(beta)
    if b.order <= 1:
        raise PreconditionError("needs |beta| > 1")
    return (32.0 * math.sqrt(2.0) / math.pi * b.factorial / (b.order - 1) * (8.0 / d) ** (b.order - 1)
            * sup_phi * sup_chi)


def _support_points(grid: Grid3, values: np.ndarray) -> np.ndarray:
    idx = np.argwhere(np.abs(values) > 0.0)
    # cKDTree with boxsize wants coordinates in [0, L)
    return np.mod(idx * grid.spacing, grid.box_length)


def support_distance(grid: Grid3, a: np.ndarray, b: np.ndarray) -> float:
    """Minimum periodic distance between the grid supports of ``a`` and ``b``.

    Returns 0 when the supports share a grid point and ``inf`` when either is empty.
    """
    pa, pb = _support_points(grid, a), _support_points(grid, b)
    if len(pa) == 0 or len(pb) == 0:
        return math.inf
    tree = cKDTree(pa, boxsize=grid.box_length)
    dist, _ = tree.query(pb, k=1)
    return float(dist.min())


def random_bumps(grid: Grid3, rng: np.random.Generator, centres: np.ndarray | None = None,
                 widths: tuple[float, float] = (0.3, 1.0), count: int = _N_BUMPS) -> np.ndarray:
    """A real sum of ``count`` periodized Gaussians with random centres, widths and signed amplitudes.

    ``centres`` restricts the centres to a given point cloud; otherwise they are uniform in the box.
    """
    out = np.zeros(grid.shape)
    L = grid.box_length
    for _ in range(count):
        if centres is None:
            c = rng.uniform(-L / 2, L / 2, size=3)
        else:
            c = centres[rng.integers(len(centres))]
        s = rng.uniform(*widths)
        amp = rng.normal()
        out += amp * np.exp(-0.5 * grid.distance(c) ** 2 / s**2)
    return out


def _centred_points(grid: Grid3, values: np.ndarray) -> np.ndarray:
    x, y, z = np.broadcast_arrays(*grid.coords())
    mask = np.abs(values) > 0.0
    return np.stack([x[mask], y[mask], z[mask]], axis=1)


def _smoothing_apply(grid: Grid3, phi: np.ndarray, chi: np.ndarray, beta: MultiIndex, alpha: float,
                     f: np.ndarray) -> np.ndarray:
    px, py, pz = grid.momenta()
    sym = px**beta.s1 * py**beta.s2 * pz**beta.s3 / np.sqrt(grid.p2 + alpha**-2)
    return phi * ifftn(sym * fftn(chi * f))


def smoothing_norm_probe(Phi: Field, chi: Field, beta, p: float, q: float, trials: int = 20,
                         seed: int = 0, alpha: float = 1.0) -> ProbeResult:
    """Random lower estimate of the ``L^p -> L^{q*}`` norm of ``Phi E(p)^{-1} D^beta chi``.

    ``q*`` is the Hölder conjugate of ``q`` and ``r`` is fixed by ``1/p + 1/q + 1/r = 2``.
    The kernel of the operator wraps around the periodic box, so the support
    distance ``d`` must not exceed a quarter of the box.

    Raises
    ------
    PreconditionError
        On overlapping supports, a non-admissible exponent pair,
        ``r (|beta| + 2) <= 3`` (so ``|beta| > 1`` when ``r = 1``) or ``d > L/4``.
    """
    grid = Phi.grid
    if chi.grid != grid:
        raise PreconditionError("Phi and chi live on different grids")
    b = MultiIndex.of(beta)
    r = admissible_r(p, q)
    _check_decay(b, r)
    phi_v, chi_v = Phi.to_real().values, chi.to_real().values
    d = support_distance(grid, phi_v, chi_v)
    if d == 0.0:
        raise PreconditionError("the supports of Phi and chi overlap on the grid")
    sup_phi, sup_chi = float(np.abs(phi_v).max()), float(np.abs(chi_v).max())
    if math.isinf(d):
        return ProbeResult(0.0, 0.0, d, r)
    if d > grid.box_length / 4:
        raise PreconditionError(f"support distance {d} exceeds L/4 = {grid.box_length / 4}")
    bound = smoothing_bound(b, d, r, sup_phi, sup_chi)
    q_star = q / (q - 1.0)
    centres = _centred_points(grid, chi_v)
    h = grid.spacing
    best = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        f = random_bumps(grid, rng, centres, widths=(2.0 * h, 0.25 * grid.box_length))
        nf = lp_norm(f, p, grid=grid)
        if nf == 0.0:
            continue
        out = _smoothing_apply(grid, phi_v, chi_v, b, alpha, f / nf)
        best = max(best, lp_norm(out, q_star, grid=grid))
    return ProbeResult(best, bound, d, r)


def multiplier_norm_probe(p: float, trials: int = 100, seed: int = 0, grid: Grid3 | None = None,
                          alpha: float = 1.0, axis: int = 0) -> float:
    """Random lower estimate of the ``L^p`` norm of ``S = E(p)^{-1} D_nu`` (``nu = axis``)."""
    if not 1.0 < p < math.inf:
        raise PreconditionError(f"need 1 < p < inf, got {p}")
    grid = grid if grid is not None else Grid3(32, 8.0)
    sym = grid.momenta()[axis] / np.sqrt(grid.p2 + alpha**-2)
    best = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        f = random_bumps(grid, rng)
        nf = lp_norm(f, p, grid=grid)
        if nf == 0.0:
            continue
        best = max(best, lp_norm(ifftn(sym * fftn(f / nf)), p, grid=grid))
    return best


def multiplier_advisory(probe_norm: float, K1: float) -> str | None:
    """``None`` when the probe is consistent with ``K1``, else an advisory to raise it."""
    if not math.isfinite(probe_norm):
        return "multiplier probe is not finite"
    if probe_norm > K1:
        return f"raise K1: probe {probe_norm:.6g} exceeds the configured {K1:.6g}"
    return None
