"""Numerical checks of the regularity statements on converged orbitals.

The lab covers the Kato inequality, derivative growth near a point away
from the nucleus (the analyticity bound ``|d^beta phi| <= C beta! / R^|beta|``),
the L^p form of the inductive estimate with its explicit constant ledger,
and exponential decay.

All derivatives are spectral: ``d^beta`` is multiplication of the discrete
Fourier coefficients by ``(i p)^beta`` with the full Nyquist row kept, so
``d^beta d^gamma = d^(beta+gamma)`` holds to rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import PreconditionError
from .grid import Field, Grid3, Space, fftn, ifftn, lp_norm
from .operators import MADELUNG_SC, inverse_radius, poisson_solve
from .state import OrbitalSet
from .verify.multiindex import MultiIndex, compositions

__all__ = [
    "MAX_DERIVATIVE_ORDER",
    "DEFAULT_K",
    "spectral_derivative",
    "fd_derivative",
    "kato_check",
    "RegularityReport",
    "derivative_growth_scan",
    "LpGrowthTable",
    "lp_growth_check",
    "DecayFit",
    "decay_fit",
    "ConstantLedger",
    "build_ledger",
    "AuditRow",
    "proposition_audit",
    "scan_csv",
    "audit_csv",
    "format_float",
]

MAX_DERIVATIVE_ORDER = 10
DEFAULT_K = {"K1": 2.0, "K2": 10.0, "K3": 10.0, "K4": 10.0, "C_star": 10.0}
K_PROVENANCE = "nonconstructive, existence only"
B_SAFETY = 1.01
C_SAFETY = 1.01


def format_float(x: float) -> str:
    """17 significant digits, the round-trip precision of a double."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# derivatives


def _derivative_symbol(grid: Grid3, beta: MultiIndex) -> np.ndarray:
    px, py, pz = grid.momenta()
    return (1j * px) ** beta.s1 * (1j * py) ** beta.s2 * (1j * pz) ** beta.s3


def spectral_derivative(f: Field, beta, max_order: int = MAX_DERIVATIVE_ORDER) -> Field:
    """``d^beta f`` by Fourier multiplication with ``(i p)^beta``; keeps ``f``'s space."""
    b = MultiIndex.of(beta)
    if b.order > max_order:
        raise ValueError(f"|beta| = {b.order} exceeds the derivative cap {max_order}")
    if b.order == 0:
        return f
    sym = _derivative_symbol(f.grid, b)
    if f.space is Space.FOURIER:
        return Field(f.grid, sym * f.values, Space.FOURIER)
    return Field(f.grid, ifftn(sym * fftn(f.values)))


# 8th-order central stencils for the first three derivatives
_FD_STENCILS = {
    1: np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280]),
    2: np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]),
    3: np.array([-7 / 240, 3 / 10, -169 / 120, 61 / 30, 0.0, -61 / 30, 169 / 120, -3 / 10, 7 / 240]),
}


def fd_derivative(f: Field, beta) -> np.ndarray:
    """Periodic 8th-order central finite-difference ``d^beta f`` for ``beta_k <= 3``."""
    b = MultiIndex.of(beta)
    if max(b) > 3:
        raise ValueError("finite-difference stencils are tabulated up to third order per axis")
    h = f.grid.spacing
    out = f.to_real().values
    for axis, order in enumerate(b):
        if order == 0:
            continue
        w = _FD_STENCILS[order]
        acc = np.zeros_like(out)
        for k, c in enumerate(w):
            if c != 0.0:
                acc += c * np.roll(out, 4 - k, axis=axis)
        out = acc / h**order
    return out


# ---------------------------------------------------------------------------
# Kato inequality


def kato_check(f: Field) -> tuple[float, float]:
    """``lhs = int |f|^2 / |x|`` and ``rhs = (pi/2) int |p| |f^(p)|^2 dp`` by grid quadrature."""
    g = f.grid
    real = f.to_real()
    if lp_norm(real) == 0.0:
        raise PreconditionError("kato_check needs a nonzero field")
    lhs = float(np.sum(np.abs(real.values) ** 2 * inverse_radius(g)) * g.cell_volume)
    four = real.to_fourier()
    rhs = 0.5 * math.pi * float(np.sum(np.sqrt(g.p2) * np.abs(four.values) ** 2) * four.weight())
    return lhs, rhs


# ---------------------------------------------------------------------------
# derivative growth


def _ball_radius(x0) -> float:
    return min(1.0, float(np.linalg.norm(x0)) / 4.0)


def _ball_mask(grid: Grid3, x0, radius: float) -> np.ndarray:
    return grid.distance(x0) < radius


@dataclass
class RegularityReport:
    """Per-order derivative table on ``U = B_{R/2}(x0)`` with the fitted analyticity constants."""

    x0: tuple[float, float, float]
    R: float
    orders: np.ndarray
    sup: np.ndarray
    ratio: np.ndarray  # max over beta of sup_U |d^beta phi| / beta!
    normalized: np.ndarray  # ratio * fitted_R^m
    C_fit: float
    R_fit: float
    flags: list[str] = field(default_factory=list)
    rows: list[tuple[MultiIndex, float]] = field(default_factory=list)
    points_in_U: int = 0
    lambda_fit: float | None = None
    kato_lhs: float | None = None
    kato_rhs: float | None = None

    @property
    def table(self) -> list[tuple[int, float, float]]:
        return [(int(m), float(s), float(q)) for m, s, q in zip(self.orders, self.sup, self.normalized)]

    def bounded(self, factor: float = 10.0) -> bool:
        """Normalized table within ``factor`` of the fitted constant at every order."""
        q = self.normalized / self.C_fit
        return bool(np.all(np.isfinite(q)) and q.max() <= factor and q.min() >= 1.0 / factor)


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def derivative_growth_scan(phi: Field, x0, max_order: int = 8, min_fit_order: int = 0,
                           tail_order: int = 3, tail_tolerance: float = 0.25) -> RegularityReport:
    """Tabulate ``sup_U |d^beta phi|`` for all ``|beta| <= max_order`` and fit the analyticity constants.

    The fit is least squares of ``y_m = log max_beta (sup_U |d^beta phi| / beta!)``
    against ``m`` for ``m >= min_fit_order``, giving ``R = exp(-slope)`` and
    ``C = exp(intercept)``.  The flag ``no_analyticity_evidence`` is raised when
    the normalized table still grows beyond ``tail_order`` (tail slope of
    ``y_m + m log R`` above ``tail_tolerance`` per order), i.e. when the data
    are not consistent with any single geometric rate.
    """
    g = phi.grid
    x0 = tuple(float(v) for v in np.asarray(x0, dtype=float).reshape(3))
    r0 = float(np.linalg.norm(x0))
    if r0 < 4.0 * g.spacing:
        raise PreconditionError(f"|x0| = {r0:.4g} is closer than 4 grid spacings to the nucleus")
    if max_order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"max_order {max_order} exceeds the derivative cap {MAX_DERIVATIVE_ORDER}")
    R = _ball_radius(x0)
    mask = _ball_mask(g, x0, R / 2.0)
    if not mask.any():
        raise PreconditionError("U contains no grid points")
    base = fftn(phi.to_real().values)
    orders = np.arange(max_order + 1)
    sup = np.zeros(max_order + 1)
    ratio = np.zeros(max_order + 1)
    rows = []
    for m in orders:
        for beta in compositions(int(m)):
            vals = ifftn(_derivative_symbol(g, beta) * base) if m else phi.to_real().values
            s = float(np.abs(vals[mask]).max())
            rows.append((beta, s))
            sup[m] = max(sup[m], s)
            ratio[m] = max(ratio[m], s / beta.factorial)
    flags: list[str] = []
    sel = orders >= min_fit_order
    if np.any(ratio[sel] <= 0):
        flags.append("vanishing_derivatives")
        return RegularityReport(x0, R, orders, sup, ratio, ratio.copy(), 0.0, math.inf, flags, rows,
                                int(mask.sum()))
    y = np.log(ratio[sel])
    slope, intercept = _line_fit(orders[sel].astype(float), y)
    R_fit = math.exp(-slope)
    C_fit = math.exp(intercept)
    normalized = ratio * R_fit ** orders
    tail = orders >= tail_order
    if tail.sum() >= 2:
        t_slope, _ = _line_fit(orders[tail].astype(float), np.log(normalized[tail]))
        if t_slope > tail_tolerance:
            flags.append("no_analyticity_evidence")
    return RegularityReport(x0, R, orders, sup, ratio, normalized, C_fit, R_fit, flags, rows,
                            int(mask.sum()))


# ---------------------------------------------------------------------------
# L^p growth


@dataclass
class LpGrowthTable:
    rows: list[tuple[int, float, MultiIndex, float]]  # (j, epsilon, beta, eps^|beta| ||D^beta phi||_p)
    C_fit: float
    B_fit: float


def _lp_on(values: np.ndarray, mask: np.ndarray, p: float, grid: Grid3) -> float:
    return lp_norm(values, p, mask=mask, grid=grid)


def _derivative_cache(phi: Field, max_order: int) -> dict[MultiIndex, np.ndarray]:
    g = phi.grid
    base = fftn(phi.to_real().values)
    out = {MultiIndex(0, 0, 0): phi.to_real().values}
    for m in range(1, max_order + 1):
        for beta in compositions(m):
            out[beta] = ifftn(_derivative_symbol(g, beta) * base)
    return out


def lp_growth_check(phi: Field, p: float, j_max: int, x0) -> LpGrowthTable:
    """``eps^|beta| ||D^beta phi||_{L^p(omega_{eps j})}`` for ``j <= j_max``, ``eps = (R/2)/j``, ``|beta| <= j``.

    Row ``j = 0`` is ``||phi||_{L^p(omega)}``.  The returned ``(C', B')`` is the
    log-space least-squares rate ``B'`` with ``C'`` raised until ``C' B'^|beta|``
    dominates every row.
    """
    if p < 5:
        raise PreconditionError(f"p must be >= 5, got {p}")
    g = phi.grid
    R = _ball_radius(x0)
    derivs = _derivative_cache(phi, j_max)
    rows = []
    rows.append((0, 0.0, MultiIndex(0, 0, 0), _lp_on(derivs[MultiIndex(0, 0, 0)], _ball_mask(g, x0, R), p, g)))
    for j in range(1, j_max + 1):
        eps = 0.5 * R / j
        mask = _ball_mask(g, x0, R - eps * j)
        for m in range(j + 1):
            for beta in compositions(m):
                rows.append((j, eps, beta, eps**m * _lp_on(derivs[beta], mask, p, g)))
    C_fit, B_fit = _dominating_rate(rows)
    return LpGrowthTable(rows, C_fit, B_fit)


def _dominating_rate(rows) -> tuple[float, float]:
    best: dict[int, float] = {}
    for _, _, beta, v in rows:
        best[beta.order] = max(best.get(beta.order, 0.0), v)
    ms = np.array(sorted(k for k, v in best.items() if v > 0), dtype=float)
    if len(ms) == 0:
        return 0.0, 1.0
    ys = np.log([best[int(m)] for m in ms])
    if len(ms) == 1:
        return float(math.exp(ys[0])), 1.0
    slope, _ = _line_fit(ms, ys)
    logC = float(np.max(ys - slope * ms))
    return math.exp(logC), math.exp(slope)


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayFit:
    rate: float
    curvature: float
    radii: np.ndarray
    log_max: np.ndarray
    flags: list[str] = field(default_factory=list)


def decay_fit(phi: Field, window: tuple[float, float] = (0.25, 0.45), floor: float = 1e-14) -> DecayFit:
    """Exponential decay rate from radial-shell maxima of ``|phi|`` over ``[L/4, 0.9 L/2]``.

    A concave log-profile (curvature term worth more than half a unit over the
    window) is flagged ``super_exponential``; shells at the rounding floor are
    dropped and flagged ``partial_fit``; fewer than two decades of tail are
    flagged ``short_tail``.
    """
    g = phi.grid
    a = np.abs(phi.to_real().values)
    r = g.radius
    L = g.box_length
    peak = float(a.max())
    flags: list[str] = []
    edges = np.arange(window[0] * L, window[1] * L + 0.5 * g.spacing, g.spacing)
    radii, logs = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (r >= lo) & (r < hi)
        if not sel.any():
            continue
        v = float(a[sel].max())
        if v <= floor * peak:
            if "partial_fit" not in flags:
                flags.append("partial_fit")
            continue
        radii.append(0.5 * (lo + hi))
        logs.append(math.log(v))
    radii_a, logs_a = np.array(radii), np.array(logs)
    if len(radii_a) < 3:
        flags.append("insufficient_tail")
        return DecayFit(math.nan, math.nan, radii_a, logs_a, flags)
    slope, _ = _line_fit(radii_a, logs_a)
    c2 = float(np.polyfit(radii_a, logs_a, 2)[0])
    span = radii_a[-1] - radii_a[0]
    if c2 < 0 and abs(c2) * span**2 > 0.5:
        flags.append("super_exponential")
    if logs_a[0] - logs_a[-1] < math.log(100.0):
        flags.append("short_tail")
    return DecayFit(-slope, c2, radii_a, logs_a, flags)


# ---------------------------------------------------------------------------
# constant ledger


@dataclass
class ConstantLedger:
    """Explicit constants of the inductive L^p estimate, with their inputs."""

    x0: tuple[float, float, float]
    R: float
    p: float
    C1: float
    A: float
    C2: float
    C3: float
    C: float
    B: float
    C_star: float
    K1: float
    K2: float
    K3: float
    K4: float
    A_potential: float = 0.0
    A_multiplier: float = 0.0
    C1_pair_sup: float = 0.0
    C_terms: dict[str, float] = field(default_factory=dict)
    B_terms: dict[str, float] = field(default_factory=dict)
    provenance: str = K_PROVENANCE

    def as_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, dict):
                for k, w in v.items():
                    lines.append(f"{f.name}.{k} = {format_float(w)}")
            elif isinstance(v, tuple):
                lines.append(f"{f.name} = " + ",".join(format_float(c) for c in v))
            elif isinstance(v, str):
                lines.append(f"{f.name} = {v}")
            else:
                lines.append(f"{f.name} = {format_float(v)}")
        return "\n".join(lines) + "\n"

    def assertions(self) -> list[tuple[str, bool]]:
        """Every defining inequality as a named boolean."""
        out = [(f"B > {k}", self.B > v) for k, v in self.B_terms.items()]
        out += [(f"C > {k}", self.C > v) for k, v in self.C_terms.items()]
        out += [
            ("A >= 1", self.A >= 1.0),
            ("A >= 1/alpha + max|eps|", self.A >= self.A_multiplier),
            ("A >= potential majorant", self.A >= self.A_potential),
            ("C1 >= max ||U_ab||", self.C1 >= self.C1_pair_sup * (1 - 1e-12)),
            ("C2 = max(K1, 256 sqrt2/pi)", self.C2 == max(self.K1, 256 * math.sqrt(2) / math.pi)),
            ("C3 formula", math.isclose(self.C3, max(4 * math.pi * (1 + 2 * self.C1 / self.R**2) * self.K3,
                                                    160 * math.pi * self.K2**2 * self.K3), rel_tol=1e-15)),
        ]
        positive = all(v > 0 for v in (self.A, self.C2, self.C3, self.C, self.B, self.C_star,
                                       self.K1, self.K2, self.K3, self.K4))
        out.append(("entries positive", positive and self.C1 >= 0))
        return out

    def satisfied(self) -> bool:
        return all(ok for _, ok in self.assertions())


def _free_space_peak(grid: Grid3, density: np.ndarray) -> float:
    """Sup of the Newtonian potential of a non-negative density, corrected for the periodic gauge."""
    u = poisson_solve(grid, density).real
    w = grid.cell_volume
    Q = float(np.sum(density) * w)
    m2 = float(np.sum(density * grid.radius**2) * w)
    # periodic potential at the centre sits below the free one by xi Q / L - (2 pi / 3V) <r^2>
    return float(u.max() + MADELUNG_SC * Q / grid.box_length - 2 * math.pi * m2 / (3 * grid.volume))


def build_ledger(state: OrbitalSet, x0, p: float, K_inputs: dict | None = None) -> ConstantLedger:
    """Assemble the constants ``C1, A, C2, C3, C, B`` for orbitals ``state`` at ``x0``.

    ``K_inputs`` must provide ``K1..K4`` and ``C_star``; ``None`` selects the
    documented defaults.  ``C`` and ``B`` are their lower bounds times 1.01.
    """
    if K_inputs is None:
        K_inputs = dict(DEFAULT_K)
    missing = [k for k in DEFAULT_K if k not in K_inputs]
    if missing:
        raise PreconditionError(f"build_ledger: missing constants {', '.join(missing)}")
    K1, K2, K3, K4, C_star = (float(K_inputs[k]) for k in DEFAULT_K)
    g = state.grid
    ph = state.physics
    x0 = tuple(float(v) for v in np.asarray(x0, dtype=float).reshape(3))
    r0 = float(np.linalg.norm(x0))
    if r0 == 0.0:
        raise PreconditionError("x0 must differ from the nucleus")
    R = _ball_radius(x0)
    phi = state.stack()
    N = ph.N

    c1 = 0.0
    pair_sup = 0.0
    for a in range(len(phi)):
        for b in range(a, len(phi)):
            c1 = max(c1, _free_space_peak(g, np.abs(phi[a] * phi[b])))
            pair_sup = max(pair_sup, float(np.abs(poisson_solve(g, phi[a] * np.conj(phi[b]))).max()))

    rho = r0 - R
    A_pot = max(8.0, math.sqrt(2.0) * ph.coupling) / rho
    A_mult = 1.0 / ph.alpha + (float(np.max(np.abs(state.epsilons))) if len(state) else 0.0)
    A = max(1.0, A_pot, A_mult)

    C2 = max(K1, 256.0 * math.sqrt(2.0) / math.pi)
    C3 = max(4.0 * math.pi * (1.0 + 2.0 * c1 / R**2) * K3, 160.0 * math.pi * K2**2 * K3)

    omega = _ball_mask(g, x0, R)
    big = _ball_mask(g, x0, 2.0 * R)
    w1p = 0.0
    l3p = 0.0
    l2 = 0.0
    l3 = 0.0
    for u in phi:
        f = Field(g, u)
        s = lp_norm(u, p, mask=omega, grid=g)
        for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
            s += lp_norm(spectral_derivative(f, e).values, p, mask=omega, grid=g)
        w1p = max(w1p, s)
        l3p = max(l3p, lp_norm(u, 3 * p, mask=big, grid=g))
        l2 = max(l2, lp_norm(u, 2.0, grid=g))
        l3 = max(l3, lp_norm(u, 3.0, grid=g))
    s2 = math.sqrt(2.0)
    bracket = 48 * s2 / math.pi * A + 48 * s2 * c1 * N / (ph.Z * math.pi) + 1536 * s2 / (math.pi**2 * r0)
    C_terms = {
        "1": 1.0,
        "W1p(omega)": w1p,
        "L3p(B2R)": l3p,
        "L2 term": 768.0 / math.pi * r0 ** (3.0 * (2.0 - p) / (2.0 * p)) * l2,
        "L3 term": bracket * l3,
    }
    C = C_SAFETY * max(C_terms.values())
    B_terms = {
        "48 A C2": 48.0 * A * C2,
        "C_star": C_star,
        "16/|x0|": 16.0 / r0,
        "4 C1^2": 4.0 * c1**2,
        "(160 C^2 K2 C3)^2": (160.0 * C**2 * K2 * C3) ** 2,
        "(24 N C2 / Z)^2": (24.0 * N * C2 / ph.Z) ** 2,
        "16 K3": 16.0 * K3,
    }
    B = B_SAFETY * max(B_terms.values())
    return ConstantLedger(x0, R, float(p), c1, A, C2, C3, C, B, C_star, K1, K2, K3, K4,
                          A_pot, A_mult, pair_sup, C_terms, B_terms)


# ---------------------------------------------------------------------------
# audit


@dataclass
class AuditRow:
    orbital: int
    j: int
    epsilon: float
    beta: MultiIndex
    measured: float
    bound: float

    @property
    def margin(self) -> float:
        """``1 - measured / bound``; non-negative exactly when the row passes."""
        return 1.0 - self.measured / self.bound if self.bound > 0 else -math.inf

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound


def proposition_audit(state: OrbitalSet, ledger: ConstantLedger, p: float, j_max: int,
                      C: float | None = None, B: float | None = None) -> list[AuditRow]:
    """Check ``eps^|beta| ||D^beta phi_i||_{L^p(omega_{eps j})} <= C B^|beta|``.

    Rows run over orbitals, ``j <= j_max``, ``eps in {R/(2j), R/(4j)}`` and all
    ``|beta| <= j``; row ``j = 0`` is ``||phi_i||_{L^p(omega)} <= C``.
    ``C`` and ``B`` override the ledger values (for adversarial audits).
    """
    if p < 5:
        raise PreconditionError(f"p must be >= 5, got {p}")
    if j_max > 8:
        raise PreconditionError(f"j_max must be <= 8, got {j_max}")
    C = ledger.C if C is None else C
    B = ledger.B if B is None else B
    g = state.grid
    x0, R = ledger.x0, ledger.R
    rows: list[AuditRow] = []
    omega = _ball_mask(g, x0, R)
    for i, f in enumerate(state.orbitals):
        derivs = _derivative_cache(f, j_max)
        zero = MultiIndex(0, 0, 0)
        rows.append(AuditRow(i, 0, 0.0, zero, _lp_on(derivs[zero], omega, p, g), C))
        for j in range(1, j_max + 1):
            for eps in (R / (2 * j), R / (4 * j)):
                mask = _ball_mask(g, x0, R - eps * j)
                for m in range(j + 1):
                    for beta in compositions(m):
                        val = eps**m * _lp_on(derivs[beta], mask, p, g)
                        rows.append(AuditRow(i, j, eps, beta, val, C * B**m))
    return rows


# ---------------------------------------------------------------------------
# CSV


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def scan_csv(reports: list[tuple[int, RegularityReport]], audit: list[AuditRow] | None = None) -> str:
    """Rows ``(orbital, |beta|, beta, sup_U, lp_norm, bound, margin)``.

    Scan rows carry ``sup_U`` and the fitted bound ``C beta! / R^|beta|``; audit
    rows carry the L^p quantity and ``C B^|beta|``.  Absent entries are empty.
    """
    out = []
    for orbital, rep in reports:
        for beta, s in rep.rows:
            bound = rep.C_fit * beta.factorial / rep.R_fit ** beta.order
            out.append([str(orbital), str(beta.order), str(beta), format_float(s), "",
                        format_float(bound), format_float(1.0 - s / bound)])
    for row in audit or []:
        out.append([str(row.orbital), str(row.beta.order), str(row.beta), "", format_float(row.measured),
                    format_float(row.bound), format_float(row.margin)])
    return _csv_text(["orbital", "|beta|", "beta", "sup_U", "lp_norm", "bound", "margin"], out)


def audit_csv(audit: list[AuditRow]) -> str:
    out = [[str(r.orbital), str(r.j), format_float(r.epsilon), str(r.beta), format_float(r.measured),
            format_float(r.bound), format_float(r.margin), "pass" if r.passed else "fail"] for r in audit]
    return _csv_text(["orbital", "j", "epsilon", "beta", "measured", "bound", "margin", "status"], out)
