"""Seeded lemma suites producing one CSV row per checked case.

Each row records the lemma, a case id, the measured quantity, the bound it
is compared with, the relative margin ``1 - measured / bound`` and a status.
Identity checks report the absolute discrepancy against a bound of 0 and
pass only when the discrepancy is exactly 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ..grid import Field, Grid3, sample
from .kernels import sqrt_integral_formula, yukawa_bound_check, yukawa_fd_check
from .localization import (build_localization, canonical_chain, localization_identity_check,
                           mollified_ball, random_chain)
from .multiindex import (compositions, factorial_bound, multinomial_formula, multinomial_sum_identity,
                         stirling_binom_bound)
from .probes import (GRID_SLACK, multiplier_advisory, multiplier_norm_probe, smoothing_bound_r1,
                     smoothing_norm_probe)

__all__ = [
    "VerifyRow",
    "appendix_a_rows",
    "lemma_b1_rows",
    "lemma_c1_rows",
    "lemma_c2_rows",
    "lemma_c2_cases",
    "lemma_c3_rows",
    "resolvent_rows",
    "run_suite",
    "verify_csv",
]

B1_TOL = 1e-8
FD_TOL = 1e-7
RESOLVENT_TOL = 1e-8


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class VerifyRow:
    lemma: str
    case: str
    measured: float
    bound: float
    passed: bool
    equality: bool = False

    @property
    def margin(self) -> float:
        if self.equality or self.bound == 0.0:
            return -self.measured
        return 1.0 - self.measured / self.bound


def _eq_row(lemma: str, case: str, lhs: int, rhs: int) -> VerifyRow:
    diff = abs(lhs - rhs)
    return VerifyRow(lemma, case, float(diff), 0.0, diff == 0, equality=True)


def _le_row(lemma: str, case: str, measured: float, bound: float, slack: float = 0.0) -> VerifyRow:
    return VerifyRow(lemma, case, float(measured), float(bound), bool(measured <= bound * (1.0 + slack)))


# ---------------------------------------------------------------------------
# Appendix A


def appendix_a_rows(max_order: int = 12, n_max: int = 60) -> list[VerifyRow]:
    """Multinomial identities for every ``|sigma| <= max_order`` and the Stirling majorant for ``n <= n_max``."""
    rows = []
    for m in range(max_order + 1):
        for s in compositions(m):
            worst = 0
            for k in range(m + 1):
                lhs, rhs = multinomial_sum_identity(s, k)
                worst = max(worst, abs(lhs - rhs))
            rows.append(VerifyRow("A.sum", f"sigma={s}", float(worst), 0.0, worst == 0, equality=True))
            rows.append(_eq_row("A.multinomial", f"sigma={s}", *multinomial_formula(s)))
            rows.append(_le_row("A.factorial", f"sigma={s}", *factorial_bound(s)))
    for n in range(2, n_max + 1):
        worst = None
        for m in range(1, n):
            exact, bound = stirling_binom_bound(n, m)
            ratio = exact / bound
            if worst is None or ratio > worst[0]:
                worst = (ratio, m, exact, bound)
        _, m, exact, bound = worst
        rows.append(_le_row("A.stirling", f"n={n},worst_m={m}", float(exact), bound))
    return rows


# ---------------------------------------------------------------------------
# Lemma B.1


def lemma_b1_rows(max_order: int = 6, n: int = 32, box_length: float = 8.0, seed: int = 0,
                  x0=(1.5, 0.0, 0.0), R: float = 1.0) -> list[VerifyRow]:
    """Relative residual of the localization identity for a Gaussian, every ``sigma``, ``ell`` and both chains."""
    grid = Grid3(n, box_length)
    g = sample(grid, lambda d: np.exp(-(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)), x0)
    rows = []
    for j in range(max_order + 1):
        fam = build_localization(j, R / (2 * (j + 1)), x0, R, grid=grid, check_resolution=False)
        for s in compositions(j):
            for ell in range(j + 1):
                for name, chain in (("canonical", canonical_chain(s, ell)),
                                    ("random", random_chain(s, ell, seed=hash_seed(seed, s, ell)))):
                    res = localization_identity_check(g, s, ell, fam, chain)
                    rows.append(_le_row("B.1", f"sigma={s},ell={ell},{name}", res.residual, B1_TOL))
    return rows


def hash_seed(seed: int, sigma, ell: int) -> int:
    """A deterministic per-case seed (independent of Python's string hashing)."""
    a, b, c = sigma
    return int(seed) * 1_000_003 + ((a * 31 + b) * 31 + c) * 64 + ell


# ---------------------------------------------------------------------------
# Lemma C.1, C.2


def lemma_c1_rows(p: float = 5.0, trials: int = 100, seed: int = 0, K1: float = 2.0) -> list[VerifyRow]:
    """``E(p)^{-1} D_1`` probe on ``L^p`` against ``K1``; a failure only advises raising ``K1``."""
    norm = multiplier_norm_probe(p, trials, seed)
    rows = [_le_row("C.1", f"p={p:g},trials={trials}", norm, K1)]
    advisory = multiplier_advisory(norm, K1)
    if advisory is not None:
        rows[0] = VerifyRow("C.1", rows[0].case + ",advisory", norm, K1, True)
    return rows


def _separated_pair(grid: Grid3, rng: np.random.Generator) -> tuple[Field, Field, float]:
    """Two mollified balls on a random axis, separated by a gap in ``[0.5, L/8]``."""
    L = grid.box_length
    a1, a2 = rng.uniform(0.6, 1.2, size=2)
    w1, w2 = rng.uniform(2.0 * grid.spacing, 3.0 * grid.spacing, size=2)
    gap = rng.uniform(0.5, L / 8)
    axis = np.zeros(3)
    axis[rng.integers(3)] = 1.0
    c1 = -axis * (a1 + w1 + gap / 2)
    c2 = axis * (a2 + w2 + gap / 2)
    phi, _ = mollified_ball(grid, c1, a1, w1)
    chi, _ = mollified_ball(grid, c2, a2, w2)
    amp = rng.uniform(0.5, 2.0, size=2)
    return Field(grid, amp[0] * phi), Field(grid, amp[1] * chi), gap


_C2_TRIPLES = [  # (p, q): r = 1 / (2 - 1/p - 1/q)
    (5.0, 1.25),   # r = 1, q* = p
    (2.0, 2.0),    # r = 1
    (3.0, 1.2),
    (1.5, 1.5),
    (1.2, 1.5),    # r = 2
]


def lemma_c2_cases(cases: int = 20, seed: int = 0):
    """Deterministic case list ``(case_seed, beta, p, q)``; case 0 is the ``r = 1``, ``p = 5``, ``beta = (2,0,0)`` case."""
    out = [(0, (2, 0, 0), 5.0, 1.25)]
    rng = np.random.default_rng(seed)
    while len(out) < cases:
        p, q = _C2_TRIPLES[rng.integers(len(_C2_TRIPLES))]
        r = 1.0 / (2.0 - 1.0 / p - 1.0 / q)
        m = int(rng.integers(0, 5))
        if r * (m + 2) <= 3.0 + 1e-12:
            continue
        parts = rng.multinomial(m, [1 / 3] * 3)
        out.append((len(out), tuple(int(v) for v in parts), p, q))
    return out


def lemma_c2_rows(cases: int = 20, seed: int = 0, trials: int = 10, n: int = 48,
                  box_length: float = 12.0) -> list[VerifyRow]:
    """``Phi E(p)^{-1} D^beta chi`` probes against the smoothing bound with the grid slack."""
    grid = Grid3(n, box_length)
    rows = []
    for cid, beta, p, q in lemma_c2_cases(cases, seed):
        rng = np.random.default_rng([seed, cid])
        Phi, chi, _ = _separated_pair(grid, rng)
        res = smoothing_norm_probe(Phi, chi, beta, p, q, trials=trials, seed=seed * 1000 + cid)
        case = f"case={cid},beta={''.join(map(str, beta))},p={p:g},q={q:g},r={res.r:.6g},d={res.distance:.6g}"
        rows.append(_le_row("C.2", case, res.probe_norm, res.paper_bound, GRID_SLACK))
        if res.r == 1.0 and sum(beta) > 1:
            sp, sc = float(np.abs(Phi.values).max()), float(np.abs(chi.values).max())
            rows.append(_le_row("C.2-r1", case, res.probe_norm,
                                smoothing_bound_r1(beta, res.distance, sp, sc), GRID_SLACK))
    return rows


# ---------------------------------------------------------------------------
# Lemma C.3 and the resolvent formula


def lemma_c3_rows(cases: int = 1000, seed: int = 0, max_order: int = 6, fd_order: int = 3) -> list[VerifyRow]:
    """Yukawa derivative bounds at random ``(beta, s, x)`` and the recurrence against central differences."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(cases):
        m = int(rng.integers(0, max_order + 1))
        beta = tuple(int(v) for v in rng.multinomial(m, [1 / 3] * 3))
        s = float(rng.uniform(0.0, 5.0))
        direction = rng.normal(size=3)
        x = direction / np.linalg.norm(direction) * math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        val, bound = yukawa_bound_check(beta, s, x)
        rows.append(_le_row("C.3", f"case={i},beta={''.join(map(str, beta))}", val, bound))
    frng = np.random.default_rng([seed, 1])
    for m in range(fd_order + 1):
        for beta in compositions(m):
            s = float(frng.uniform(0.0, 3.0))
            x = frng.uniform(0.5, 1.5, size=3) * frng.choice([-1.0, 1.0], size=3)
            exact, fd = yukawa_fd_check(beta, s, x)
            err = abs(exact - fd) / max(abs(exact), 1e-300)
            rows.append(_le_row("C.3-recurrence", f"beta={beta}", err, FD_TOL))
    return rows


def resolvent_rows(points=(0.01, 0.25, 1.0, 4.0, 100.0)) -> list[VerifyRow]:
    """``|(1/pi) int dt / ((x+t) sqrt t) - 1/sqrt x|``."""
    rows = []
    for x in points:
        err = abs(sqrt_integral_formula(x) - 1.0 / math.sqrt(x))
        rows.append(_le_row("C.4", f"x={x:g}", err, RESOLVENT_TOL))
    return rows


# ---------------------------------------------------------------------------


def run_suite(trials: int = 10, seed: int = 0, K1: float = 2.0, b1_order: int = 6,
              c3_cases: int = 1000, c2_cases: int = 20) -> list[VerifyRow]:
    """All lemma suites in a fixed order."""
    rows = appendix_a_rows()
    rows += lemma_b1_rows(b1_order, seed=seed)
    rows += lemma_c1_rows(trials=max(trials, 1), seed=seed, K1=K1)
    rows += lemma_c2_rows(c2_cases, seed=seed, trials=trials)
    rows += lemma_c3_rows(c3_cases, seed=seed)
    rows += resolvent_rows()
    return rows


def verify_csv(rows: list[VerifyRow]) -> str:
    """``lemma,case,measured,bound,margin,status`` with 17 significant digits and LF endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lemma", "case", "measured", "bound", "margin", "status"])
    for r in rows:
        w.writerow([r.lemma, r.case, _fmt(r.measured), _fmt(r.bound), _fmt(r.margin),
                    "pass" if r.passed else "fail"])
    return buf.getvalue()
