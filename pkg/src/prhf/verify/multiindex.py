"""Multi-indices in three variables and the combinatorial facts used for derivative bookkeeping.

All counting is done in Python integers, so results are exact at any order.
"""

from __future__ import annotations

import math
from itertools import product
from typing import Iterator, NamedTuple

__all__ = [
    "MultiIndex",
    "compositions",
    "indices_below",
    "multi_binomial",
    "multinomial_sum_identity",
    "factorial_bound",
    "stirling_binom_bound",
    "multinomial_formula",
]

MAX_ORDER = 20


class MultiIndex(NamedTuple):
    s1: int
    s2: int
    s3: int

    @classmethod
    def of(cls, value) -> "MultiIndex":
        if isinstance(value, MultiIndex):
            return value
        vals = tuple(int(v) for v in value)
        if len(vals) != 3 or min(vals) < 0:
            raise ValueError(f"a multi-index needs three non-negative entries, got {value!r}")
        return cls(*vals)

    @property
    def order(self) -> int:
        return self.s1 + self.s2 + self.s3

    @property
    def factorial(self) -> int:
        return math.factorial(self.s1) * math.factorial(self.s2) * math.factorial(self.s3)

    def __add__(self, other) -> "MultiIndex":
        o = MultiIndex.of(other)
        return MultiIndex(self.s1 + o.s1, self.s2 + o.s2, self.s3 + o.s3)

    def __sub__(self, other) -> "MultiIndex":
        o = MultiIndex.of(other)
        out = (self.s1 - o.s1, self.s2 - o.s2, self.s3 - o.s3)
        if min(out) < 0:
            raise ValueError(f"{tuple(o)} is not below {tuple(self)}")
        return MultiIndex(*out)

    def leq(self, other) -> bool:
        o = MultiIndex.of(other)
        return self.s1 <= o.s1 and self.s2 <= o.s2 and self.s3 <= o.s3

    def __str__(self) -> str:
        return f"{self.s1}{self.s2}{self.s3}" if max(self) < 10 else f"{self.s1}.{self.s2}.{self.s3}"


def compositions(m: int) -> list[MultiIndex]:
    """All ``beta`` with ``|beta| = m``, in descending lexicographic order."""
    if m < 0:
        return []
    out = []
    for a in range(m, -1, -1):
        for b in range(m - a, -1, -1):
            out.append(MultiIndex(a, b, m - a - b))
    return out


def indices_below(sigma) -> Iterator[MultiIndex]:
    """All ``mu <= sigma`` componentwise."""
    s = MultiIndex.of(sigma)
    for a, b, c in product(range(s.s1 + 1), range(s.s2 + 1), range(s.s3 + 1)):
        yield MultiIndex(a, b, c)


def multi_binomial(sigma, mu) -> int:
    """``C(sigma, mu) = prod_k C(sigma_k, mu_k)``."""
    s, u = MultiIndex.of(sigma), MultiIndex.of(mu)
    return math.comb(s.s1, u.s1) * math.comb(s.s2, u.s2) * math.comb(s.s3, u.s3)


def _guard(sigma: MultiIndex) -> None:
    if sigma.order > MAX_ORDER:
        raise ValueError(f"|sigma| = {sigma.order} exceeds the supported order {MAX_ORDER}")


def multinomial_sum_identity(sigma, k: int) -> tuple[int, int]:
    """``sum_{mu <= sigma, |mu| = k} C(sigma, mu)`` and ``C(|sigma|, k)``."""
    s = MultiIndex.of(sigma)
    _guard(s)
    if not 0 <= k <= s.order:
        raise ValueError(f"k = {k} outside [0, {s.order}]")
    lhs = sum(multi_binomial(s, mu) for mu in indices_below(s) if mu.order == k)
    return lhs, math.comb(s.order, k)


def factorial_bound(sigma) -> tuple[int, int]:
    """``|sigma|!`` and ``3^|sigma| sigma!``."""
    s = MultiIndex.of(sigma)
    _guard(s)
    return math.factorial(s.order), 3**s.order * s.factorial


def multinomial_formula(sigma) -> tuple[int, int]:
    """``|sigma|! / sigma!`` counted as the number of distinct words, and by the closed form.

    The first entry is the coefficient of ``x^sigma`` in ``(x1 + x2 + x3)^|sigma|``
    obtained by expanding one factor at a time.
    """
    s = MultiIndex.of(sigma)
    _guard(s)
    # coefficient extraction by repeated convolution
    coeffs = {MultiIndex(0, 0, 0): 1}
    unit = (MultiIndex(1, 0, 0), MultiIndex(0, 1, 0), MultiIndex(0, 0, 1))
    for _ in range(s.order):
        nxt: dict[MultiIndex, int] = {}
        for key, c in coeffs.items():
            for e in unit:
                t = key + e
                if t.leq(s):
                    nxt[t] = nxt.get(t, 0) + c
        coeffs = nxt
    return coeffs.get(s, 0), math.factorial(s.order) // s.factorial


def stirling_binom_bound(n: int, m: int) -> tuple[int, float]:
    """Exact ``C(n, m)`` and the Stirling-type majorant
    ``e^(1/12) / sqrt(2 pi) * n^(n+1/2) / (m^(m+1/2) (n-m)^(n-m+1/2))``."""
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n, got n={n}, m={m}")
    if n > 10_000:
        raise ValueError("n too large for the floating bound")
    log_bound = (1.0 / 12.0 - 0.5 * math.log(2 * math.pi)
                 + (n + 0.5) * math.log(n) - (m + 0.5) * math.log(m) - (n - m + 0.5) * math.log(n - m))
    return math.comb(n, m), math.exp(log_bound)
