"""Derivatives of the Yukawa kernel ``e^{-s r} / r`` in exact arithmetic, and the resolvent formula.

Every derivative of ``e^{-s r}/r`` has the form

    e^{-s r} * sum c_{a, mu, k} s^a x^mu r^{-k}

with integer ``c`` and ``a + k`` odd, and one more partial derivative maps
this class to itself:

    d_nu [s^a x^mu r^{-k} e^{-s r}] = mu_nu s^a x^{mu - e_nu} r^{-k} - k s^a x^{mu + e_nu} r^{-k-2}
                                      - s^{a+1} x^{mu + e_nu} r^{-k-1}.

Coefficient tables are built once per multi-index and evaluated in
multiprecision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate

from ..errors import PreconditionError
from .multiindex import MultiIndex

__all__ = [
    "YukawaDeriv",
    "yukawa_table",
    "yukawa_derivative",
    "yukawa_bound",
    "yukawa_bound_check",
    "yukawa_fd_check",
    "sqrt_integral_formula",
]

Term = tuple[int, tuple[int, int, int], int]  # (power of s, monomial exponent, power of 1/r)

EVAL_DPS = 50


@lru_cache(maxsize=None)
def yukawa_table(beta: tuple[int, int, int]) -> tuple[tuple[Term, int], ...]:
    """Integer coefficient table of ``d^beta (e^{-s r}/r)``, sorted for determinism."""
    b = MultiIndex.of(beta)
    if b.order == 0:
        return (((0, (0, 0, 0), 1), 1),)
    # differentiate along the last non-zero axis of beta
    nu = max(i for i in range(3) if b[i] > 0)
    prev = list(b)
    prev[nu] -= 1
    out: dict[Term, int] = {}
    for (a, mu, k), c in yukawa_table(tuple(prev)):
        up = list(mu)
        up[nu] += 1
        up_t = tuple(up)
        if mu[nu] > 0:
            down = list(mu)
            down[nu] -= 1
            key = (a, tuple(down), k)
            out[key] = out.get(key, 0) + c * mu[nu]
        key = (a, up_t, k + 2)
        out[key] = out.get(key, 0) - c * k
        key = (a + 1, up_t, k + 1)
        out[key] = out.get(key, 0) - c
    return tuple(sorted((t, c) for t, c in out.items() if c != 0))


@dataclass(frozen=True)
class YukawaDeriv:
    """``d^beta (e^{-s r}/r)`` as an exact coefficient table."""

    beta: MultiIndex
    s: float
    terms: tuple[tuple[Term, int], ...]

    @classmethod
    def build(cls, beta, s: float) -> "YukawaDeriv":
        if s < 0:
            raise PreconditionError(f"s must be >= 0, got {s}")
        b = MultiIndex.of(beta)
        return cls(b, float(s), yukawa_table(tuple(b)))

    def evaluate_mp(self, x) -> mpmath.mpf:
        with mpmath.workdps(EVAL_DPS):
            xs = [mpmath.mpf(float(v)) for v in x]
            r = mpmath.sqrt(xs[0] ** 2 + xs[1] ** 2 + xs[2] ** 2)
            if r == 0:
                raise PreconditionError("x must differ from the origin")
            s = mpmath.mpf(self.s)
            total = mpmath.mpf(0)
            for (a, mu, k), c in self.terms:
                total += c * s**a * xs[0] ** mu[0] * xs[1] ** mu[1] * xs[2] ** mu[2] / r**k
            return total * mpmath.exp(-s * r)

    def __call__(self, x) -> float:
        return float(self.evaluate_mp(x))


def yukawa_derivative(beta, s: float, x) -> float:
    """Exact-recurrence value of ``d^beta (e^{-s|x|}/|x|)`` at ``x``."""
    return YukawaDeriv.build(beta, s)(x)


def yukawa_bound(beta, s: float, x) -> float:
    """``sqrt(2) beta! / |x| * (8/|x|)^|beta| * e^{-s|x|/2}``."""
    b = MultiIndex.of(beta)
    r = float(np.linalg.norm(np.asarray(x, dtype=float)))
    return math.sqrt(2.0) * b.factorial / r * (8.0 / r) ** b.order * math.exp(-0.5 * s * r)


def yukawa_bound_check(beta, s: float, x) -> tuple[float, float]:
    """``(|d^beta (e^{-s|x|}/|x|)|, bound)``; the contract is ``value <= bound``."""
    b = MultiIndex.of(beta)
    if b.order > 8:
        raise PreconditionError(f"|beta| = {b.order} above the checked range 8")
    return abs(yukawa_derivative(b, s, x)), yukawa_bound(b, s, x)


def yukawa_fd_check(beta, s: float, x) -> tuple[float, float]:
    """Recurrence value and a high-precision central-difference value of the same derivative."""
    b = MultiIndex.of(beta)
    exact = yukawa_derivative(b, s, x)
    with mpmath.workdps(EVAL_DPS):
        sm = mpmath.mpf(float(s))

        def kernel(a, bb, c):
            r = mpmath.sqrt(a**2 + bb**2 + c**2)
            return mpmath.exp(-sm * r) / r

        pt = tuple(mpmath.mpf(float(v)) for v in x)
        fd = mpmath.diff(kernel, pt, tuple(b), h=mpmath.mpf("1e-12"), method="step", direction=0)
    return exact, float(fd)


def sqrt_integral_formula(x: float, quad_points: int = 200) -> float:
    """``(1/pi) int_0^inf dt / ((x + t) sqrt t)`` after ``t = u^2``; equals ``1/sqrt(x)``."""
    if not x > 0:
        raise PreconditionError(f"x must be positive, got {x}")
    val, _ = integrate.quad(lambda u: 2.0 / (x + u * u), 0.0, np.inf, epsabs=1e-14, epsrel=1e-13,
                            limit=quad_points)
    return val / math.pi
