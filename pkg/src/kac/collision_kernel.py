"""Exact angular integrals and angle-averaged powers of the energy collision polynomial.

A collision rotating the pair (v_i, v_j) by an angle theta changes the energies
to ``e_i + P`` and ``e_j - P`` with

    P(v_i, v_j) = -sin^2(theta) e_i + 2 sin(theta) cos(theta) v_i v_j + sin^2(theta) e_j.

All coefficients are exact :class:`fractions.Fraction` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

from .errors import DomainError, SizeError

MAX_TRIG_DEGREE = 64
MAX_POWER = 24


def _double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


@lru_cache(maxsize=None)
def trig_integral(a: int, b: int) -> Fraction:
    """Average of sin^(2a) cos^(2b) over a full period.

    Parameters
    ----------
    a, b : int
        Nonnegative half-exponents.

    Returns
    -------
    Fraction
        ``(2a-1)!! (2b-1)!! / (2a+2b)!!``.
    """
    if a < 0 or b < 0:
        raise DomainError(f"exponents must be nonnegative, got ({a}, {b})")
    if a + b > MAX_TRIG_DEGREE:
        raise SizeError(f"a+b={a + b} exceeds the maximum {MAX_TRIG_DEGREE}")
    return Fraction(_double_factorial(2 * a - 1) * _double_factorial(2 * b - 1), _double_factorial(2 * a + 2 * b))


@dataclass(frozen=True)
class PowerExpansion:
    """Angle average of P^m written as sum_a coefficients[a] e_i^a e_j^(m-a)."""

    degree: int
    coefficients: tuple[Fraction, ...]

    def __getitem__(self, a: int) -> Fraction:
        return self.coefficients[a]

    def evaluate(self, e_i: float, e_j: float) -> float:
        return sum(float(c) * e_i**a * e_j ** (self.degree - a) for a, c in enumerate(self.coefficients))

    def swapped(self) -> "PowerExpansion":
        return PowerExpansion(self.degree, tuple(reversed(self.coefficients)))


@lru_cache(maxsize=None)
def p_power_expansion(m: int) -> PowerExpansion:
    """Expand the angle average of P(v_i, v_j)^m by the multinomial theorem.

    A term (-s^2 e_i)^k (2cs v_i v_j)^h (s^2 e_j)^q survives averaging only for
    even h, where (v_i v_j)^h = e_i^(h/2) e_j^(h/2) and the angle average of
    s^(2k+h+2q) c^h is ``trig_integral(k + q + h/2, h/2)``.
    """
    if not 1 <= m <= MAX_POWER:
        raise DomainError(f"power must lie in 1..{MAX_POWER}, got {m}")
    coeffs = [Fraction(0)] * (m + 1)
    for h in range(0, m + 1, 2):
        for k in range(m - h + 1):
            q = m - h - k
            multinomial = factorial(m) // (factorial(k) * factorial(h) * factorial(q))
            weight = (-1) ** k * 2**h * multinomial * trig_integral(k + q + h // 2, h // 2)
            coeffs[k + h // 2] += weight
    return PowerExpansion(m, tuple(coeffs))


def q_power_expansion(m: int) -> PowerExpansion:
    """Expansion for the energy change of particle j, in the same (e_i, e_j) convention.

    Since the average over theta is invariant under theta -> -theta, the average
    of (-P(v_i, v_j))^m equals the average of P(v_j, v_i)^m, which is the
    expansion with exponents swapped.
    """
    return p_power_expansion(m).swapped()


@lru_cache(maxsize=None)
def c_coeff(ell: int, a: int) -> Fraction:
    """Closed-form coefficient of e_i^a e_j^(ell-a) in the angle average of P^ell."""
    if ell < 1:
        raise DomainError(f"ell must be positive, got {ell}")
    if not 0 <= a <= ell:
        raise DomainError(f"a must lie in 0..{ell}, got {a}")
    total = Fraction(0)
    for l1 in range(max(0, 2 * a - ell), a + 1):
        num = (-1) ** l1 * factorial(2 * ell + 2 * l1 - 2 * a)
        den = factorial(ell + l1 - 2 * a) * factorial(l1) * factorial(a - l1) * factorial(ell - a + l1)
        total += Fraction(num, den) * Fraction(2) ** (2 * a - 2 * l1 - 2 * ell)
    return total


def a_n_coeff(n: int) -> Fraction:
    """Decay coefficient 2(1 - 2 I_{n,0}) of the n-th one-particle cumulant."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return 2 * (1 - 2 * Fraction(comb(2 * n, n), 4**n))


def beta_coeff(n: int, N: int) -> Fraction:
    """Coupling (3/2)(N+1-n)/(N-1) of the non-repeated cumulant into the (2,1,...,1) row."""
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    if n > N:
        raise DomainError(f"order {n} exceeds the particle count {N}")
    return Fraction(3, 2) * Fraction(N + 1 - n, N - 1)
