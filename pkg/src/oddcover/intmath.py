"""Exact integer primitives: gcd/lcm, inverses, CRT, primality, factoring.

Python's ``int`` is the unbounded natural and ``fractions.Fraction`` the
exact rational; this module only adds the number-theoretic operations.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

__all__ = [
    "Fraction",
    "NotCoprime",
    "FactorizationTooHard",
    "gcd_lcm",
    "mod_inverse",
    "crt_pair",
    "is_prime",
    "next_usable_prime",
    "factorize",
    "valuation",
    "small_primes",
]

TRIAL_LIMIT = 10**6
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class NotCoprime(ValueError):
    """Raised when an inverse is requested for a non-unit."""


class FactorizationTooHard(ArithmeticError):
    """Raised when Pollard rho gives up on a large cofactor."""


def _sieve(limit: int) -> list[int]:
    flags = bytearray([1]) * (limit + 1)
    flags[0:2] = b"\x00\x00"
    for i in range(2, math.isqrt(limit) + 1):
        if flags[i]:
            flags[i * i :: i] = bytearray(len(range(i * i, limit + 1, i)))
    return [i for i, f in enumerate(flags) if f]


_PRIMES: list[int] | None = None


def small_primes() -> list[int]:
    """All primes below 10**6, computed once."""
    global _PRIMES
    if _PRIMES is None:
        _PRIMES = _sieve(TRIAL_LIMIT)
    return _PRIMES


def gcd_lcm(a: int, b: int) -> tuple[int, int]:
    if a < 0 or b < 0:
        raise ValueError("gcd_lcm expects nonnegative integers")
    g = math.gcd(a, b)
    if a == 0 or b == 0:
        return g, 0
    return g, a // g * b


def mod_inverse(a: int, m: int) -> int:
    if m < 1:
        raise ValueError("modulus must be positive")
    if m == 1:
        return 0
    if math.gcd(a, m) != 1:
        raise NotCoprime(f"{a} is not invertible modulo {m}")
    return pow(a, -1, m)


def crt_pair(r1: int, m1: int, r2: int, m2: int) -> tuple[int, int] | None:
    """Intersect r1 mod m1 with r2 mod m2; None when disjoint."""
    g = math.gcd(m1, m2)
    diff = r2 - r1
    if diff % g:
        return None
    l = m1 // g * m2
    if g == m2:
        return r1 % l, l
    if g == m1:
        return r2 % l, l
    n2 = m2 // g
    t = (diff // g) * pow(m1 // g, -1, n2) % n2
    return (r1 + m1 * t) % l, l


def _miller_rabin(n: int, bases) -> bool:
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in bases:
        if a % n == 0:
            continue
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def is_prime(n: int) -> bool:
    # the fixed base set is deterministic below 3.3e24, well past 2**64
    if n < 2:
        return False
    if n < TRIAL_LIMIT:
        for p in small_primes():
            if p * p > n:
                return True
            if n % p == 0:
                return n == p
        return True
    for p in _MR_BASES:
        if n % p == 0:
            return False
    return _miller_rabin(n, _MR_BASES)


def next_usable_prime(lower_bound: int, excluded=()) -> int:
    excluded = set(excluded)
    n = max(lower_bound + 1, 2)
    while not is_prime(n) or n in excluded:
        n += 1
    return n


def valuation(n: int, p: int) -> int:
    """Exponent of p in n (n != 0)."""
    if n == 0:
        raise ValueError("valuation of zero is undefined")
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def _pollard_rho(n: int, rng: random.Random, budget: int) -> int | None:
    if n % 2 == 0:
        return 2
    for _ in range(8):
        c = rng.randrange(1, n)
        y = rng.randrange(0, n)
        m, g, r, q = 128, 1, 1, 1
        steps = 0
        x = ys = y
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
            steps += r
            if steps > budget:
                break
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = math.gcd(abs(x - ys), n)
        if 1 < g < n:
            return g
    return None


def factorize(n: int, rho_budget: int = 1 << 22) -> list[tuple[int, int]]:
    """Prime factorization as [(p, e), ...] with p increasing."""
    if n < 1:
        raise ValueError("factorize expects n >= 1")
    out: dict[int, int] = {}
    for p in small_primes():
        if p * p > n:
            break
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out[p] = e
    if n > 1:
        rng = random.Random(n)
        stack = [n]
        while stack:
            m = stack.pop()
            if m == 1:
                continue
            if is_prime(m):
                out[m] = out.get(m, 0) + 1
                continue
            r = math.isqrt(m)
            if r * r == m:
                stack += [r, r]
                continue
            d = _pollard_rho(m, rng, rho_budget)
            if d is None:
                raise FactorizationTooHard(f"could not split {m}")
            stack += [d, m // d]
    return sorted(out.items())
