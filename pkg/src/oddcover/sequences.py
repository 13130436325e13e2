"""Seven integer sequences, their residues, and a subset-coverage check."""

from __future__ import annotations

from math import isqrt
from typing import Iterable

import numpy as np

from .congruence import CoveringSystem
from .verifier import covers_subset

__all__ = [
    "SEQUENCE_IDS",
    "MERSENNE_EXPONENTS",
    "generate",
    "derangement_mod",
    "attainable_residues",
    "in_S",
    "in_S_j",
    "touchard_ok",
    "union_covering_check",
]

SEQUENCE_IDS = (
    "two_squares",
    "two_cubes",
    "powerful",
    "prime_powers",
    "derangements",
    "fermat",
    "perfect",
)

MERSENNE_EXPONENTS = (2, 3, 5, 7, 13, 17, 19, 31)


def _icbrt(n: int) -> int:
    r = round(n ** (1 / 3))
    while r**3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return r


def _two_squares(limit: int) -> list[int]:
    hit = np.zeros(limit + 1, dtype=bool)
    for x in range(isqrt(limit) + 1):
        ys = np.arange(x, isqrt(limit - x * x) + 1, dtype=np.int64)
        hit[x * x + ys * ys] = True
    return np.flatnonzero(hit).tolist()


def _two_cubes(limit: int) -> list[int]:
    hit = np.zeros(limit + 1, dtype=bool)
    for x in range(_icbrt(limit) + 1):
        ys = np.arange(x, _icbrt(limit - x**3) + 1, dtype=np.int64)
        hit[x**3 + ys**3] = True
    return np.flatnonzero(hit).tolist()


def _powerful(limit: int) -> list[int]:
    # every powerful number is a^2 b^3
    found = set()
    for b in range(1, _icbrt(limit) + 1):
        b3 = b**3
        for a in range(1, isqrt(limit // b3) + 1):
            found.add(a * a * b3)
    return sorted(found)


def _primes(limit: int) -> np.ndarray:
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    return np.flatnonzero(sieve)


def _prime_powers(limit: int) -> list[int]:
    out = [1]
    for p in _primes(limit).tolist():
        n = p
        while n <= limit:
            out.append(n)
            n *= p
    return sorted(out)


def _derangements(limit: int) -> list[int]:
    found = set()
    d, n = 1, 0
    while d <= limit or n < 3:
        if d <= limit:
            found.add(d)
        n += 1
        d = n * d + (-1) ** n
    return sorted(found)


def _fermat(limit: int) -> list[int]:
    out = []
    a = 1
    while 2 ** (2**a) + 1 <= limit:
        out.append(2 ** (2**a) + 1)
        a += 1
    return out


def _perfect(limit: int) -> list[int]:
    return [v for p in MERSENNE_EXPONENTS if (v := 2 ** (p - 1) * (2**p - 1)) <= limit]


_GENERATORS = {
    "two_squares": _two_squares,
    "two_cubes": _two_cubes,
    "powerful": _powerful,
    "prime_powers": _prime_powers,
    "derangements": _derangements,
    "fermat": _fermat,
    "perfect": _perfect,
}


def generate(seq_id: str, limit: int) -> list[int]:
    """Sorted members of a sequence up to ``limit`` inclusive."""
    if seq_id not in _GENERATORS:
        raise KeyError(f"unknown sequence {seq_id!r}")
    if limit < 0:
        raise ValueError("limit must be nonnegative")
    return _GENERATORS[seq_id](limit)


def derangement_mod(n: int, m: int) -> int:
    if m < 1:
        raise ValueError("modulus must be positive")
    d = 1 % m
    for i in range(1, n + 1):
        d = (i * d + (-1) ** i) % m
    return d


def attainable_residues(seq_id: str, modulus: int, limit: int) -> set[int]:
    if modulus < 1:
        raise ValueError("modulus must be positive")
    return {x % modulus for x in generate(seq_id, limit)}


def in_S(a: int) -> bool:
    return a % 3 != 0 or a % 9 == 0


def in_S_j(a: int, j: int) -> bool:
    return (a - j) % 9 in (3, 6)


def touchard_ok(n: int) -> bool:
    """Necessary residue condition for an odd perfect number."""
    return n % 12 == 1 or n % 36 == 9


def union_covering_check(
    limit: int,
    cover: CoveringSystem | None = None,
    sequences: Iterable[str] = SEQUENCE_IDS,
) -> dict:
    """Check that one odd subset covering handles every listed sequence.

    Members outside S become exceptions of the covering. When ``cover`` is
    None it is built from the three-nines figure with those exceptions.
    Violations are reported, never raised.
    """
    members = {sid: generate(sid, limit) for sid in sequences}
    union = sorted(set().union(*members.values())) if members else []
    exceptions = [x for x in union if not in_S(x)]
    if cover is None:
        from .constructions import subset_covering_mod9

        cover = subset_covering_mod9(0, exceptions)
    missed = set(covers_subset(cover, union))
    return {
        "limit": limit,
        "exceptions": exceptions,
        "union_size": len(union),
        "sequences": {
            sid: {
                "count": len(xs),
                "residues_mod9": sorted({x % 9 for x in xs}),
                "violations": [x for x in xs if x in missed],
            }
            for sid, xs in members.items()
        },
        "violations": sorted(missed),
    }
