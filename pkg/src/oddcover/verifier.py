"""Decide whether a congruence collection covers the integers.

Two independent routes are provided. The recursive route refines a residue
class one prime at a time and never materialises the lcm of the moduli, so
it handles systems whose lcm has hundreds of digits. The brute-force route
sieves a full period and is only usable when the lcm is small; it exists as
an oracle for the recursive one.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .congruence import CoveringSystem, ResidueClass
from .intmath import factorize

__all__ = [
    "Verdict",
    "CoverageResult",
    "UncoveredReport",
    "LcmOverflow",
    "DEFAULT_BF_THRESHOLD",
    "bf_threshold",
    "verify",
    "verify_recursive",
    "verify_bruteforce",
    "enumerate_uncovered",
    "covers_subset",
]

DEFAULT_BF_THRESHOLD = 10**7


class LcmOverflow(ValueError):
    """The lcm of the moduli exceeds the brute-force threshold."""


class Verdict(enum.Enum):
    COVERS = "Covers"
    UNCOVERED = "Uncovered"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CoverageResult:
    verdict: Verdict
    witness: ResidueClass | None = None

    @property
    def covers(self) -> bool:
        return self.verdict is Verdict.COVERS


@dataclass(frozen=True)
class UncoveredReport:
    classes: list[ResidueClass]
    total_density: Fraction
    complete: bool = True


def bf_threshold(value: int | None = None) -> int:
    """Explicit value, else ODDCOVER_BF_THRESHOLD, else the default."""
    if value is not None:
        return value
    env = os.environ.get("ODDCOVER_BF_THRESHOLD")
    return int(env) if env else DEFAULT_BF_THRESHOLD


def _capped_lcm(moduli: Iterable[int], cap: int) -> int | None:
    l = 1
    for m in set(moduli):
        l = l // math.gcd(l, m) * m
        if l > cap:
            return None
    return l


# -- recursive route --------------------------------------------------------

def _prepare(s: CoveringSystem):
    cache: dict[int, tuple] = {}
    entries = []
    for c in s.congruences:
        rem = cache.get(c.modulus)
        if rem is None:
            rem = cache[c.modulus] = tuple(factorize(c.modulus))
        entries.append((c.residue, rem, c.modulus))
    bound = {}
    for rem in cache.values():
        for p, e in rem:
            bound[p] = max(bound.get(p, 0), e)
    return entries, sum(bound.values())


def _pick_prime(entries):
    """Prime to split on next, or None when some entry already covers.

    Prefers the prime whose split immediately covers the largest share of
    subclasses; failing that, the prime carried by the most density.
    Following the system's own structure this way keeps the search tree
    close to the tree the covering was built from.
    """
    gain: dict[int, int] = {}
    weight: dict[int, float] = {}
    for _, rem, size in entries:
        if not rem:
            return None
        if len(rem) == 1 and rem[0][1] == 1:
            gain[rem[0][0]] = gain.get(rem[0][0], 0) + 1
        w = 1.0 / size
        for p, _ in rem:
            weight[p] = weight.get(p, 0.0) + w
    if gain:
        return max(gain, key=lambda q: (min(gain[q], q) / q, weight[q], -q))
    return max(weight, key=lambda q: (weight[q], -q))


def _step(c: int, M: int, entries):
    """Classify class (c, M) against its active entries.

    Returns ("covered", None), ("leaf", None) or ("split", (p, children)).
    Every entry is known to meet the class; ``rem`` lists the prime powers
    of its modulus not yet absorbed into M and ``size`` their product.
    """
    if not entries:
        return "leaf", None
    p = _pick_prime(entries)
    if p is None:
        return "covered", None
    v = 0
    s = M
    while s % p == 0:
        s //= p
        v += 1
    pv = p**v
    s_inv = pow(s % p, -1, p)
    shared = []
    buckets = [[] for _ in range(p)]
    for ent in entries:
        r, rem, size = ent
        for i, (q, e) in enumerate(rem):
            if q == p:
                break
        else:
            shared.append(ent)
            continue
        u = ((r - c) // pv) * s_inv % p
        if e == 1:
            nrem = rem[:i] + rem[i + 1 :]
        else:
            nrem = rem[:i] + ((p, e - 1),) + rem[i + 1 :]
        buckets[u].append((r, nrem, size // p))
    children = []
    for u in range(p):
        kids = buckets[u] + shared if shared else buckets[u]
        children.append((c + u * M, M * p, kids))
    return "split", (p, children)


def _walk(s: CoveringSystem, collect: bool, cap: int | None = None):
    entries, bound = _prepare(s)
    stack = [(0, 1, entries, 0)]
    found = []
    while stack:
        c, M, ents, depth = stack.pop()
        assert depth <= bound, "recursion depth exceeded the valuation bound"
        kind, payload = _step(c, M, ents)
        if kind == "covered":
            continue
        if kind == "leaf":
            found.append(ResidueClass(c % M, M))
            if not collect or (cap is not None and len(found) > cap):
                return found
            continue
        _, children = payload
        for child_c, child_M, kids in reversed(children):
            stack.append((child_c, child_M, kids, depth + 1))
    return found


def verify_recursive(s: CoveringSystem) -> CoverageResult:
    hit = _walk(s, collect=False)
    if hit:
        return CoverageResult(Verdict.UNCOVERED, hit[0])
    return CoverageResult(Verdict.COVERS)


def enumerate_uncovered(s: CoveringSystem, max_classes: int | None = None) -> UncoveredReport:
    """Disjoint classes making up the uncovered set, sorted by (modulus, rep).

    With ``max_classes`` the walk stops once more than that many classes
    are found; the report is then marked incomplete and its density is a
    lower bound.
    """
    found = _walk(s, collect=True, cap=max_classes)
    complete = max_classes is None or len(found) <= max_classes
    classes = sorted(found, key=lambda x: (x.modulus, x.representative))
    density = sum((x.density for x in classes), Fraction(0))
    return UncoveredReport(classes, density, complete)


# -- brute-force route ------------------------------------------------------

def verify_bruteforce(s: CoveringSystem, threshold: int | None = None) -> CoverageResult:
    threshold = bf_threshold(threshold)
    period = _capped_lcm(s.moduli(), threshold)
    if period is None:
        raise LcmOverflow(f"lcm of moduli exceeds brute-force threshold {threshold}")
    marked = np.zeros(period, dtype=bool)
    for c in s.congruences:
        marked[c.residue :: c.modulus] = True
    holes = np.flatnonzero(~marked)
    if holes.size:
        return CoverageResult(Verdict.UNCOVERED, ResidueClass(int(holes[0]), period))
    return CoverageResult(Verdict.COVERS)


def verify(s: CoveringSystem, mode: str = "auto", threshold: int | None = None) -> CoverageResult:
    if mode == "recursive":
        return verify_recursive(s)
    if mode == "bruteforce":
        return verify_bruteforce(s, threshold)
    if mode != "auto":
        raise ValueError(f"unknown verification mode {mode!r}")
    threshold = bf_threshold(threshold)
    if _capped_lcm(s.moduli(), threshold) is not None:
        return verify_bruteforce(s, threshold)
    return verify_recursive(s)


def covers_subset(s: CoveringSystem, elements: Iterable[int]) -> list[int]:
    """Elements satisfying none of the congruences, in input order."""
    elements = list(elements)
    if not elements:
        return []
    by_mod: dict[int, set[int]] = {}
    for c in s.congruences:
        by_mod.setdefault(c.modulus, set()).add(c.residue)
    lo, hi = min(elements), max(elements)
    small = -(2**62) < lo and hi < 2**62
    if small:
        xs = np.asarray(elements, dtype=np.int64)
        hit = np.zeros(len(xs), dtype=bool)
        for m, residues in by_mod.items():
            if m < 2**62:
                hit |= np.isin(xs % m, np.fromiter(residues, dtype=np.int64))
            else:
                for i, x in enumerate(elements):
                    if not hit[i] and x % m in residues:
                        hit[i] = True
        return [x for x, h in zip(elements, hit) if not h]
    return [x for x in elements if not any(x % m in rs for m, rs in by_mod.items())]
