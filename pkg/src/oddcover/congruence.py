"""Congruences, residue classes, covering systems and their audits."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .intmath import crt_pair

__all__ = [
    "ZeroModulus",
    "Congruence",
    "ResidueClass",
    "CoveringSystem",
    "ModulusAudit",
    "normalize",
    "intersect_class",
    "congruence_contains_class",
    "shift_system",
    "audit_moduli",
    "dedupe",
    "density_sum",
    "system_to_json",
    "system_from_json",
    "dump_system",
    "load_system",
]


class ZeroModulus(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Congruence:
    residue: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 1:
            raise ZeroModulus(f"modulus must be >= 1, got {self.modulus}")
        if not 0 <= self.residue < self.modulus:
            raise ValueError(f"residue {self.residue} not reduced mod {self.modulus}")

    def __contains__(self, x: int) -> bool:
        return x % self.modulus == self.residue

    def __str__(self):
        return f"{self.residue} mod {self.modulus}"


@dataclass(frozen=True, slots=True)
class ResidueClass:
    representative: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 1:
            raise ZeroModulus(f"modulus must be >= 1, got {self.modulus}")
        if not 0 <= self.representative < self.modulus:
            raise ValueError(
                f"representative {self.representative} not reduced mod {self.modulus}"
            )

    @property
    def density(self) -> Fraction:
        return Fraction(1, self.modulus)

    def __contains__(self, x: int) -> bool:
        return x % self.modulus == self.representative

    def __str__(self):
        return f"{self.representative} mod {self.modulus}"


@dataclass(frozen=True)
class CoveringSystem:
    """Ordered congruences plus the declared repeated modulus and its count.

    Equality ignores order (multiset of (residue, modulus) pairs and the
    declarations); the stored order is kept for serialization.
    """

    congruences: tuple[Congruence, ...]
    declared_k: int | None = None
    declared_t: int | None = None

    def __init__(self, congruences: Iterable = (), declared_k=None, declared_t=None):
        items = []
        for c in congruences:
            if not isinstance(c, Congruence):
                r, m = c
                c = normalize(r, m)
            items.append(c)
        object.__setattr__(self, "congruences", tuple(items))
        object.__setattr__(self, "declared_k", declared_k)
        object.__setattr__(self, "declared_t", declared_t)

    def __len__(self):
        return len(self.congruences)

    def __iter__(self):
        return iter(self.congruences)

    def __eq__(self, other):
        if not isinstance(other, CoveringSystem):
            return NotImplemented
        return (
            self.declared_k == other.declared_k
            and self.declared_t == other.declared_t
            and Counter(self.pairs()) == Counter(other.pairs())
        )

    def __hash__(self):
        return hash((frozenset(Counter(self.pairs()).items()), self.declared_k, self.declared_t))

    def pairs(self) -> list[tuple[int, int]]:
        return [(c.residue, c.modulus) for c in self.congruences]

    def moduli(self) -> list[int]:
        return [c.modulus for c in self.congruences]

    def covers(self, x: int) -> bool:
        return any(x % c.modulus == c.residue for c in self.congruences)

    def with_congruences(self, congruences) -> "CoveringSystem":
        return CoveringSystem(congruences, self.declared_k, self.declared_t)


@dataclass(frozen=True)
class ModulusAudit:
    multiplicities: dict[int, int]
    all_odd: bool
    all_greater_than_one: bool
    repeated_ok: bool
    k_count: int
    offending: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.all_odd and self.all_greater_than_one and self.repeated_ok

    def to_dict(self) -> dict:
        return {
            "congruences": sum(self.multiplicities.values()),
            "distinct_moduli": len(self.multiplicities),
            "all_odd": self.all_odd,
            "all_greater_than_one": self.all_greater_than_one,
            "repeated_ok": self.repeated_ok,
            "k_count": self.k_count,
            "offending": [[str(m), n] for m, n in self.offending],
        }


def normalize(residue: int, modulus: int) -> Congruence:
    if modulus < 1:
        raise ZeroModulus(f"modulus must be >= 1, got {modulus}")
    return Congruence(residue % modulus, modulus)


def intersect_class(a: ResidueClass, b: ResidueClass) -> ResidueClass | None:
    hit = crt_pair(a.representative, a.modulus, b.representative, b.modulus)
    return None if hit is None else ResidueClass(*hit)


def congruence_contains_class(c: Congruence, x: ResidueClass) -> bool:
    return x.modulus % c.modulus == 0 and x.representative % c.modulus == c.residue


def shift_system(s: CoveringSystem, j: int) -> CoveringSystem:
    return s.with_congruences(normalize(c.residue + j, c.modulus) for c in s.congruences)


def dedupe(s: CoveringSystem) -> CoveringSystem:
    seen = set()
    kept = []
    for c in s.congruences:
        key = (c.residue, c.modulus)
        if key not in seen:
            seen.add(key)
            kept.append(c)
    if len(kept) == len(s.congruences):
        return s
    return s.with_congruences(kept)


def audit_moduli(s: CoveringSystem, k: int | None = None, t: int | None = None) -> ModulusAudit:
    """Multiset report of the moduli of ``dedupe(s)``.

    ``k``/``t`` override the system's declarations when given.
    """
    k = s.declared_k if k is None else k
    t = s.declared_t if t is None else t
    counts = Counter(c.modulus for c in dedupe(s).congruences)
    k_count = counts.get(k, 0) if k is not None else 0
    offending = sorted((m, n) for m, n in counts.items() if n > 1 and m != k)
    within = t is None or k_count <= t
    return ModulusAudit(
        multiplicities=dict(counts),
        all_odd=all(m % 2 for m in counts),
        all_greater_than_one=all(m > 1 for m in counts),
        repeated_ok=not offending and within,
        k_count=k_count,
        offending=offending,
    )


def density_sum(s: CoveringSystem) -> Fraction:
    return sum((Fraction(1, c.modulus) for c in dedupe(s).congruences), Fraction(0))


# -- JSON interchange -------------------------------------------------------

def system_to_json(s: CoveringSystem) -> dict:
    return {
        "k": None if s.declared_k is None else str(s.declared_k),
        "t": s.declared_t,
        "congruences": [{"r": str(c.residue), "m": str(c.modulus)} for c in s.congruences],
    }


def system_from_json(doc: dict) -> CoveringSystem:
    if not isinstance(doc, dict) or "congruences" not in doc:
        raise ValueError("covering-system JSON needs a 'congruences' array")
    k = doc.get("k")
    t = doc.get("t")
    items = []
    for entry in doc["congruences"]:
        r, m = int(entry["r"]), int(entry["m"])
        if m < 1:
            raise ZeroModulus(f"modulus must be >= 1, got {m}")
        if not 0 <= r < m:
            raise ValueError(f"residue {r} not reduced mod {m}")
        items.append(Congruence(r, m))
    return CoveringSystem(items, None if k is None else int(k), None if t is None else int(t))


def dump_system(s: CoveringSystem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(system_to_json(s), fh)
        fh.write("\n")


def load_system(path) -> CoveringSystem:
    with open(path, encoding="utf-8") as fh:
        return system_from_json(json.load(fh))
