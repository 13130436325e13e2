"""Stored figure encodings and the two transformations built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

from .congruence import CoveringSystem, audit_moduli, dedupe, normalize, shift_system
from .intmath import NotCoprime, is_prime, mod_inverse
from .treedsl import ExpansionParams, InvalidParams, TreeDoc, expand_full, parse_doc, validate_doc
from .verifier import verify_recursive

__all__ = [
    "FIGURE_IDS",
    "UnknownFigure",
    "PostconditionFailed",
    "MissingRepeatedModulus",
    "SplitSpec",
    "builtin_doc",
    "build_figure",
    "split_covering",
    "subset_covering_mod9",
]

FIGURE_IDS = (
    "thm_p_minus_5",
    "thm_9_times_3",
    "thm_15_times_4",
    "thm_21_times_5",
    "thm_25_times_8",
)


class UnknownFigure(KeyError):
    pass


class PostconditionFailed(AssertionError):
    """A built figure failed its own coverage or modulus audit."""


class MissingRepeatedModulus(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    k: int
    m: int
    variant: str = "general"

    def __post_init__(self):
        if self.variant not in ("general", "coprime"):
            raise ValueError(f"unknown split variant {self.variant!r}")
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError("k must be odd and at least 3")
        if self.m < 2 or self.m % 2 == 0:
            raise ValueError("m must be odd and at least 2")
        if self.variant == "coprime" and math.gcd(self.k, self.m) != 1:
            raise NotCoprime(f"gcd({self.k}, {self.m}) != 1")


def builtin_doc(figure_id: str) -> TreeDoc:
    if figure_id not in FIGURE_IDS:
        raise UnknownFigure(figure_id)
    text = resources.files("oddcover").joinpath("figures", f"{figure_id}.cov").read_text("utf-8")
    doc = parse_doc(text)
    problems = validate_doc(doc)
    if problems:
        raise PostconditionFailed(f"stored figure {figure_id} is invalid: {problems[0]}")
    return doc


def _bindings(doc: TreeDoc, bindings: Mapping[str, int] | None) -> dict[str, int]:
    env = dict(bindings or {})
    if "P" in doc.symbol_params:
        P = env.get("P")
        if P is None:
            raise InvalidParams("this figure needs a prime P >= 17")
        if P < 17 or not is_prime(P):
            raise InvalidParams(f"P = {P} must be a prime >= 17")
    return env


def build_figure(
    figure_id: str,
    bindings: Mapping[str, int] | None = None,
    q: int | None = None,
    *,
    limit: int | None = None,
) -> CoveringSystem:
    """Expand, mop up and deduplicate a stored figure, then check it.

    The result is verified with the recursive verifier and audited before
    it is returned; any failure raises PostconditionFailed.
    """
    doc = builtin_doc(figure_id)
    env = _bindings(doc, bindings)
    exp = expand_full(doc, ExpansionParams(q, env), limit=limit)
    system = dedupe(exp.system)
    result = verify_recursive(system)
    if not result.covers:
        raise PostconditionFailed(f"{figure_id}: {result.witness} is uncovered")
    audit = audit_moduli(system)
    if not audit.ok or audit.k_count != exp.t:
        raise PostconditionFailed(
            f"{figure_id}: modulus {exp.k} used {audit.k_count} times (want {exp.t}); "
            f"offending {audit.offending[:5]}"
        )
    if "P" in doc.symbol_params and exp.k**2 in audit.multiplicities:
        raise PostconditionFailed(f"{figure_id}: {exp.k ** 2} appears as a modulus")
    return system


def split_covering(s: CoveringSystem, spec: SplitSpec) -> tuple[CoveringSystem, int]:
    """Trade t copies of k for copies of k*m.

    Returns the new system (declared modulus k*m) and how often k*m occurs
    in it.
    """
    k, m = spec.k, spec.m
    km = k * m
    if not any(c.modulus == k for c in s.congruences):
        raise MissingRepeatedModulus(f"no congruence has modulus {k}")
    if spec.variant == "coprime":
        zero = next((c for c in s.congruences if c.modulus == m), None)
        if zero is not None:
            s = shift_system(s, -zero.residue)
    s = dedupe(s)
    ks = [c for c in s.congruences if c.modulus == k]
    if s.declared_t is not None and s.declared_k == k and len(ks) > s.declared_t:
        raise ValueError(f"modulus {k} occurs {len(ks)} times, more than declared {s.declared_t}")
    out = []
    for c in s.congruences:
        if c.modulus != k or c is ks[-1]:
            out.append(c)
            continue
        if spec.variant == "general":
            out.extend(normalize(k * j + c.residue, km) for j in range(m))
        else:
            skip = (-mod_inverse(k, m) * c.residue) % m
            out.extend(normalize(k * j + c.residue, km) for j in range(m) if j != skip)
    if spec.variant == "coprime":
        out.append(normalize(0, m))
    result = dedupe(CoveringSystem(out, km, None))
    achieved = sum(c.modulus == km for c in result.congruences)
    return CoveringSystem(result.congruences, km, achieved), achieved


def subset_covering_mod9(
    j: int,
    exceptions: Iterable[int] = (),
    base: CoveringSystem | None = None,
    q: int | None = None,
) -> CoveringSystem:
    """Odd covering of the integers outside {j-3, j+3 mod 9}, plus exceptions.

    ``base`` defaults to the built three-nines figure; any covering whose
    only repeated modulus is 9, used on a class c, c+3, c+6, works.
    """
    if base is None:
        base = build_figure("thm_9_times_3", q=q)
    nines = sorted(c.residue for c in base.congruences if c.modulus == 9)
    if len(nines) != 3 or {(r - nines[0]) % 9 for r in nines} != {0, 3, 6}:
        raise ValueError("base must use modulus 9 exactly on a class c, c+3, c+6")
    shifted = shift_system(base, (j - nines[0]) % 3)
    keep = [c for c in shifted.congruences if c.modulus != 9 or c.residue == j % 9]
    M = max(c.modulus for c in keep)
    extra = [normalize(a, M + 2 * ell) for ell, a in enumerate(exceptions, start=1)]
    return CoveringSystem(keep + extra, None, None)
