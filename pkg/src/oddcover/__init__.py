"""Covering systems with distinct odd moduli and one repeated modulus."""

from .congruence import Congruence, CoveringSystem, ResidueClass, audit_moduli, shift_system
from .constructions import build_figure, builtin_doc, split_covering, subset_covering_mod9
from .verifier import Verdict, enumerate_uncovered, verify

__version__ = "0.1.0"

__all__ = [
    "Congruence",
    "CoveringSystem",
    "ResidueClass",
    "Verdict",
    "audit_moduli",
    "build_figure",
    "builtin_doc",
    "enumerate_uncovered",
    "shift_system",
    "split_covering",
    "subset_covering_mod9",
    "verify",
]
