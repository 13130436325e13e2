"""Command-line front end.

Exit codes: 0 success, 1 a negative verdict (uncovered, failed audit,
sequence violations), 2 usage, parse, parameter or I/O errors. Reports go
to stdout as JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .congruence import audit_moduli, dedupe, dump_system, load_system, shift_system
from .constructions import (
    FIGURE_IDS,
    PostconditionFailed,
    SplitSpec,
    build_figure,
    split_covering,
    subset_covering_mod9,
)
from .intmath import NotCoprime
from .sequences import SEQUENCE_IDS, attainable_residues, union_covering_check
from .treedsl import (
    ExpansionParams,
    ExpansionTooLarge,
    ParseError,
    expand_full,
    parse_doc,
    validate_doc,
)
from .verifier import LcmOverflow, bf_threshold, verify


def _out(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _bindings(args) -> dict:
    return {"P": args.P} if args.P is not None else {}


def cmd_expand(args) -> int:
    if args.figure:
        system = build_figure(args.figure, _bindings(args), args.q)
        info = {"figure": args.figure}
    else:
        with open(args.file, encoding="utf-8") as fh:
            doc = parse_doc(fh.read())
        exp = expand_full(doc, ExpansionParams(args.q, _bindings(args)))
        system = dedupe(exp.system)
        info = {"file": args.file, "q": exp.q, "leftovers": len(exp.leftovers)}
    dump_system(system, args.out)
    audit = audit_moduli(system)
    info.update(congruences=len(system), k=str(system.declared_k), k_count=audit.k_count)
    _out(info)
    return 0


def cmd_verify(args) -> int:
    system = load_system(args.file)
    result = verify(system, args.mode, bf_threshold(args.bf_threshold))
    report = {"verdict": str(result.verdict)}
    if not result.covers and args.witness:
        report["witness"] = str(result.witness)
    _out(report)
    return 0 if result.covers else 1


def cmd_audit(args) -> int:
    system = load_system(args.file)
    audit = audit_moduli(system, args.k, args.t)
    report = audit.to_dict()
    passed = audit.ok and (args.t is None or audit.k_count == args.t)
    report["pass"] = passed
    _out(report)
    return 0 if passed else 1


def cmd_shift(args) -> int:
    dump_system(shift_system(load_system(args.file), args.by), args.out)
    return 0


def cmd_split(args) -> int:
    system = load_system(args.file)
    result, achieved = split_covering(system, SplitSpec(args.k, args.m, args.variant))
    dump_system(result, args.out)
    _out({"modulus": str(args.k * args.m), "multiplicity": achieved, "congruences": len(result)})
    return 0


def cmd_subset_cover(args) -> int:
    base = load_system(args.base) if args.base else None
    system = subset_covering_mod9(args.j, args.exceptions, base=base, q=args.q)
    dump_system(system, args.out)
    _out({"j": args.j, "exceptions": args.exceptions, "congruences": len(system)})
    return 0


def cmd_seq_check(args) -> int:
    cover = load_system(args.cover)
    report = union_covering_check(args.limit, cover, args.sequences)
    _out(report)
    return 1 if report["violations"] else 0


def cmd_seq_residues(args) -> int:
    _out(sorted(attainable_residues(args.sequence, args.mod, args.limit)))
    return 0


def cmd_validate(args) -> int:
    with open(args.file, encoding="utf-8") as fh:
        doc = parse_doc(fh.read())
    problems = validate_doc(doc)
    _out([{"code": d.code, "message": d.message, "line": d.line, "col": d.col} for d in problems])
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oddcover", description="Odd covering systems toolkit.")
    parser.add_argument("--bf-threshold", type=int, default=None, help="largest lcm sieved directly")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="build a covering from a stored figure or a DSL file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--figure", choices=FIGURE_IDS)
    src.add_argument("--file")
    p.add_argument("--q", type=int)
    p.add_argument("--P", type=int)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_expand)

    threshold = argparse.ArgumentParser(add_help=False)
    threshold.add_argument("--bf-threshold", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("verify", parents=[threshold], help="decide coverage of a JSON system")
    p.add_argument("file")
    p.add_argument("--mode", choices=("auto", "recursive", "bruteforce"), default="auto")
    p.add_argument("--witness", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("audit", help="check moduli are odd, > 1 and distinct apart from k")
    p.add_argument("file")
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=int)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("shift", help="add j to every residue")
    p.add_argument("file")
    p.add_argument("--by", type=int, required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("split", help="trade copies of k for copies of k*m")
    p.add_argument("file")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--variant", choices=("general", "coprime"), default="general")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("subset-cover", help="covering of the integers outside j+-3 mod 9")
    p.add_argument("--j", type=int, required=True, choices=range(9))
    p.add_argument("--exceptions", type=int, nargs="*", default=[])
    p.add_argument("--base", help="JSON system to use instead of the three-nines figure")
    p.add_argument("--q", type=int)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_subset_cover)

    p = sub.add_parser("seq-check", help="check a covering against sequence members")
    p.add_argument("cover")
    p.add_argument("--sequences", nargs="+", choices=SEQUENCE_IDS, default=list(SEQUENCE_IDS))
    p.add_argument("--limit", type=int, required=True)
    p.set_defaults(func=cmd_seq_check)

    p = sub.add_parser("seq-residues", help="residues attained by a sequence")
    p.add_argument("--sequence", choices=SEQUENCE_IDS, required=True)
    p.add_argument("--mod", type=int, required=True)
    p.add_argument("--limit", type=int, required=True)
    p.set_defaults(func=cmd_seq_residues)

    p = sub.add_parser("validate", help="static checks on a DSL file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        return args.func(args)
    except PostconditionFailed as exc:
        print(f"oddcover: {exc}", file=sys.stderr)
        return 1
    except (ParseError, OSError, ValueError, KeyError, LcmOverflow, ExpansionTooLarge, NotCoprime) as exc:
        print(f"oddcover: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
