"""Tree-diagram documents: parsing, validation and expansion into congruences.

A document describes a covering as a tree. Each node splits the current
residue class by a prime ``p`` into ``p`` subclasses, and each subclass
(a *slot*) is handed to one branch:

* ``leaf`` / ``rep`` / ``wedge`` slots emit one congruence each,
* a nested ``node`` refines its slot further,
* an ``arrow`` slot re-expands the node's own branch list one ``p``-level
  deeper, with every label whose ``p``-part reaches the node's level raised
  by one more factor of ``p``. The chain stops at ``p^(q-1)``, and the
  slot left at the bottom is recorded as a leftover class.

Leftovers are covered afterwards by :func:`mop_up`.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import math
import os
import re
import sys
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Iterator, Mapping, Union

from .congruence import Congruence, CoveringSystem, ResidueClass
from .intmath import crt_pair, factorize, is_prime, next_usable_prime, valuation

__all__ = [
    "ParseError",
    "UnknownSymbol",
    "UnboundSymbol",
    "SlotCountMismatch",
    "NonDividingModulus",
    "DuplicateModulus",
    "AssignmentInfeasible",
    "MopUpCollision",
    "InvalidParams",
    "ExpansionTooLarge",
    "Sym",
    "Pow",
    "BinOp",
    "SetGroup",
    "PowerGroup",
    "Leaf",
    "Rep",
    "Wedge",
    "Arrow",
    "Node",
    "TreeDoc",
    "Diagnostic",
    "LeftoverClass",
    "ExpansionParams",
    "Expansion",
    "parse_doc",
    "validate_doc",
    "wedge_moduli",
    "figure_primes",
    "default_q",
    "estimate_expansion",
    "expand",
    "expand_full",
    "assign_classes",
    "mop_up",
]


# -- errors -----------------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class UnknownSymbol(ParseError):
    pass


class UnboundSymbol(KeyError):
    def __str__(self):
        return f"symbol {self.args[0]!r} has no binding"


class SlotCountMismatch(ValueError):
    pass


class NonDividingModulus(ValueError):
    pass


class DuplicateModulus(ValueError):
    pass


class AssignmentInfeasible(ValueError):
    pass


class MopUpCollision(ValueError):
    pass


class InvalidParams(ValueError):
    pass


class ExpansionTooLarge(MemoryError):
    def __init__(self, estimate: int, limit: int):
        super().__init__(
            f"expansion would emit about {estimate:,} congruences, over the limit of {limit:,}"
            " (raise ODDCOVER_MAX_CONGRUENCES to try anyway)"
        )
        self.estimate = estimate
        self.limit = limit


# -- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exp: int


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[int, Sym, Pow, BinOp]


def evaluate(expr: Expr, bindings: Mapping[str, int]) -> int:
    if isinstance(expr, int):
        return expr
    if isinstance(expr, Sym):
        try:
            return bindings[expr.name]
        except KeyError:
            raise UnboundSymbol(expr.name) from None
    if isinstance(expr, Pow):
        return evaluate(expr.base, bindings) ** expr.exp
    a, b = evaluate(expr.left, bindings), evaluate(expr.right, bindings)
    return {"+": a + b, "-": a - b, "*": a * b}[expr.op]


def _product(factors, bindings) -> int:
    return reduce(lambda acc, f: acc * evaluate(f, bindings), factors, 1)


@dataclass(frozen=True)
class SetGroup:
    members: tuple


@dataclass(frozen=True)
class PowerGroup:
    base: Expr
    alpha: int


@dataclass(frozen=True)
class Leaf:
    factors: tuple
    pin: Expr | None = None


@dataclass(frozen=True)
class Rep:
    factors: tuple
    count: Expr


@dataclass(frozen=True)
class Wedge:
    groups: tuple
    base: tuple
    take: Expr | None = None


@dataclass(frozen=True)
class Arrow:
    pass


@dataclass(eq=False)
class Node:
    prime: Expr
    branches: list
    line: int = 0
    col: int = 0


@dataclass(eq=False)
class TreeDoc:
    id: str
    q_min: int
    symbol_params: list[str]
    k_expr: Expr
    t_expr: Expr
    root: Node


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}: {self.code}: {self.message}"


# -- tokenizer and reader ---------------------------------------------------

_TOKEN = re.compile(r'\s+|;[^\n]*|(?P<open>\()|(?P<close>\))|(?P<str>"[^"\n]*")|(?P<atom>[^\s()";]+)')


@dataclass(frozen=True)
class Tok:
    text: str
    line: int
    col: int
    quoted: bool = False


def _tokenize(text: str) -> list[Tok]:
    out = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        col = pos - line_start + 1
        kind = m.lastgroup
        if kind == "str":
            out.append(Tok(m.group()[1:-1], line, col, quoted=True))
        elif kind is not None:
            out.append(Tok(m.group(), line, col))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    return out


def _read(tokens: list[Tok]):
    """Nest tokens into lists; each list is (Tok_of_open_paren, items)."""
    stack = [(None, [])]
    for tok in tokens:
        if tok.text == "(" and not tok.quoted:
            stack.append((tok, []))
        elif tok.text == ")" and not tok.quoted:
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", tok.line, tok.col)
            opener, items = stack.pop()
            stack[-1][1].append((opener, items))
        else:
            stack[-1][1].append(tok)
    if len(stack) > 1:
        opener = stack[-1][0]
        raise ParseError("unclosed '('", opener.line, opener.col)
    return stack[0][1]


class _Builder:
    def __init__(self):
        self.params: set[str] = set()

    @staticmethod
    def _where(x):
        return (x[0].line, x[0].col) if isinstance(x, tuple) else (x.line, x.col)

    def fail(self, x, message):
        raise ParseError(message, *self._where(x))

    def head(self, x) -> str | None:
        if isinstance(x, tuple) and x[1] and isinstance(x[1][0], Tok):
            return x[1][0].text
        return None

    def int_(self, x) -> int:
        if isinstance(x, Tok) and re.fullmatch(r"-?\d+", x.text):
            return int(x.text)
        self.fail(x, "expected an integer")

    def symbol(self, tok: Tok) -> Sym:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok.text):
            self.fail(tok, f"bad token {tok.text!r}")
        if tok.text not in self.params:
            raise UnknownSymbol(f"undeclared symbol {tok.text!r}", tok.line, tok.col)
        return Sym(tok.text)

    def factor(self, x) -> Expr:
        if isinstance(x, Tok):
            if re.fullmatch(r"\d+", x.text):
                return int(x.text)
            return self.symbol(x)
        items = x[1]
        if self.head(x) == "^" and len(items) == 3:
            return Pow(self.factor(items[1]), self.int_(items[2]))
        self.fail(x, "expected a factor: INT, SYMBOL or (^ factor INT)")

    def count(self, x) -> Expr:
        if isinstance(x, Tok):
            return self.factor(x)
        items = x[1]
        op = self.head(x)
        if op in ("+", "-", "*") and len(items) == 3:
            return BinOp(op, self.count(items[1]), self.count(items[2]))
        self.fail(x, "expected a count expression")

    def keyword_args(self, items, allowed):
        """Split items into positional ones and ':key value' pairs."""
        pos, kw = [], {}
        i = 0
        while i < len(items):
            it = items[i]
            if isinstance(it, Tok) and not it.quoted and (it.text.startswith(":") or it.text.startswith("@")):
                if it.text not in allowed:
                    self.fail(it, f"unexpected keyword {it.text}")
                if it.text in kw:
                    self.fail(it, f"duplicate keyword {it.text}")
                if i + 1 >= len(items):
                    self.fail(it, f"missing value after {it.text}")
                if it.text == ":base":
                    j = i + 1
                    vals = []
                    while j < len(items) and not (
                        isinstance(items[j], Tok) and items[j].text[:1] in (":", "@")
                    ):
                        vals.append(items[j])
                        j += 1
                    kw[it.text] = vals
                    i = j
                    continue
                kw[it.text] = items[i + 1]
                i += 2
                continue
            pos.append(it)
            i += 1
        return pos, kw

    def branch(self, x):
        if not isinstance(x, tuple):
            self.fail(x, "expected a parenthesised branch")
        head = self.head(x)
        items = x[1][1:]
        if head == "node":
            return self.node(x)
        if head == "arrow":
            if items:
                self.fail(x, "arrow takes no arguments")
            return Arrow()
        if head == "leaf":
            pos, kw = self.keyword_args(items, {"@pin"})
            if not pos:
                self.fail(x, "leaf needs at least one factor")
            pin = self.count(kw["@pin"]) if "@pin" in kw else None
            return Leaf(tuple(self.factor(f) for f in pos), pin)
        if head == "rep":
            pos, kw = self.keyword_args(items, {":count"})
            if not pos or ":count" not in kw:
                self.fail(x, "rep needs factors and :count")
            return Rep(tuple(self.factor(f) for f in pos), self.count(kw[":count"]))
        if head == "wedge":
            pos, kw = self.keyword_args(items, {":base", ":take"})
            if ":base" not in kw or not kw[":base"]:
                self.fail(x, "wedge needs :base")
            groups = tuple(self.group(g) for g in pos)
            take = self.count(kw[":take"]) if ":take" in kw else None
            return Wedge(groups, tuple(self.factor(f) for f in kw[":base"]), take)
        self.fail(x, f"unknown branch kind {head!r}")

    def group(self, x):
        head = self.head(x)
        if head == "set":
            members = x[1][1:]
            if not members:
                self.fail(x, "empty set group")
            return SetGroup(tuple(self.factor(f) for f in members))
        if head == "pow" and len(x[1]) == 3:
            alpha = self.int_(x[1][2])
            if alpha < 1:
                self.fail(x[1][2], "pow exponent must be positive")
            return PowerGroup(self.factor(x[1][1]), alpha)
        self.fail(x, "expected (set ...) or (pow factor INT)")

    def node(self, x) -> Node:
        items = x[1]
        if self.head(x) != "node" or len(items) < 2:
            self.fail(x, "expected (node PRIME branch...)")
        return Node(self.factor(items[1]), [self.branch(b) for b in items[2:]], *self._where(x))

    def document(self, x) -> TreeDoc:
        if self.head(x) != "cover-tree":
            self.fail(x, "expected (cover-tree ...)")
        items = x[1][1:]
        header = {}
        i = 0
        while i < len(items) and isinstance(items[i], Tok):
            key = items[i].text
            if key not in (":id", ":qmin", ":k", ":t", ":params") or key in header:
                self.fail(items[i], f"unexpected header entry {key!r}")
            if i + 1 >= len(items):
                self.fail(items[i], f"missing value after {key}")
            header[key] = items[i + 1]
            i += 2
        for key in (":id", ":qmin", ":k", ":t"):
            if key not in header:
                self.fail(x, f"missing {key}")
        if ":params" in header:
            plist = header[":params"]
            if not isinstance(plist, tuple):
                self.fail(plist, ":params expects a list")
            for tok in plist[1]:
                if not isinstance(tok, Tok) or not re.fullmatch(r"[A-Za-z_]\w*", tok.text):
                    self.fail(tok, "bad parameter name")
                self.params.add(tok.text)
            params = [t.text for t in plist[1]]
        else:
            params = []
        ident = header[":id"]
        if not isinstance(ident, Tok):
            self.fail(ident, ":id expects a string")
        rest = items[i:]
        if len(rest) != 1:
            self.fail(x, "a document holds exactly one root node")
        return TreeDoc(
            id=ident.text,
            q_min=self.int_(header[":qmin"]),
            symbol_params=params,
            k_expr=self.factor(header[":k"]),
            t_expr=self.count(header[":t"]),
            root=self.node(rest[0]),
        )


def parse_doc(text: str) -> TreeDoc:
    forms = _read(_tokenize(text))
    if len(forms) != 1 or not isinstance(forms[0], tuple):
        raise ParseError("expected a single (cover-tree ...) form", 1, 1)
    return _Builder().document(forms[0])


# -- wedges -----------------------------------------------------------------

def _choices(groups) -> list[list[int]]:
    dims = []
    for g in groups:
        if isinstance(g, PowerGroup):
            dims.append([g.base**i for i in range(g.alpha + 1)])
        else:
            dims.extend([1, m] for m in g.members)
    return dims


def wedge_moduli(groups, base: int) -> list[int]:
    """Moduli of a wedge in left-to-right order (first group varies fastest)."""
    out = [base]
    for dim in _choices(groups):
        out = [x * f for f in dim for x in out]
    return out


def _eval_groups(groups, bindings):
    out = []
    for g in groups:
        if isinstance(g, PowerGroup):
            out.append(PowerGroup(evaluate(g.base, bindings), g.alpha))
        else:
            out.append(SetGroup(tuple(evaluate(m, bindings) for m in g.members)))
    return out


# -- validation -------------------------------------------------------------

def _sample_bindings(doc: TreeDoc, bindings=None) -> dict[str, int]:
    if bindings:
        return dict(bindings)
    return {name: 17 for name in doc.symbol_params}


def _slot_labels(branch, bindings) -> list[int]:
    if isinstance(branch, Leaf):
        return [_product(branch.factors, bindings)]
    if isinstance(branch, Rep):
        return [_product(branch.factors, bindings)] * evaluate(branch.count, bindings)
    if isinstance(branch, Wedge):
        base = _product(branch.base, bindings)
        mods = wedge_moduli(_eval_groups(branch.groups, bindings), base)
        if branch.take is None:
            return mods
        return mods[: evaluate(branch.take, bindings)]
    return []


def _walk_nodes(node: Node):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(b for b in reversed(n.branches) if isinstance(b, Node))


def validate_doc(doc: TreeDoc, bindings: Mapping[str, int] | None = None) -> list[Diagnostic]:
    """Static checks; problems come back as a list rather than raised."""
    env = _sample_bindings(doc, bindings)
    diags: list[Diagnostic] = []
    for name in doc.symbol_params:
        if name not in env:
            diags.append(Diagnostic("UnboundSymbol", f"no binding for {name}"))
    if diags:
        return diags
    for expr, what in ((doc.k_expr, ":k"), (doc.t_expr, ":t")):
        try:
            evaluate(expr, env)
        except UnboundSymbol as exc:
            diags.append(Diagnostic("UnboundSymbol", f"{what}: {exc}"))
    for node in _walk_nodes(doc.root):
        where = (node.line, node.col)
        try:
            p = evaluate(node.prime, env)
        except UnboundSymbol as exc:
            diags.append(Diagnostic("UnboundSymbol", str(exc), *where))
            continue
        if not is_prime(p):
            diags.append(Diagnostic("NotPrime", f"split value {p} is not prime", *where))
        slots = 0
        for b in node.branches:
            try:
                if isinstance(b, (Arrow, Node)):
                    slots += 1
                    continue
                if isinstance(b, Wedge) and b.take is not None:
                    size = len(wedge_moduli(_eval_groups(b.groups, env), 1))
                    take = evaluate(b.take, env)
                    if not 0 <= take <= size:
                        diags.append(
                            Diagnostic("WedgeTakeOutOfRange", f"take {take} of a {size}-element wedge", *where)
                        )
                if isinstance(b, Rep) and evaluate(b.count, env) < 0:
                    diags.append(Diagnostic("NegativeCount", "rep count is negative", *where))
                slots += len(_slot_labels(b, env))
            except UnboundSymbol as exc:
                diags.append(Diagnostic("UnboundSymbol", str(exc), *where))
        if slots != p:
            diags.append(Diagnostic("SlotCountMismatch", f"{slots} slots under prime {p}", *where))
        if sum(isinstance(b, Arrow) for b in node.branches) > 1:
            diags.append(Diagnostic("MultipleArrows", "a node holds at most one arrow", *where))
    return diags


# -- expansion --------------------------------------------------------------

@dataclass(frozen=True)
class LeftoverClass:
    cls: ResidueClass
    p: int
    s: int

    def __post_init__(self):
        if math.gcd(self.s, self.p) != 1:
            raise ValueError("cofactor s must be coprime to p")


@dataclass(frozen=True)
class ExpansionParams:
    q: int | None = None
    bindings: Mapping[str, int] = field(default_factory=dict)


@dataclass
class Expansion:
    """Everything produced while expanding one document."""

    system: CoveringSystem
    leftovers: list[LeftoverClass]
    q: int
    k: int
    t: int


def figure_primes(doc: TreeDoc, bindings: Mapping[str, int]) -> set[int]:
    primes: set[int] = set()
    for node in _walk_nodes(doc.root):
        primes.add(evaluate(node.prime, bindings))
        for b in node.branches:
            for m in set(_slot_labels(b, bindings)):
                primes.update(p for p, _ in factorize(m))
    primes.update(p for p, _ in factorize(evaluate(doc.k_expr, bindings)))
    return primes


def default_q(doc: TreeDoc, bindings: Mapping[str, int]) -> int:
    excluded = figure_primes(doc, bindings) | set(bindings.values())
    return next_usable_prime(doc.q_min, excluded)


def _max_static_level(doc: TreeDoc, env) -> int:
    """Largest p-level at which any arrow sits in the unexpanded tree."""
    best = 0

    def rec(node, levels):
        nonlocal best
        p = evaluate(node.prime, env)
        levels = dict(levels)
        levels[p] = levels.get(p, 0) + 1
        if any(isinstance(b, Arrow) for b in node.branches):
            best = max(best, levels[p])
        for b in node.branches:
            if isinstance(b, Node):
                rec(b, levels)

    rec(doc.root, {})
    return best


def _plan_height(doc: TreeDoc, env) -> int:
    # tall enough that every arrow is replicated twice while planning
    return _max_static_level(doc, env) + 3


def _resolve(doc: TreeDoc, params: ExpansionParams, strict: bool):
    env = dict(params.bindings)
    for name in doc.symbol_params:
        if name not in env:
            raise UnboundSymbol(name)
    problems = validate_doc(doc, env)
    for d in problems:
        if d.code == "SlotCountMismatch":
            raise SlotCountMismatch(str(d))
        if d.code == "UnboundSymbol":
            raise UnboundSymbol(d.message)
    if problems:
        raise InvalidParams("; ".join(map(str, problems)))
    q = params.q if params.q is not None else default_q(doc, env)
    if not is_prime(q):
        raise InvalidParams(f"q = {q} is not prime")
    if strict:
        if q <= doc.q_min:
            raise InvalidParams(f"q = {q} must exceed {doc.q_min}")
        clash = figure_primes(doc, env) & {q}
        if clash or q in env.values():
            raise InvalidParams(f"q = {q} divides a modulus of the figure")
    top = _max_static_level(doc, env)
    if q - 1 < top:
        raise InvalidParams(f"q = {q} is too small: an arrow already sits at level {top}")
    return env, q


@dataclass
class _Compiled:
    """A node with its labels evaluated, ready for repeated expansion."""

    p: int
    uid: int
    slots: list  # ("arrow",) | ("pin", m0, r) | ("label", m0) | ("sub", _Compiled)
    src: Node
    arrow: bool = False
    subs: list = field(default_factory=list)
    emits: int = 0
    arrow_primes: frozenset = frozenset()
    label_levels: dict = field(default_factory=dict)  # prime -> highest valuation among labels
    label_vals: dict = field(default_factory=dict)  # label -> {prime: valuation}


def _compile(node: Node, env, counter=None) -> _Compiled:
    counter = counter if counter is not None else itertools.count()
    p = evaluate(node.prime, env)
    slots: list = []
    for b in node.branches:
        if isinstance(b, Arrow):
            slots.append(("arrow",))
        elif isinstance(b, Node):
            slots.append(("sub", _compile(b, env, counter)))
        elif isinstance(b, Leaf) and b.pin is not None:
            slots.append(("pin", _product(b.factors, env), evaluate(b.pin, env)))
        else:
            slots.extend(("label", m) for m in _slot_labels(b, env))
    c = _Compiled(p, next(counter), slots, node)
    c.arrow = any(s[0] == "arrow" for s in slots)
    c.subs = [s[1] for s in slots if s[0] == "sub"]
    c.emits = sum(s[0] in ("label", "pin") for s in slots)
    for m in {s[1] for s in slots if s[0] in ("label", "pin")}:
        c.label_vals[m] = dict(factorize(m))
        for q, e in c.label_vals[m].items():
            c.label_levels[q] = max(c.label_levels.get(q, 0), e)
    ap = set().union(*(s.arrow_primes for s in c.subs)) if c.subs else set()
    if c.arrow:
        ap.add(p)
    c.arrow_primes = frozenset(ap)
    return c


def _nodes(root: _Compiled):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(n.subs))


def estimate_expansion(doc: TreeDoc, params: ExpansionParams, strict: bool = True) -> tuple[int, int]:
    """Upper bounds (congruences before mop-up, leftover classes).

    Counts every emitted label without deduplication, so the real figure is
    lower; the point is to refuse hopeless expansions before they start.
    """
    env, q = _resolve(doc, params, strict)
    root = _compile(doc.root, env)
    memo: dict = {}

    def cost(node: _Compiled, levels: dict) -> tuple[int, int]:
        key = (id(node), tuple(sorted((p, levels.get(p, 0)) for p in node.arrow_primes)))
        hit = memo.get(key)
        if hit is not None:
            return hit
        a = levels.get(node.p, 0) + 1
        inner = dict(levels)
        inner[node.p] = a
        emits = node.emits
        lefts = 0
        for sub in node.subs:
            e, l = cost(sub, inner)
            emits += e
            lefts += l
        if node.arrow:
            if a >= q - 1:
                lefts += 1
            else:
                e, l = cost(node, inner)
                emits += e
                lefts += l
        memo[key] = (emits, lefts)
        return emits, lefts

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 50_000))
    try:
        return cost(root, {})
    finally:
        sys.setrecursionlimit(old)


_DEDUPE_SLACK = 25


def _limit(limit: int | None) -> int:
    if limit is not None:
        return limit
    env = os.environ.get("ODDCOVER_MAX_CONGRUENCES")
    return int(env) if env else 4_000_000


def _multipliers(labels, raises) -> dict[int, int]:
    out = {}
    for m0 in labels:
        f = 1
        for (rp, level), sigma in raises.items():
            if m0 % rp == 0 and valuation(m0, rp) >= level:
                f *= rp**sigma
        out[m0] = f
    return out


class _Unifier:
    """Union-find over slot variables (node uid, slot index).

    A class may hold at most one slot of any node: two slots of the same
    node always sit on different digits.
    """

    def __init__(self):
        self.parent: dict = {}
        self.members: dict = {}

    def find(self, v):
        parent = self.parent
        if v not in parent:
            parent[v] = v
            self.members[v] = {v[0]: v[1]}
            return v
        root = v
        while parent[root] != root:
            root = parent[root]
        while parent[v] != root:
            parent[v], v = root, parent[v]
        return root

    def try_union(self, pairs) -> bool:
        """Merge every pair, or nothing if that would put two slots of one node together."""
        local: dict = {}

        def lf(r):
            while local.get(r, r) != r:
                r = local[r]
            return r

        for a, b in pairs:
            ra, rb = lf(self.find(a)), lf(self.find(b))
            if ra != rb:
                local[rb] = ra
        if not local:
            return True
        groups: dict = {}
        for r in set(local) | set(local.values()):
            groups.setdefault(lf(r), []).append(r)
        for roots in groups.values():
            size = sum(len(self.members[r]) for r in roots)
            if len(set().union(*(self.members[r] for r in roots))) != size:
                return False
        for top, roots in groups.items():
            for r in roots:
                if r != top:
                    self.parent[r] = top
                    self.members[top].update(self.members.pop(r))
        return True


class _Planner:
    """Fix, for every node, which digit each of its slots occupies.

    A congruence emitted under a tree path is determined by the p-adic
    digits chosen along that path, one per prime level. Requiring every
    repeated modulus to repeat its residue therefore becomes a set of
    equalities between slot digits. Those are merged with a union-find,
    then the merged classes are coloured with digits so the p slots of each
    node receive p different digits. The tree is walked with a short tower
    so each arrow is replicated a couple of times; deeper replicas repeat
    the same digit pattern.
    """

    def __init__(self, root: _Compiled, k: int, top: int, budget: int = 2_000_000):
        self.root = root
        self.k = k
        self.top = top
        self.budget = budget
        self.uf = _Unifier()
        self.first: dict[int, tuple] = {}
        self.k_sigs: list[tuple] = []
        self.seen: set = set()
        self._fact: dict[int, list] = {}

    def _sig(self, m: int, levels) -> tuple:
        fac = self._fact.get(m)
        if fac is None:
            fac = self._fact[m] = factorize(m)
        out = []
        for ell, j in fac:
            path = levels.get(ell, ())
            if len(path) < j:
                raise NonDividingModulus(f"leaf modulus {m} does not divide its class modulus")
            out.extend(path[:j])
        return tuple(out)

    def _occur(self, m: int, sig: tuple):
        key = (m, sig)
        if key in self.seen:
            return
        self.seen.add(key)
        self.budget -= 1
        if self.budget < 0:
            raise ExpansionTooLarge(len(self.seen), len(self.seen) - 1)
        if m == self.k:
            for other in self.k_sigs:
                if self.uf.try_union(zip(other, sig)):
                    return
            self.k_sigs.append(sig)
            return
        prev = self.first.setdefault(m, sig)
        if prev is not sig and not self.uf.try_union(zip(prev, sig)):
            raise DuplicateModulus(f"modulus {m} is forced onto two different residues")

    def walk(self, node: _Compiled, levels: dict, static: dict, raises: dict):
        p = node.p
        e = static.get(p, 0) + 1
        mult = _multipliers({s[1] for s in node.slots if s[0] in ("label", "pin")}, raises)
        inner_static = dict(static)
        inner_static[p] = e
        here = levels.get(p, ())
        for i, slot in enumerate(node.slots):
            var = (node.uid, i)
            self.uf.find(var)
            below = dict(levels)
            below[p] = here + (var,)
            kind = slot[0]
            if kind in ("label", "pin"):
                m = slot[1] * mult[slot[1]]
                self._occur(m, self._sig(m, below))
            elif kind == "sub":
                self.walk(slot[1], below, inner_static, raises)
            elif len(here) + 1 < self.top:
                deeper = dict(raises)
                deeper[(p, e)] = deeper.get((p, e), 0) + 1
                self.walk(node, below, static, deeper)

    def solve(self) -> dict:
        self.walk(self.root, {}, {}, {})
        uf = self.uf
        nodes = list(_nodes(self.root))
        prime_of = {}
        nbrs: dict = {}
        for n in nodes:
            roots = [uf.find((n.uid, i)) for i in range(len(n.slots))]
            for r in roots:
                prime_of[r] = n.p
                nbrs.setdefault(r, set()).update(x for x in roots if x != r)
        return _colour(nbrs, prime_of)


def _colour(nbrs: dict, prime_of: dict) -> dict:
    """DSatur colouring with chronological backtracking.

    Vertices are slot classes; a class of a p-node may use digits 0..p-1.
    """
    order_key = {v: i for i, v in enumerate(sorted(nbrs))}
    colour: dict = {}
    used: dict = {v: {} for v in nbrs}  # colour -> how many coloured neighbours hold it
    trail: list = []
    steps = 0

    def pick():
        best, bkey = None, None
        for v in nbrs:
            if v in colour:
                continue
            key = (-len(used[v]), -len(nbrs[v]), order_key[v])
            if bkey is None or key < bkey:
                best, bkey = v, key
        return best

    def assign(v, c):
        colour[v] = c
        for w in nbrs[v]:
            used[w][c] = used[w].get(c, 0) + 1

    def unassign(v):
        c = colour.pop(v)
        for w in nbrs[v]:
            n = used[w][c] - 1
            if n:
                used[w][c] = n
            else:
                del used[w][c]

    v = pick()
    choices = None
    while v is not None:
        if choices is None:
            choices = iter([c for c in range(prime_of[v]) if c not in used[v]])
        c = next(choices, None)
        if c is None:
            if not trail:
                raise AssignmentInfeasible("no digit assignment satisfies the figure")
            v, choices = trail.pop()
            unassign(v)
            steps += 1
            if steps > 1_000_000:
                raise AssignmentInfeasible("digit assignment search exhausted its budget")
            continue
        assign(v, c)
        trail.append((v, choices))
        v = pick()
        choices = None
    return colour


def plan_digits(root: _Compiled, k: int, top: int) -> dict:
    """Digit for every (node uid, slot index) of a compiled tree."""
    planner = _Planner(root, k, top)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 50_000))
    try:
        colours = planner.solve()
    finally:
        sys.setrecursionlimit(old)
    uf = planner.uf
    return {(n.uid, i): colours[uf.find((n.uid, i))] for n in _nodes(root) for i in range(len(n.slots))}


def assign_classes(c: int, M: int, node: _Compiled, digits: Mapping) -> list[int]:
    """Child representative of (c, M) for each slot of ``node``.

    Subclasses of (c, M) under the node's prime p are indexed by their
    p-adic digit at the place v = v_p(M). Slot i takes digit ``digits[(uid,
    i)]``; a pinned leaf instead takes the digit whose subclass lies in its
    pinned class, swapping with whichever slot held it.
    """
    p = node.p
    v = 0
    s = M
    while s % p == 0:
        s //= p
        v += 1
    c_digit = (c // p**v) % p
    s_inv = pow(s % p, -1, p)
    pM = p * M

    def child(d):
        return (c + ((d - c_digit) * s_inv % p) * M) % pM

    ds = [digits[(node.uid, i)] for i in range(len(node.slots))]
    for i, slot in enumerate(node.slots):
        if slot[0] != "pin":
            continue
        m0, want = slot[1], slot[2] % slot[1]
        hit = [d for d in range(p) if child(d) % m0 == want]
        if not hit:
            raise AssignmentInfeasible(f"no subclass of {c} mod {M} lies in {want} mod {m0}")
        j = ds.index(hit[0])
        ds[i], ds[j] = ds[j], ds[i]
    return [child(d) for d in ds]


class _Expander:
    def __init__(self, q: int, k: int, limit: int, digits: Mapping):
        self.q = q
        self.k = k
        self.limit = limit
        self.digits = digits
        self.emitted: dict[tuple[int, int], None] = {}
        self.residue_of: dict[int, int] = {}
        self.leftovers: list[LeftoverClass] = []
        self.visited: set = set()
        self._mult: dict = {}

    def emit(self, x: int, m: int):
        key = (x % m, m)
        if key in self.emitted:
            return
        if m != self.k:
            prev = self.residue_of.get(m)
            if prev is not None:
                raise DuplicateModulus(f"modulus {m} used for both {prev} and {key[0]}")
            self.residue_of[m] = key[0]
        self.emitted[key] = None
        if len(self.emitted) > self.limit:
            raise ExpansionTooLarge(len(self.emitted), self.limit)

    def multipliers(self, node: _Compiled, raises: dict) -> tuple[tuple, dict]:
        top = node.label_levels
        rkey = tuple(sorted(kv for kv in raises.items() if top.get(kv[0][0], 0) >= kv[0][1]))
        hit = self._mult.get((node.uid, rkey))
        if hit is None:
            mult = {}
            for m0, vals in node.label_vals.items():
                f = 1
                for (rp, level), sigma in rkey:
                    if vals.get(rp, 0) >= level:
                        f *= rp**sigma
                mult[m0] = f
            hit = self._mult[(node.uid, rkey)] = ((node.uid, rkey), mult)
        return hit

    def run(self, node: _Compiled, c: int, M: int, static: dict, raises: dict):
        p = node.p
        e = static.get(p, 0) + 1
        pM = p * M
        inner = dict(static)
        inner[p] = e
        key, mult = self.multipliers(node, raises)
        # same node, same label moduli: the plan fixes the same residues
        fresh = key not in self.visited
        self.visited.add(key)
        for slot, x in zip(node.slots, assign_classes(c, M, node, self.digits)):
            kind = slot[0]
            if kind in ("label", "pin"):
                if fresh:
                    m = slot[1] * mult[slot[1]]
                    if pM % m:
                        raise NonDividingModulus(f"leaf modulus {m} does not divide {pM}")
                    self.emit(x, m)
            elif kind == "sub":
                self.run(slot[1], x, pM, inner, raises)
            else:
                a = valuation(pM, p)
                if a >= self.q - 1:
                    self.leftovers.append(LeftoverClass(ResidueClass(x, pM), p, pM // p**a))
                    if len(self.leftovers) * self.q > self.limit:
                        raise ExpansionTooLarge(len(self.leftovers) * self.q, self.limit)
                else:
                    deeper = dict(raises)
                    deeper[(p, e)] = deeper.get((p, e), 0) + 1
                    self.run(node, x, pM, static, deeper)


def expand(
    doc: TreeDoc,
    params: ExpansionParams,
    *,
    strict: bool = True,
    limit: int | None = None,
) -> tuple[CoveringSystem, list[LeftoverClass]]:
    """Expand a document into its congruences and the arrows' leftovers.

    With ``strict=False`` the tower height ``q`` only has to clear the
    deepest arrow, which makes small structural checks of large figures
    possible; the result is then not meant to be mopped up.
    """
    exp = _expand(doc, params, strict=strict, limit=limit)
    return exp.system, exp.leftovers


def _expand(doc, params, *, strict=True, limit=None) -> Expansion:
    env, q = _resolve(doc, params, strict)
    cap = _limit(limit)
    est, lefts = estimate_expansion(doc, ExpansionParams(q, env), strict=strict)
    # leftovers are never merged, so q*lefts is a firm lower bound on the
    # mop-up; label counts ignore deduplication and only flag hopeless cases
    if q * lefts > cap or est > _DEDUPE_SLACK * cap:
        raise ExpansionTooLarge(est + q * lefts, cap)
    k = evaluate(doc.k_expr, env)
    t = evaluate(doc.t_expr, env)
    root = _compile(doc.root, env)
    digits = plan_digits(root, k, _plan_height(doc, env))
    ex = _Expander(q, k, cap, digits)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 50_000))
    try:
        ex.run(root, 0, 1, {}, {})
    finally:
        sys.setrecursionlimit(old)
    system = CoveringSystem((Congruence(r, m) for r, m in ex.emitted), k, t)
    return Expansion(system, ex.leftovers, q, k, t)


# -- mop-up -----------------------------------------------------------------

_factor_cache = functools.lru_cache(maxsize=1 << 16)(factorize)


def _divisors(n: int) -> Iterator[int]:
    """Divisors of n in increasing order, generated lazily."""
    primes = [p for p, _ in _factor_cache(n)]
    heap, seen = [1], {1}
    while heap:
        d = heapq.heappop(heap)
        yield d
        for p in primes:
            e = d * p
            if n % e == 0 and e not in seen:
                seen.add(e)
                heapq.heappush(heap, e)


def mop_up(
    leftovers: Iterable[LeftoverClass],
    q: int,
    used_moduli: Iterable[int] = (),
    *,
    coarsen: bool = False,
) -> list[Congruence]:
    """Cover each leftover class c mod s*p^(q-1) with q fresh congruences.

    The j-th congruence has modulus q*s*p^j and selects the members of the
    class that are j mod q, so together they tile it exactly.

    With ``coarsen=True`` a leftover may instead be tiled through a coarser
    class c mod d*p^(q-1) with d a proper divisor of s, trying the smallest
    d first. Covering a superset is harmless, and neighbouring leftovers
    that agree modulo d*p^(q-1) then share identical congruences, which is
    what keeps the moduli distinct when many arrows end on the same s.
    """
    if not is_prime(q):
        raise InvalidParams(f"q = {q} is not prime")
    # the q-part of every mop-up congruence is fixed by j, so a level n = d*p^j
    # is described by c mod n alone; placed maps n to that residue
    blocked = {m // q for m in used_moduli if m % q == 0}
    placed: dict[int, int] = {}
    out: list[Congruence] = []
    for lo in leftovers:
        c, p, s = lo.cls.representative, lo.p, lo.s
        if lo.cls.modulus != s * p ** (q - 1):
            raise InvalidParams(f"leftover modulus {lo.cls.modulus} is not s*p^(q-1) for q = {q}")
        if math.gcd(q, s * p) != 1:
            raise InvalidParams(f"q = {q} shares a factor with {s * p}")
        powers = [p**j for j in range(q)]
        for d in (_divisors(s) if coarsen else (s,)):
            levels = [d * pj for pj in powers]
            if all(n not in blocked and placed.get(n, c % n) == c % n for n in levels):
                break
        else:
            raise MopUpCollision(f"no collision-free mop-up for {lo.cls} (p = {p}, s = {s})")
        for j, n in enumerate(levels):
            if n not in placed:
                placed[n] = c % n
                r, m = crt_pair(c % n, n, j, q)
                out.append(Congruence(r, m))
    return out


def expand_full(doc: TreeDoc, params: ExpansionParams, *, limit: int | None = None) -> Expansion:
    """Expansion followed by the coarsening mop-up; the full covering."""
    exp = _expand(doc, params, limit=limit)
    extra = mop_up(exp.leftovers, exp.q, exp.system.moduli(), coarsen=True)
    system = exp.system.with_congruences(list(exp.system.congruences) + extra)
    return Expansion(system, exp.leftovers, exp.q, exp.k, exp.t)
