"""LTL_f syntax: predicates, formula trees, postorder token sequences.

Formulas are immutable trees built from :class:`Atom`, :class:`And`,
:class:`Or`, :class:`Eventually`, :class:`Always` and :class:`Until`.
There is no negation node. Because every operator has a fixed arity, a
formula is written without parentheses as its postorder token sequence::

    >>> encode_postorder(Always(Eventually(Or(Atom("FLAG"), Atom("ORANGE")))))
    ['FLAG', 'ORANGE', 'OR', 'EVENTUALLY', 'ALWAYS']
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

OBJECTS = ("APPLE", "ORANGE", "PEAR")
RELATIONS = ("CLOSER_APPLE", "CLOSER_ORANGE", "CLOSER_PEAR")
DESTINATIONS = ("FLAG", "HOUSE", "TREE")

PREDICATES = tuple(sorted(OBJECTS + RELATIONS + DESTINATIONS))
PREDICATE_BIT = {p: 1 << i for i, p in enumerate(PREDICATES)}

CLOSER_OF = {obj: "CLOSER_" + obj for obj in OBJECTS}
TARGET_OF_CLOSER = {rel: obj for obj, rel in CLOSER_OF.items()}

UNARY_OPS = ("ALWAYS", "EVENTUALLY")
BINARY_OPS = ("AND", "OR", "UNTIL")

SYMBOLS = tuple(sorted(PREDICATES + UNARY_OPS + BINARY_OPS))
EOS = "EOS"
BOS = "BOS"
# output alphabet of the decoder; BOS is only ever an input
TOKENS = SYMBOLS + (EOS,)
ALL_TOKENS = TOKENS + (BOS,)
TOKEN_INDEX = {t: i for i, t in enumerate(ALL_TOKENS)}

ARITY = {**{p: 0 for p in PREDICATES}, **{u: 1 for u in UNARY_OPS}, **{b: 2 for b in BINARY_OPS}}


class MalformedSequence(ValueError):
    pass


class AlreadyRewritten(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    name: str

    def __post_init__(self):
        if self.name not in PREDICATE_BIT:
            raise ValueError(f"unknown predicate {self.name!r}")


@dataclass(frozen=True)
class Eventually:
    arg: "Formula"


@dataclass(frozen=True)
class Always:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, Eventually, Always, And, Or, Until]

_UNARY = {"EVENTUALLY": Eventually, "ALWAYS": Always}
_BINARY = {"AND": And, "OR": Or, "UNTIL": Until}
_TOKEN_OF = {Eventually: "EVENTUALLY", Always: "ALWAYS", And: "AND", Or: "OR", Until: "UNTIL"}


def children(f: Formula) -> tuple:
    if isinstance(f, Atom):
        return ()
    if isinstance(f, (Eventually, Always)):
        return (f.arg,)
    return (f.left, f.right)


def encode_postorder(f: Formula) -> list[str]:
    out: list[str] = []

    def visit(g):
        if isinstance(g, Atom):
            out.append(g.name)
            return
        for c in children(g):
            visit(c)
        out.append(_TOKEN_OF[type(g)])

    visit(f)
    return out


def decode_postorder(tokens: Iterable[str]) -> Formula:
    """Rebuild a formula from postorder tokens; a trailing EOS is allowed."""
    tokens = list(tokens)
    if tokens and tokens[-1] == EOS:
        tokens = tokens[:-1]
    stack: list[Formula] = []
    for i, tok in enumerate(tokens):
        if tok not in ARITY:
            raise MalformedSequence(f"unknown token {tok!r} at position {i}")
        arity = ARITY[tok]
        if len(stack) < arity:
            raise MalformedSequence(f"stack underflow at position {i} ({tok})")
        if arity == 0:
            stack.append(Atom(tok))
        elif arity == 1:
            stack.append(_UNARY[tok](stack.pop()))
        else:
            right = stack.pop()
            left = stack.pop()
            stack.append(_BINARY[tok](left, right))
    if len(stack) != 1:
        raise MalformedSequence(f"final stack depth {len(stack)}, expected 1")
    return stack[0]


def stack_depth(prefix: Sequence[str]) -> int:
    """Stack depth after reading ``prefix``; -1 if the prefix underflows."""
    depth = 0
    for tok in prefix:
        a = ARITY[tok]
        if depth < a:
            return -1
        depth += 1 - a
    return depth


def allowed(depth: int, arity: int, remaining: int) -> bool:
    # after the token the depth is depth - arity + 1, which needs that many
    # minus one binary operators to collapse back to a single formula
    return remaining >= 1 and depth >= arity and depth - arity <= remaining - 1


def valid_continuations(prefix: Sequence[str], remaining_budget: int) -> set[str]:
    depth = stack_depth(prefix)
    if depth < 0:
        raise MalformedSequence("prefix underflows the stack")
    out = {t for t in SYMBOLS if allowed(depth, ARITY[t], remaining_budget)}
    if depth == 1:
        out.add(EOS)
    return out


def formula_length(f: Formula) -> int:
    return 1 + sum(formula_length(c) for c in children(f))


def atoms(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset((f.name,))
    return frozenset().union(*(atoms(c) for c in children(f)))


def rewrite_closer(f: Formula) -> Formula:
    """Replace every object atom ``p`` with ``CLOSER_p U p``.

    Destination atoms have no closer relation and are left alone.
    """
    if isinstance(f, Atom):
        if f.name in TARGET_OF_CLOSER:
            raise AlreadyRewritten(f"relation atom {f.name} already present")
        if f.name in CLOSER_OF:
            return Until(Atom(CLOSER_OF[f.name]), f)
        return f
    if isinstance(f, (Eventually, Always)):
        return type(f)(rewrite_closer(f.arg))
    return type(f)(rewrite_closer(f.left), rewrite_closer(f.right))


def to_text(f: Formula) -> str:
    return " ".join(encode_postorder(f))


def from_text(text: str) -> Formula:
    return decode_postorder(text.split())


_INFIX = {And: "&", Or: "|", Until: "U"}
_PREFIX = {Eventually: "F", Always: "G"}


def to_infix(f: Formula) -> str:
    """Fully parenthesised infix, e.g. ``G(F((FLAG | ORANGE)))``."""
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, (Eventually, Always)):
        return f"{_PREFIX[type(f)]}({to_infix(f.arg)})"
    return f"({to_infix(f.left)} {_INFIX[type(f)]} {to_infix(f.right)})"
