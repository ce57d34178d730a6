"""Synchronous command grammar: English commands paired with LTL formulas.

Each rule carries the English right-hand side and a function building the
formula side from the semantic values of its nonterminal children. The same
rule table drives random generation and chart parsing, so a realized
sentence can be parsed back into the formulas it may denote.

Negated productions are left out because the target logic has no negation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .ltl import DESTINATIONS, OBJECTS, Always, And, Atom, Eventually, Or

CLASSES = ("guarantee", "safety", "recurrence", "persistence", "obligation", "reactivity")
# class frequencies per 1000 machine commands
CLASS_COUNTS = {
    "guarantee": 204,
    "safety": 264,
    "recurrence": 243,
    "persistence": 214,
    "obligation": 52,
    "reactivity": 23,
}
CLASS_NONTERMINAL = {c: c.capitalize() for c in CLASSES}

# semantically empty word choices; realization resamples these freely
LEXICAL = {"SPrefix", "SSuffix", "GPrefix", "LVerb", "IVerb"}


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[str, ...]
    sem: Callable = field(compare=False, hash=False)

    @property
    def nonterminals(self) -> tuple[str, ...]:
        return tuple(s for s in self.rhs if _is_nt(s))

    @property
    def recursive(self) -> bool:
        return self.lhs in self.rhs


def _is_nt(sym: str) -> bool:
    return sym[:1].isupper()


def _binop(a, op, b):
    return op(a, b)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter, digit or apostrophe."""
    return re.findall(r"[a-z0-9']+", text.lower())


class Grammar:
    """The command grammar restricted to the given items and landmarks."""

    def __init__(self, items: Sequence[str] = OBJECTS, landmarks: Sequence[str] = DESTINATIONS):
        self.items = tuple(items)
        self.landmarks = tuple(landmarks)
        rules: list[Rule] = []

        def add(lhs, text_or_syms, sem):
            syms = []
            for part in text_or_syms:
                syms.extend([part] if _is_nt(part) else tokenize(part))
            rules.append(Rule(lhs, tuple(syms), sem))

        add("BinOp", ["and"], lambda: And)
        add("BinOp", ["or"], lambda: Or)
        for it in self.items:
            add("Item", [it.lower()], lambda it=it: Atom(it))
        for lm in self.landmarks:
            add("Landmark", [lm.lower()], lambda lm=lm: Atom(lm))
        for verb in ("be around the", "be near the", "go to the"):
            add("LVerb", [verb], lambda: None)
        for verb in ("hold the", "take the", "possess the"):
            add("IVerb", [verb], lambda: None)
        if self.landmarks:
            add("Predicate", ["LVerb", "Landmark"], lambda v, p: p)
        if self.items:
            add("Predicate", ["IVerb", "Item"], lambda v, p: p)
        add("P", ["Predicate"], lambda p: p)
        add("P", ["Predicate", "BinOp", "Predicate"], _binop)

        add("SPrefix", ["always"], lambda: None)
        add("SPrefix", ["at all times,"], lambda: None)
        for w in ("forever", "at all times", "all the time"):
            add("SSuffix", [w], lambda: None)
        add("Safety", ["SPrefix", "P"], lambda s, p: Always(p))
        add("Safety", ["P", "SSuffix"], lambda p, s: Always(p))
        add("Safety", ["Safety", "BinOp", "Safety"], _binop)

        add("GPrefix", ["eventually"], lambda: None)
        add("GPrefix", ["at some point"], lambda: None)
        add("Guarantee", ["GPrefix", "P"], lambda g, p: Eventually(p))
        add("Guarantee", ["guarantee that you will", "Predicate"], lambda p: Eventually(p))
        add("Guarantee", ["Guarantee", "BinOp", "Guarantee"], _binop)

        add("Obligation", ["Safety", "BinOp", "Guarantee"], _binop)
        add("Obligation", ["Obligation", "BinOp", "Safety"], _binop)
        add("Obligation", ["Obligation", "BinOp", "Guarantee"], _binop)

        add("Recurrence", ["eventually,", "P", "and do this repeatedly"], lambda p: Always(Eventually(p)))
        add("Recurrence", ["Recurrence", "BinOp", "Recurrence"], _binop)

        add("Persistence", ["at some point, start to", "P", "and keep doing it"], lambda p: Eventually(Always(p)))
        add("Persistence", ["Persistence", "BinOp", "Persistence"], _binop)

        add("Reactivity", ["Recurrence", "BinOp", "Persistence"], _binop)
        add("Reactivity", ["Reactivity", "BinOp", "Recurrence"], _binop)
        add("Reactivity", ["Reactivity", "BinOp", "Persistence"], _binop)

        self.rules = tuple(rules)
        self.by_lhs: dict[str, tuple[Rule, ...]] = {}
        for r in rules:
            self.by_lhs.setdefault(r.lhs, ())
            self.by_lhs[r.lhs] += (r,)

    def lexicon(self) -> set[str]:
        return {s for r in self.rules for s in r.rhs if not _is_nt(s)}


@dataclass
class Derivation:
    rule: Rule
    children: list["Derivation"]

    def semantics(self):
        return self.rule.sem(*(c.semantics() for c in self.children))

    def words(self, rng: Optional[np.random.Generator] = None, grammar: Optional[Grammar] = None) -> list[str]:
        rule = self.rule
        if rng is not None and grammar is not None and rule.lhs in LEXICAL:
            options = grammar.by_lhs[rule.lhs]
            rule = options[int(rng.integers(len(options)))]
        out: list[str] = []
        kids = iter(self.children)
        for sym in rule.rhs:
            out.extend(next(kids).words(rng, grammar) if _is_nt(sym) else [sym])
        return out


def expand(grammar: Grammar, symbol: str, rng: np.random.Generator, depth: int = 0, max_depth: int = 1) -> Derivation:
    """Sample a derivation, choosing productions uniformly.

    Past ``max_depth`` levels of self-recursion only non-recursive
    productions are eligible, which keeps commands a readable length.
    """
    options = grammar.by_lhs[symbol]
    if depth >= max_depth:
        options = tuple(r for r in options if not r.recursive) or options
    rule = options[int(rng.integers(len(options)))]
    kids = []
    for sym in rule.nonterminals:
        kids.append(expand(grammar, sym, rng, depth + 1 if sym == symbol else 0, max_depth))
    return Derivation(rule, kids)


class ChartParser:
    """Exhaustive span parser returning every formula a word sequence can denote."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar

    def parse(self, words: Sequence[str], symbol: str) -> set:
        words = tuple(words)
        rules = self.grammar.by_lhs

        @lru_cache(maxsize=None)
        def span(sym: str, i: int, j: int) -> frozenset:
            out = set()
            for rule in rules.get(sym, ()):
                for kids in seq(rule.rhs, i, j):
                    out.add(rule.sem(*kids))
            return frozenset(out)

        @lru_cache(maxsize=None)
        def seq(rhs: tuple, i: int, j: int) -> frozenset:
            # tuples of child semantic values for rhs covering words[i:j]
            if not rhs:
                return frozenset([()]) if i == j else frozenset()
            head, rest = rhs[0], rhs[1:]
            if i >= j:
                return frozenset()
            if not _is_nt(head):
                if words[i] != head:
                    return frozenset()
                return seq(rest, i + 1, j)
            out = set()
            # every symbol covers at least one word
            for k in range(i + 1, j - len(rest) + 1):
                left = span(head, i, k)
                if not left:
                    continue
                for tail in seq(rest, k, j):
                    for v in left:
                        out.add((v,) + tail)
            return frozenset(out)

        return set(span(symbol, 0, len(words)))

    def parse_any(self, words: Sequence[str]) -> dict[str, set]:
        return {c: self.parse(words, CLASS_NONTERMINAL[c]) for c in CLASSES}
