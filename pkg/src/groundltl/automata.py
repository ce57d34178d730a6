"""Automata for LTL_f formulas, built by formula progression.

A state is the obligation the remaining suffix of the trace must meet. It
is kept in a canonical form: a set of clauses (disjunction), each a set of
temporal subformulas (conjunction), with subsumed clauses removed. Since the
logic has no negation these obligations are monotone Boolean functions of
the subformulas and the minimal clause set identifies them uniquely, so the
set of reachable states is finite.

Transitions are computed lazily and memoized per (state, valuation), where
valuations are projected onto the atoms the formula mentions.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .ltl import (
    PREDICATE_BIT,
    PREDICATES,
    Always,
    And,
    Atom,
    Eventually,
    Formula,
    Or,
    Until,
    atoms,
    children,
    to_infix,
)


class EmptyTrace(ValueError):
    pass


class SupportTooLarge(ValueError):
    pass


TRUE = frozenset([frozenset()])
FALSE = frozenset()
INIT = "init"


def _minimize(clauses) -> frozenset:
    ordered = sorted(set(clauses), key=len)
    kept: list[frozenset] = []
    for c in ordered:
        if not any(k <= c for k in kept):
            kept.append(c)
    return frozenset(kept)


def _or(a: frozenset, b: frozenset) -> frozenset:
    if a == TRUE or b == TRUE:
        return TRUE
    return _minimize(a | b)


def _and(a: frozenset, b: frozenset) -> frozenset:
    if not a or not b:
        return FALSE
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    return _minimize(x | y for x in a for y in b)


def submasks(mask: int) -> list[int]:
    """All valuations over the atoms in ``mask``, in increasing order."""
    out = []
    sub = mask
    while True:
        out.append(sub)
        if sub == 0:
            break
        sub = (sub - 1) & mask
    return sorted(out)


class Tables(NamedTuple):
    states: list
    index: dict
    trans: np.ndarray  # (states, symbols) next-state indices
    column: np.ndarray  # full valuation -> symbol column
    accepting: np.ndarray


class Automaton:
    """Deterministic progression automaton of one formula.

    ``step`` and ``accepting`` work on opaque hashable states; ``explore``
    enumerates every reachable state over the support alphabet.
    """

    def __init__(self, formula: Formula):
        self.formula = formula
        self.support = tuple(p for p in PREDICATES if p in atoms(formula))
        self.support_mask = sum(PREDICATE_BIT[p] for p in self.support)
        self.initial = INIT
        self._vars: list[Formula] = []
        self._var_index: dict[Formula, int] = {}
        self._collect_vars(formula)
        self._always = frozenset(
            i for i, g in enumerate(self._vars) if isinstance(g, Always)
        )
        self._prog_memo: dict[tuple[int, int], frozenset] = {}
        self._delta: dict[tuple, frozenset] = {}
        self._tables: Optional[Tables] = None

    def _collect_vars(self, f):
        for c in children(f):
            self._collect_vars(c)
        if isinstance(f, (Eventually, Always, Until)) and f not in self._var_index:
            self._var_index[f] = len(self._vars)
            self._vars.append(f)

    def _prog(self, g: Formula, val: int) -> frozenset:
        if isinstance(g, Atom):
            return TRUE if val & PREDICATE_BIT[g.name] else FALSE
        if isinstance(g, And):
            return _and(self._prog(g.left, val), self._prog(g.right, val))
        if isinstance(g, Or):
            return _or(self._prog(g.left, val), self._prog(g.right, val))
        key = (self._var_index[g], val)
        hit = self._prog_memo.get(key)
        if hit is not None:
            return hit
        residual = frozenset([frozenset([self._var_index[g]])])
        if isinstance(g, Eventually):
            out = _or(self._prog(g.arg, val), residual)
        elif isinstance(g, Always):
            out = _and(self._prog(g.arg, val), residual)
        else:
            out = _or(self._prog(g.right, val), _and(self._prog(g.left, val), residual))
        self._prog_memo[key] = out
        return out

    def step(self, state, valuation: int):
        val = valuation & self.support_mask
        key = (state, val)
        hit = self._delta.get(key)
        if hit is not None:
            return hit
        if state == INIT:
            out = self._prog(self.formula, val)
        else:
            out = FALSE
            for clause in state:
                acc = TRUE
                for v in clause:
                    acc = _and(acc, self._prog(self._vars[v], val))
                    if not acc:
                        break
                out = _or(out, acc)
                if out == TRUE:
                    break
        self._delta[key] = out
        return out

    def accepting(self, state) -> bool:
        """Whether the trace may end in ``state``.

        Pending always-obligations are vacuously met by the empty suffix,
        pending eventually/until obligations are not. The initial state is
        never accepting because traces are nonempty.
        """
        if state == INIT:
            return False
        return any(clause <= self._always for clause in state)

    def is_dead(self, state) -> bool:
        return state == FALSE

    def run(self, trace: Iterable[int]):
        state = self.initial
        for val in trace:
            state = self.step(state, val)
        return state

    def alphabet(self) -> list[int]:
        return submasks(self.support_mask)

    def explore(self) -> tuple[list, dict]:
        """Reachable states (initial first) and the full transition table."""
        index = {self.initial: 0}
        order = [self.initial]
        table: dict[tuple[int, int], int] = {}
        queue = deque([self.initial])
        sigma = self.alphabet()
        while queue:
            s = queue.popleft()
            for val in sigma:
                t = self.step(s, val)
                if t not in index:
                    index[t] = len(order)
                    order.append(t)
                    queue.append(t)
                table[index[s], val] = index[t]
        return order, table

    def tables(self) -> "Tables":
        """Integer form of :meth:`explore`, computed once per automaton."""
        if self._tables is None:
            order, table = self.explore()
            sigma = self.alphabet()
            column = {val: j for j, val in enumerate(sigma)}
            trans = np.array([[table[i, val] for val in sigma] for i in range(len(order))], dtype=np.int32)
            col = np.array([column[v & self.support_mask] for v in range(1 << len(PREDICATES))], dtype=np.int32)
            accepting = np.array([self.accepting(s) for s in order], dtype=bool)
            self._tables = Tables(order, {s: i for i, s in enumerate(order)}, trans, col, accepting)
        return self._tables

    def describe_state(self, state) -> str:
        if state == INIT:
            return to_infix(self.formula)
        if state == TRUE:
            return "true"
        if state == FALSE:
            return "false"
        parts = []
        for clause in sorted(state, key=lambda c: sorted(c)):
            parts.append(" & ".join(to_infix(self._vars[v]) for v in sorted(clause)))
        return " | ".join(f"({p})" for p in parts)

    def __repr__(self):
        return f"Automaton({to_infix(self.formula)})"


@lru_cache(maxsize=8192)
def compile(f: Formula) -> Automaton:  # noqa: A001 - mirrors the domain vocabulary
    return Automaton(f)


def restrict_support(f: Formula) -> frozenset[str]:
    return atoms(f)


def accepts(a: Automaton, trace: Sequence[int]) -> bool:
    if len(trace) == 0:
        raise EmptyTrace("LTL_f traces are nonempty")
    return a.accepting(a.run(trace))


def equivalent(f1: Formula, f2: Formula, horizon: int | None = None, max_symbols: int = 64) -> bool:
    """Language equivalence of two formulas over their joint support.

    Runs the union-find equivalence check of Hopcroft and Karp over pairs
    of progression states. ``horizon`` is accepted for interface symmetry
    with bounded enumeration and is ignored.
    """
    a1, a2 = compile(f1), compile(f2)
    joint = a1.support_mask | a2.support_mask
    sigma = submasks(joint)
    if len(sigma) > max_symbols:
        raise SupportTooLarge(f"joint support has {len(sigma)} symbols (> {max_symbols})")

    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    # tag states so the two automata cannot collide in the union-find
    parent[("R", a2.initial)] = ("R", a2.initial)
    parent[("L", a1.initial)] = ("R", a2.initial)
    stack = [(a1.initial, a2.initial)]
    while stack:
        s1, s2 = stack.pop()
        if a1.accepting(s1) != a2.accepting(s2):
            return False
        for val in sigma:
            t1, t2 = a1.step(s1, val), a2.step(s2, val)
            r1, r2 = find(("L", t1)), find(("R", t2))
            if r1 != r2:
                parent[r1] = r2
                stack.append((t1, t2))
    return True


def export_text(a: Automaton) -> str:
    """Dump the reachable automaton in a HOA-like text format."""
    states, table = a.explore()
    lines = [
        f"States: {len(states)}",
        "Start: 0",
        f"AP: {len(a.support)} " + " ".join(f'"{p}"' for p in a.support),
        "Accepting: " + " ".join(str(i) for i, s in enumerate(states) if a.accepting(s)),
        "--BODY--",
    ]
    for i, s in enumerate(states):
        lines.append(f"State: {i}  /* {a.describe_state(s)} */")
        by_target: dict[int, list[int]] = {}
        for val in a.alphabet():
            by_target.setdefault(table[i, val], []).append(val)
        for target, vals in sorted(by_target.items()):
            lines.append(f"  [{_guard(a.support, vals)}] {target}")
    lines.append("--END--")
    return "\n".join(lines)


def _guard(support: Sequence[str], vals: list[int]) -> str:
    if len(vals) == 1 << len(support):
        return "t"
    terms = []
    for v in vals:
        lits = [p if v & PREDICATE_BIT[p] else "!" + p for p in support]
        terms.append("&".join(lits) or "t")
    return " | ".join(terms)
