"""Direct LTL_f evaluation on a finite trace, by structural recursion.

This is the definitional semantics and does not go through automata, so it
can be used to cross-check :mod:`groundltl.automata`. A trace is a sequence
of valuations (bitmasks over :data:`groundltl.ltl.PREDICATES`).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

from .ltl import PREDICATE_BIT, Always, And, Atom, Eventually, Formula, Or, Until


def holds(f: Formula, trace: Sequence[int], i: int = 0) -> bool:
    """True iff ``trace[i:]`` satisfies ``f``. The suffix must be nonempty."""
    trace = tuple(trace)
    n = len(trace)
    if not 0 <= i < n:
        raise ValueError("position outside the trace")

    @lru_cache(maxsize=None)
    def sat(g, j):
        if isinstance(g, Atom):
            return bool(trace[j] & PREDICATE_BIT[g.name])
        if isinstance(g, And):
            return sat(g.left, j) and sat(g.right, j)
        if isinstance(g, Or):
            return sat(g.left, j) or sat(g.right, j)
        if isinstance(g, Eventually):
            return any(sat(g.arg, k) for k in range(j, n))
        if isinstance(g, Always):
            return all(sat(g.arg, k) for k in range(j, n))
        if isinstance(g, Until):
            for k in range(j, n):
                if sat(g.right, k):
                    return True
                if not sat(g.left, k):
                    return False
            return False
        raise TypeError(g)

    return sat(f, i)


def holds_batch(f: Formula, traces: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` at position 0 of every row of an (N, L) valuation array."""
    traces = np.asarray(traces, dtype=np.int64)
    n, length = traces.shape

    def table(g) -> np.ndarray:
        # table[:, j] = g holds on the suffix starting at j
        if isinstance(g, Atom):
            return (traces & PREDICATE_BIT[g.name]) != 0
        if isinstance(g, And):
            return table(g.left) & table(g.right)
        if isinstance(g, Or):
            return table(g.left) | table(g.right)
        out = np.zeros((n, length + 1), dtype=bool)
        if isinstance(g, Eventually):
            a = table(g.arg)
            for j in range(length - 1, -1, -1):
                out[:, j] = a[:, j] | out[:, j + 1]
        elif isinstance(g, Always):
            a = table(g.arg)
            out[:, length] = True
            for j in range(length - 1, -1, -1):
                out[:, j] = a[:, j] & out[:, j + 1]
        elif isinstance(g, Until):
            a, b = table(g.left), table(g.right)
            for j in range(length - 1, -1, -1):
                out[:, j] = b[:, j] | (a[:, j] & out[:, j + 1])
        else:
            raise TypeError(g)
        return out[:, :length]

    return table(f)[:, 0]
