import itertools

import numpy as np
import pytest
from hypothesis import given

from groundltl.automata import (
    EmptyTrace,
    SupportTooLarge,
    accepts,
    compile,
    equivalent,
    export_text,
    restrict_support,
)
from groundltl.ltl import PREDICATE_BIT, Always, And, Atom, Eventually, Or, Until
from groundltl.semantics import holds, holds_batch

from helpers import formulas, random_formula, traces

A, B, C = Atom("APPLE"), Atom("PEAR"), Atom("FLAG")
CA = Atom("CLOSER_APPLE")
bit = PREDICATE_BIT


def _trace(*steps):
    return [sum(bit[p] for p in step) for step in steps]


def test_eventually_and_always():
    t = [0] * 20
    t[4] = bit["PEAR"]
    assert accepts(compile(Eventually(B)), t)
    tree = [bit["TREE"]] * 20
    assert accepts(compile(Always(Atom("TREE"))), tree)
    tree[2] = 0
    assert not accepts(compile(Always(Atom("TREE"))), tree)
    assert not accepts(compile(Eventually(A)), [0] * 20)


def test_until_examples():
    a = compile(Until(CA, A))
    assert accepts(a, _trace(["CLOSER_APPLE"], ["CLOSER_APPLE"], ["APPLE"]))
    bad = _trace(["CLOSER_APPLE"], [], ["APPLE"])
    assert not accepts(a, bad)
    assert holds(Until(CA, A), bad) is False


def test_recurrence_needs_last_step():
    t = [0] * 20
    for i in (3, 10, 19):
        t[i] = bit["FLAG"]
    assert accepts(compile(Always(Eventually(C))), t)
    t[19] = 0
    assert not accepts(compile(Always(Eventually(C))), t)


def test_empty_trace_rejected():
    with pytest.raises(EmptyTrace):
        accepts(compile(A), [])


def test_equivalence_examples():
    flag, orange = Atom("FLAG"), Atom("ORANGE")
    assert equivalent(Always(Eventually(Or(flag, orange))), Always(Eventually(Or(orange, flag))))
    assert not equivalent(Eventually(A), Always(A))
    assert equivalent(Eventually(Eventually(B)), Eventually(B))
    assert not equivalent(Eventually(Or(A, B)), Always(Eventually(Or(A, B))))


def test_support_too_large():
    names = ["APPLE", "PEAR", "FLAG", "TREE", "HOUSE", "ORANGE", "CLOSER_PEAR"]
    f = Atom(names[0])
    for n in names[1:]:
        f = And(f, Atom(n))
    with pytest.raises(SupportTooLarge):
        equivalent(f, f)


def test_restrict_support():
    assert restrict_support(Always(Eventually(C))) == {"FLAG"}
    assert restrict_support(Until(And(A, B), C)) == {"APPLE", "PEAR", "FLAG"}
    assert restrict_support(Or(A, A)) == {"APPLE"}


def test_outside_support_is_ignored():
    a = compile(Eventually(A))
    assert accepts(a, [bit["APPLE"] | bit["TREE"]]) == accepts(a, [bit["APPLE"]])


def test_export_text():
    text = export_text(compile(Always(Eventually(Or(C, Atom("ORANGE"))))))
    assert text.startswith("States: ")
    assert '"FLAG"' in text and "--END--" in text


def test_states_reachable_and_total():
    a = compile(Until(CA, A))
    states, table = a.explore()
    assert len(table) == len(states) * len(a.alphabet())
    assert set(table.values()) <= set(range(len(states)))


@given(formulas(("APPLE", "PEAR", "FLAG"), max_leaves=5), traces(("APPLE", "PEAR", "FLAG"), max_size=10))
def test_matches_recursive_semantics(f, t):
    assert accepts(compile(f), t) == holds(f, t)


@given(formulas(("APPLE", "PEAR"), max_leaves=4))
def test_equivalence_reflexive(f):
    assert equivalent(f, f)


@given(formulas(("APPLE", "PEAR"), max_leaves=3), formulas(("APPLE", "PEAR"), max_leaves=3))
def test_equivalence_symmetric(f, g):
    assert equivalent(f, g) == equivalent(g, f)


def _rename(f, mapping):
    if isinstance(f, Atom):
        return Atom(mapping.get(f.name, f.name))
    if isinstance(f, (Eventually, Always)):
        return type(f)(_rename(f.arg, mapping))
    return type(f)(_rename(f.left, mapping), _rename(f.right, mapping))


@given(formulas(("APPLE", "PEAR"), max_leaves=3), formulas(("APPLE", "PEAR"), max_leaves=3))
def test_equivalence_invariant_under_renaming(f, g):
    m = {"APPLE": "TREE", "PEAR": "APPLE"}
    assert equivalent(f, g) == equivalent(_rename(f, m), _rename(g, m))


def all_traces(names, max_len):
    masks = [sum(bit[p] for p, on in zip(names, flags) if on) for flags in itertools.product((0, 1), repeat=len(names))]
    for n in range(1, max_len + 1):
        yield np.array(list(itertools.product(masks, repeat=n)), dtype=np.int64)


def bounded_equivalent(f, g, max_len=5):
    names = sorted(restrict_support(f) | restrict_support(g))
    return all((holds_batch(f, t) == holds_batch(g, t)).all() for t in all_traces(names, max_len))


def test_bounded_oracle_small_sample():
    rng = np.random.default_rng(1)
    names = ("APPLE", "PEAR")
    for _ in range(30):
        f = random_formula(rng, names, int(rng.integers(1, 6)))
        g = random_formula(rng, names, int(rng.integers(1, 6)))
        assert equivalent(f, g) == bounded_equivalent(f, g, 4)
