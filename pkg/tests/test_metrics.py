import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundltl.dataset import Dataset, Demo, Example
from groundltl.ltl import SYMBOLS, Always, And, Atom, Eventually, Or, Until, encode_postorder, formula_length
from groundltl.metrics import (
    EvaluationError,
    MetricsReport,
    MissingGroundTruth,
    metric_exact,
    metric_exec,
    metric_plan,
    metric_seq,
    random_baseline,
    random_formula,
    report,
)
from groundltl.world import Environment

TREE, FLAG, ORANGE, APPLE, PEAR = (Atom(n) for n in ("TREE", "FLAG", "ORANGE", "APPLE", "PEAR"))


def test_seq_examples():
    a = ["FLAG", "ORANGE", "OR", "EVENTUALLY", "ALWAYS"]
    assert metric_seq(a, a) == 1.0
    assert metric_seq(["APPLE"], ["PEAR", "ALWAYS"]) == 0.0
    gold = ["FLAG", "EVENTUALLY", "ALWAYS", "ORANGE", "EVENTUALLY", "ALWAYS", "AND"]
    assert metric_seq(a, gold) == pytest.approx(8 / 12)


tok_lists = st.lists(st.sampled_from(SYMBOLS), min_size=1, max_size=8)


@given(tok_lists, tok_lists)
def test_seq_symmetric_and_bounded(a, b):
    assert metric_seq(a, b) == metric_seq(b, a)
    assert 0 <= metric_seq(a, b) <= 1
    assert (metric_seq(a, b) == 1.0) == (sorted(a) == sorted(b))


def test_exact_examples():
    f = Always(Eventually(Or(APPLE, PEAR)))
    assert metric_exact(f, f)
    assert metric_exact(f, Always(Eventually(Or(PEAR, APPLE))))
    assert not metric_exact(Eventually(Or(APPLE, PEAR)), f)
    assert metric_exact(None, f) is False


def test_exact_skips_large_support():
    names = ["APPLE", "PEAR", "FLAG", "TREE", "HOUSE", "ORANGE", "CLOSER_PEAR"]
    f = Atom(names[0])
    for n in names[1:]:
        f = And(f, Atom(n))
    with pytest.warns(UserWarning):
        assert metric_exact(f, f) is None


def _example(formula, demos, cls="guarantee"):
    return Example(["w"], demos, formula, cls, "test")


def _tree_example():
    env = Environment((("TREE", 3, 0),), (3, 3))
    # stays next to the tree from step 2 on, so both F TREE and G F TREE hold
    return _example(Always(Eventually(TREE)), [Demo(env, ["UP", "UP", "GRAB"])], "recurrence")


def test_exec_overestimates_and_plan_punishes():
    ex = _tree_example()
    assert metric_exec([Eventually(TREE)], [ex]) == 1.0
    assert metric_plan([Always(Eventually(TREE))], [ex]) == 1.0
    env = Environment((("TREE", 3, 0),), (3, 3))
    strict = _example(Always(TREE), [Demo(env, ["UP", "UP", "GRAB"])])
    # F TREE stops as soon as the tree is reached, but G TREE failed at step 1
    assert metric_plan([Eventually(TREE)], [strict]) == 0.0


def test_plan_unsatisfiable_prediction_fails():
    env = Environment((("TREE", 3, 0),), (3, 3))
    strict = _example(Always(TREE), [Demo(env, ["UP", "UP", "GRAB"])])
    assert metric_plan([Eventually(APPLE)], [strict]) == 0.0


def test_plan_needs_ground_truth():
    ex = _tree_example()
    ex.formula = None
    with pytest.raises(MissingGroundTruth):
        metric_plan([TREE], [ex])


def test_ground_truth_scores(small_dataset):
    exs = small_dataset.examples
    rep = report([ex.formula for ex in exs], exs)
    assert rep.exec == 1.0 and rep.seq_f1 == 1.0
    assert rep.plan >= 0.95
    assert rep.exact <= rep.exec
    assert set(rep.per_class) <= {"guarantee", "safety", "recurrence", "persistence", "obligation", "reactivity"}


def test_report_human_data_has_no_plan():
    ex = _tree_example()
    ex.formula = None
    rep = report([Eventually(TREE)], [ex])
    assert rep.exec == 1.0 and rep.plan is None and rep.exact is None


def test_report_validation_and_roundtrip(tmp_path):
    with pytest.raises(EvaluationError):
        MetricsReport(exec=0.5, plan=None, seq_f1=None, exact=0.7, n_examples=2)
    with pytest.raises(EvaluationError):
        MetricsReport(exec=1.5, plan=None, seq_f1=None, exact=None, n_examples=2)
    rep = report([Eventually(TREE)], [_tree_example()], seed=3)
    assert MetricsReport.from_json(rep.to_json()) == rep
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("class,exec") and lines[1].startswith("all,")


def test_random_formula_bounds():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        assert formula_length(random_formula(rng, 9)) <= 9


def test_random_baseline_seeded(small_dataset):
    a = random_baseline(small_dataset.examples, seed=4)
    b = random_baseline(small_dataset.examples, seed=4)
    assert a == b and a.seed == 4
    assert a.exact <= a.exec


def test_random_baseline_band():
    from helpers import reduced_dataset

    test = reduced_dataset(0).split("test")
    execs = [random_baseline(test, seed=s).exec for s in range(5)]
    assert 0.0 <= np.mean(execs) <= 0.30
