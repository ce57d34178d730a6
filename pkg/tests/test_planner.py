import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundltl.automata import accepts, compile
from groundltl.ltl import Always, Atom, Eventually, Or, Until
from groundltl.planner import (
    NotFound,
    PolicyConfig,
    advance,
    distance_to_accept,
    find_accepting_trajectory,
    policy,
    rollout,
    start_node,
    step_likelihoods,
    trajectory_likelihood,
)
from groundltl.world import ACTIONS, Environment, sample_environment, trace_of

from helpers import random_formula

TREE, FLAG, APPLE = Atom("TREE"), Atom("FLAG"), Atom("APPLE")
CA = Until(Atom("CLOSER_APPLE"), APPLE)


def env(*entities, robot=(3, 3)):
    return Environment(tuple(sorted(entities)), robot)


def test_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig(beta=0)
    with pytest.raises(ValueError):
        PolicyConfig(epsilon_floor=0.3)


def test_distance_adjacent():
    e = env(("TREE", 4, 3))
    a = compile(Eventually(TREE))
    assert distance_to_accept(start_node(e, a), a, 20) == 1


def test_distance_object_gone():
    e = env(("APPLE", 3, 2), ("PEAR", 3, 4))
    a = compile(Eventually(Atom("PEAR")))
    n = start_node(e, a)
    for act in ("UP", "GRAB"):
        n = advance(n, a, act)
    assert n.world.held == "APPLE"
    assert distance_to_accept(n, a, 20) == math.inf


def _exhaustive_distance(f, e, depth):
    a = compile(f)
    for n in range(1, depth + 1):
        for ys in itertools.product(ACTIONS, repeat=n):
            if accepts(a, trace_of(e, ys)):
                return n
    return math.inf


def test_distance_matches_exhaustive_search():
    rng = np.random.default_rng(3)
    names = ("APPLE", "CLOSER_APPLE", "TREE", "FLAG")
    checked = 0
    while checked < 12:
        f = random_formula(rng, names, int(rng.integers(1, 5)))
        e = sample_environment(rng, {"APPLE", "TREE", "FLAG"})
        a = compile(f)
        assert distance_to_accept(start_node(e, a), a, 4) == _exhaustive_distance(f, e, 4)
        checked += 1


def test_uniform_when_all_equal():
    # from the corner every action ends next to TREE or FLAG
    e = env(("TREE", 0, 1), ("FLAG", 1, 1), robot=(0, 0))
    a = compile(Eventually(Or(TREE, FLAG)))
    assert np.allclose(policy(start_node(e, a), a), 0.2)


def test_unsatisfiable_is_uniform():
    e = env(robot=(3, 3))
    a = compile(Eventually(APPLE))
    assert np.allclose(policy(start_node(e, a), a), 0.2)
    assert trajectory_likelihood(Eventually(APPLE), e, ["UP", "GRAB", "LEFT"]) == pytest.approx(0.2)


def test_single_best_action_limit():
    e = env(("TREE", 6, 3), robot=(3, 3))
    a = compile(Eventually(TREE))
    p = policy(start_node(e, a), a, PolicyConfig(beta=60.0))
    assert p[ACTIONS.index("RIGHT")] == pytest.approx(1 - 0.01 * 4 / 5)


def test_two_optimal_actions_hand_computed():
    # TREE at (5,1): RIGHT and UP both bring the robot one step closer
    e = env(("TREE", 5, 1), robot=(3, 3))
    a = compile(Eventually(TREE))
    p = policy(start_node(e, a), a)
    # remaining distances after each action: UP 2, DOWN 4, LEFT 4, RIGHT 2, GRAB 3
    d = np.array([2, 4, 4, 2, 3])
    w = np.exp(-2.0 * d)
    expect = 0.99 * w / w.sum() + 0.002
    assert np.allclose(p, expect)


def test_likelihood_hand_computed():
    e = env(("TREE", 5, 1), robot=(3, 3))
    f = Eventually(TREE)
    y = ["RIGHT", "UP", "GRAB", "LEFT"]
    probs = step_likelihoods(f, e, y)
    a = compile(f)
    n = start_node(e, a)
    manual = []
    for act in y:
        manual.append(policy(n, a)[ACTIONS.index(act)])
        n = advance(n, a, act)
    assert np.allclose(probs, manual)
    assert trajectory_likelihood(f, e, y) == pytest.approx(sum(manual) / 4)


def test_greedy_likelihood_near_one():
    e = env(("TREE", 6, 3), robot=(0, 3))
    f = Eventually(TREE)
    cfg = PolicyConfig(beta=60.0, epsilon_floor=0.0)
    y = rollout(f, e, cfg)
    assert trajectory_likelihood(f, e, y, cfg) > 0.5


def test_empty_trajectory():
    with pytest.raises(ValueError):
        trajectory_likelihood(Eventually(TREE), env(("TREE", 0, 0)), [])


def test_find_examples():
    e = env(("TREE", 5, 3))
    y = find_accepting_trajectory(Eventually(TREE), e, np.random.default_rng(0))
    assert len(y) <= 2 and accepts(compile(Eventually(TREE)), trace_of(e, y))
    with pytest.raises(NotFound):
        find_accepting_trajectory(Always(Eventually(APPLE)), env(("TREE", 5, 3)), np.random.default_rng(0))


def test_find_randomizes_ties():
    e = env(("TREE", 6, 6), robot=(0, 0))
    rng = np.random.default_rng(0)
    seen = {tuple(find_accepting_trajectory(Eventually(TREE), e, rng)) for _ in range(20)}
    assert len(seen) > 1
    assert len({len(y) for y in seen}) == 1


def test_find_accepting_bulk():
    rng = np.random.default_rng(5)
    names = ("APPLE", "CLOSER_APPLE", "PEAR", "TREE", "FLAG")
    found = 0
    for _ in range(1000):
        f = random_formula(rng, names, int(rng.integers(1, 7)))
        e = sample_environment(rng, {"APPLE", "PEAR", "TREE", "FLAG"})
        try:
            y = find_accepting_trajectory(f, e, rng)
        except NotFound:
            continue
        found += 1
        assert accepts(compile(f), trace_of(e, y))
    assert found > 200


def test_rollout_examples():
    e = env(("FLAG", 4, 2))
    y = rollout(Eventually(FLAG), e)
    assert len(y) == 1 and accepts(compile(Eventually(FLAG)), trace_of(e, y))
    e = env(("FLAG", 4, 2))
    y = rollout(Eventually(APPLE), e)
    assert len(y) == 20 and not accepts(compile(Eventually(APPLE)), trace_of(e, y))


def test_rollout_punishes_over_general():
    # the rollout stops once TREE is reached, so TREE was false at step 1
    e = env(("TREE", 3, 0), robot=(3, 3))
    y = rollout(Eventually(TREE), e)
    assert y == ["UP", "UP"]
    assert accepts(compile(Eventually(TREE)), trace_of(e, y))
    assert not accepts(compile(Always(TREE)), trace_of(e, y))


def test_sample_mode_is_seeded():
    e = env(("FLAG", 0, 0), robot=(6, 6))
    f = Eventually(FLAG)
    y1 = rollout(f, e, mode="sample", rng=np.random.default_rng(4))
    y2 = rollout(f, e, mode="sample", rng=np.random.default_rng(4))
    assert y1 == y2
    with pytest.raises(ValueError):
        rollout(f, e, mode="bogus")


@given(st.integers(0, 5000), st.lists(st.sampled_from(ACTIONS), min_size=1, max_size=20))
def test_policy_is_distribution_and_likelihood_positive(seed, y):
    rng = np.random.default_rng(seed)
    f = random_formula(rng, ("APPLE", "CLOSER_APPLE", "TREE"), 4)
    e = sample_environment(rng, {"APPLE", "TREE"})
    a = compile(f)
    n = start_node(e, a)
    for act in y:
        p = policy(n, a)
        assert abs(p.sum() - 1) < 1e-9 and (p > 0).all()
        n = advance(n, a, act)
    assert trajectory_likelihood(f, e, y) > 0


def test_monotone_in_beta():
    rng = np.random.default_rng(11)
    pairs = []
    for _ in range(40):
        f = random_formula(rng, ("APPLE", "CLOSER_APPLE", "TREE", "FLAG"), int(rng.integers(1, 6)))
        pairs.append((f, sample_environment(rng, {"APPLE", "TREE", "FLAG"})))
    rates = []
    for beta in (0.5, 1.0, 2.0, 4.0):
        cfg = PolicyConfig(beta=beta)
        rates.append(np.mean([accepts(compile(f), trace_of(e, rollout(f, e, cfg))) for f, e in pairs]))
    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_self_consistency_on_generated_data(small_dataset):
    ok = []
    for ex in small_dataset.examples:
        for d in ex.demos:
            ok.append(accepts(compile(ex.formula), trace_of(d.env, rollout(ex.formula, d.env))))
    assert np.mean(ok) >= 0.95
