"""Automaton-guided planning in the grid world.

Everything here works on the product of the world dynamics and a formula's
progression automaton. A product node is ``(robot, held, automaton state)``;
the set of consumed cells is implied by ``held`` because each object kind
occurs once and nothing can be dropped.

The policy is a Boltzmann distribution over actions scored by how many
further steps are needed before the automaton can accept. It plays the role
of the executor: it scores demonstrations (``trajectory_likelihood``) and
executes formulas (``rollout``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .automata import Automaton, compile
from .ltl import CLOSER_OF, DESTINATIONS, OBJECTS, PREDICATE_BIT, Formula
from .world import (
    ACTIONS,
    HORIZON,
    Environment,
    WorldState,
    initial_state,
    step,
    transition_valuation,
)

INF = math.inf


class NotFound(LookupError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    beta: float = 2.0
    horizon: int = HORIZON
    epsilon_floor: float = 0.01

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 <= self.epsilon_floor <= 0.2:
            raise ValueError("epsilon_floor must lie in [0, 0.2]")


@dataclass(frozen=True)
class ProductNode:
    world: WorldState
    auto_state: object


def _world_state(env: Environment, robot, held) -> WorldState:
    removed = frozenset() if held is None else frozenset([env.position(held)])
    return WorldState(env, robot, held, removed)


class _MoveTable(dict):
    """(robot, held) -> tuple of (next robot, next held, valuation) per action.

    Same dynamics as :func:`groundltl.world.step` and
    :func:`groundltl.world.transition_valuation`, tabulated lazily with plain
    arithmetic for speed.
    """

    _DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))

    def __init__(self, env: Environment):
        super().__init__()
        self.size = env.size
        self.pos = {k: (x, y) for k, x, y in env.entities}
        self.objects = [o for o in OBJECTS if o in self.pos]
        self.dests = [(PREDICATE_BIT[d], self.pos[d]) for d in DESTINATIONS if d in self.pos]
        self.at_cell = {self.pos[o]: o for o in self.objects}

    def __missing__(self, key):
        (x, y), held = key
        size, pos = self.size, self.pos
        out = []
        for i, (dx, dy) in enumerate(self._DELTAS):
            nx, ny = x + dx, y + dy
            if not (0 <= nx < size and 0 <= ny < size):
                nx, ny = x, y
            h2 = held
            if i == 4 and held is None and (x, y) in self.at_cell:
                h2 = self.at_cell[x, y]
            val = 0
            if h2 is not None:
                val |= PREDICATE_BIT[h2] | PREDICATE_BIT[CLOSER_OF[h2]]
            for o in self.objects:
                if o == h2 or o == held:
                    continue
                ox, oy = pos[o]
                if abs(nx - ox) + abs(ny - oy) < abs(x - ox) + abs(y - oy):
                    val |= PREDICATE_BIT[CLOSER_OF[o]]
            for bit, (lx, ly) in self.dests:
                if abs(nx - lx) + abs(ny - ly) <= 1:
                    val |= bit
            out.append(((nx, ny), h2, val))
        out = tuple(out)
        self[key] = out
        return out


@lru_cache(maxsize=512)
def world_moves(env: Environment) -> _MoveTable:
    return _MoveTable(env)


class _WorldArrays:
    """World dynamics of one environment as integer arrays.

    A world index is ``cell * H + h`` where ``h`` indexes the held slot
    (0 for empty hands, then the objects present in ``env``).
    """

    def __init__(self, env: Environment):
        moves = world_moves(env)
        self.size = env.size
        self.held = (None,) + tuple(moves.objects)
        self.held_index = {h: i for i, h in enumerate(self.held)}
        H = len(self.held)
        n = env.size * env.size * H
        self.next = np.empty((n, len(ACTIONS)), dtype=np.int32)
        self.val = np.empty((n, len(ACTIONS)), dtype=np.int32)
        for w in range(n):
            robot, held = self.cell(w // H), self.held[w % H]
            for i, (r2, h2, val) in enumerate(moves[robot, held]):
                self.next[w, i] = self.index(r2, h2)
                self.val[w, i] = val

    def cell(self, c: int) -> tuple[int, int]:
        return (c % self.size, c // self.size)

    def index(self, robot, held) -> int:
        return (robot[1] * self.size + robot[0]) * len(self.held) + self.held_index[held]


@lru_cache(maxsize=512)
def world_arrays(env: Environment) -> _WorldArrays:
    return _WorldArrays(env)


class ProductGraph:
    """Product of one environment with one automaton, over integer nodes.

    Node ``w * Q + q`` pairs world index ``w`` with automaton state ``q``.
    ``dist[node]`` is the fewest actions after which the automaton can be
    in an accepting state (``UNREACHABLE`` if never).
    """

    UNREACHABLE = np.iinfo(np.int32).max

    def __init__(self, automaton: Automaton, env: Environment):
        self.automaton = automaton
        self.env = env
        tab = automaton.tables()
        self.world = world_arrays(env)
        self.state_index = tab.index
        Q = self.Q = len(tab.states)
        sym = tab.column[self.world.val]  # (W, A)
        succ_q = tab.trans[:, sym]  # (Q, W, A)
        self.next = (self.world.next[:, None, :] * Q + succ_q.transpose(1, 0, 2)).reshape(-1, len(ACTIONS))
        self.accepting = np.tile(tab.accepting, len(self.world.next))
        self.start = self.node(tuple(env.robot_start), None, automaton.initial)
        self.dist = self._distances()

    def _distances(self) -> np.ndarray:
        dist = np.full(len(self.next), self.UNREACHABLE, dtype=np.int32)
        frontier = self.accepting.copy()
        dist[frontier] = 0
        k = 0
        while frontier.any():
            k += 1
            frontier = frontier[self.next].any(axis=1) & (dist == self.UNREACHABLE)
            dist[frontier] = k
        return dist

    def node(self, robot, held, auto_state) -> int:
        return self.world.index(tuple(robot), held) * self.Q + self.state_index[auto_state]

    def distance(self, node: int, horizon_left: int) -> float:
        d = int(self.dist[node])
        return d if d <= horizon_left else INF

    def successors(self, node: int) -> np.ndarray:
        return self.next[node]

    def is_accepting(self, node: int) -> bool:
        return bool(self.accepting[node])

    def action_probs(self, node: int, horizon_left: int, cfg: PolicyConfig) -> np.ndarray:
        return self.probs_along(np.array([node]), np.array([horizon_left]), cfg)[0]

    def probs_along(self, nodes: np.ndarray, horizons: np.ndarray, cfg: PolicyConfig) -> np.ndarray:
        """Policy rows for several (node, steps left) pairs at once."""
        d = self.dist[self.next[nodes]].astype(float)
        finite = d <= (horizons[:, None] - 1)
        n = len(ACTIONS)
        best = np.where(finite, d, np.inf).min(axis=1, keepdims=True)
        w = np.where(finite, np.exp(-cfg.beta * (np.where(finite, d, 0.0) - np.where(np.isfinite(best), best, 0.0))), 0.0)
        total = w.sum(axis=1, keepdims=True)
        p = np.where(total > 0, w / np.where(total > 0, total, 1.0), 1.0 / n)
        return (1.0 - cfg.epsilon_floor) * p + cfg.epsilon_floor / n


@lru_cache(maxsize=512)
def product_graph(f: Formula, env: Environment) -> ProductGraph:
    return ProductGraph(compile(f), env)


def _graph_for(a: Automaton, env: Environment) -> ProductGraph:
    return product_graph(a.formula, env)


def _node(g: ProductGraph, n: ProductNode) -> int:
    return g.node(n.world.robot, n.world.held, n.auto_state)


def start_node(env: Environment, a: Automaton) -> ProductNode:
    return ProductNode(initial_state(env), a.initial)


def advance(n: ProductNode, a: Automaton, action: str) -> ProductNode:
    w = step(n.world, action)
    return ProductNode(w, a.step(n.auto_state, transition_valuation(n.world, w)))


def distance_to_accept(n: ProductNode, a: Automaton, horizon_left: int) -> float:
    """Fewest further actions until the automaton accepts, or ``inf``."""
    g = _graph_for(a, n.world.env)
    return g.distance(_node(g, n), horizon_left)


def policy(n: ProductNode, a: Automaton, cfg: PolicyConfig = PolicyConfig()) -> np.ndarray:
    """Action distribution at ``n``, ordered as :data:`ACTIONS`."""
    g = _graph_for(a, n.world.env)
    return g.action_probs(_node(g, n), cfg.horizon - n.world.clock, cfg)


def step_likelihoods(f: Formula, env: Environment, y: Sequence[str], cfg: PolicyConfig = PolicyConfig()) -> list[float]:
    g = product_graph(f, env)
    idx = [ACTIONS.index(a) for a in y]
    nodes = [g.start]
    for i in idx[:-1]:
        nodes.append(int(g.next[nodes[-1], i]))
    horizons = cfg.horizon - np.arange(len(idx))
    probs = g.probs_along(np.array(nodes), horizons, cfg)
    return probs[np.arange(len(idx)), idx].tolist()


def trajectory_likelihood(f: Formula, env: Environment, y: Sequence[str], cfg: PolicyConfig = PolicyConfig()) -> float:
    """Mean (not product) of the per-step action probabilities along ``y``."""
    if len(y) == 0:
        raise ValueError("empty trajectory")
    probs = step_likelihoods(f, env, y, cfg)
    return sum(probs) / len(probs)


def find_accepting_trajectory(
    f: Formula, env: Environment, rng: np.random.Generator, max_len: int = HORIZON
) -> list[str]:
    """Shortest accepted action sequence, chosen at random among ties."""
    a = compile(f)
    moves = world_moves(env)

    def moves_from(node):
        robot, held, q = node
        return [(r2, h2, a.step(q, val)) for r2, h2, val in moves[robot, held]]

    start = (tuple(env.robot_start), None, a.initial)
    seen = {start}
    layer = {start: None}
    parents: list[dict] = []
    for _ in range(max_len):
        nxt: dict[tuple, list] = {}
        for node in layer:
            if a.is_dead(node[2]):
                continue
            for i, m in enumerate(moves_from(node)):
                if m in seen:
                    continue
                nxt.setdefault(m, []).append((node, i))
        seen.update(nxt)
        parents.append(nxt)
        goals = [m for m in nxt if a.accepting(m[2])]
        if goals:
            node = goals[int(rng.integers(len(goals)))]
            actions = []
            for level in reversed(parents):
                options = level[node]
                node, i = options[int(rng.integers(len(options)))]
                actions.append(ACTIONS[i])
            return actions[::-1]
        if not nxt:
            break
        layer = nxt
    raise NotFound(f"no accepted trajectory within {max_len} steps")


def rollout(
    f: Formula,
    env: Environment,
    cfg: PolicyConfig = PolicyConfig(),
    mode: str = "greedy",
    rng: Optional[np.random.Generator] = None,
) -> list[str]:
    """Execute the policy until the automaton accepts or the horizon ends."""
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        rng = np.random.default_rng(0)
    g = product_graph(f, env)
    node = g.start
    actions = []
    for t in range(cfg.horizon):
        p = g.action_probs(node, cfg.horizon - t, cfg)
        i = int(np.argmax(p)) if mode == "greedy" else int(rng.choice(len(ACTIONS), p=p))
        actions.append(ACTIONS[i])
        node = int(g.next[node, i])
        if g.is_accepting(node):
            break
    return actions
