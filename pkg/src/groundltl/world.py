"""The 7x7 Craft-style grid: entities, robot dynamics and predicate valuations.

Cells are ``(x, y)`` with ``x`` the column and ``y`` the row; ``UP``
decreases ``y``. Each entity kind appears at most once per environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .ltl import CLOSER_OF, DESTINATIONS, OBJECTS, PREDICATE_BIT, TARGET_OF_CLOSER

GRID = 7
HORIZON = 20
DISTRACTOR_P = 0.3

ACTIONS = ("UP", "DOWN", "LEFT", "RIGHT", "GRAB")
MOVES = {"UP": (0, -1), "DOWN": (0, 1), "LEFT": (-1, 0), "RIGHT": (1, 0)}
ENTITY_KINDS = OBJECTS + DESTINATIONS

Cell = tuple[int, int]


class NoSuchStep(IndexError):
    pass


class InvalidEnvironment(ValueError):
    """Raised for malformed environment descriptions."""


@dataclass(frozen=True)
class Environment:
    entities: tuple[tuple[str, int, int], ...]
    robot_start: Cell
    size: int = GRID

    def __post_init__(self):
        kinds = [k for k, _, _ in self.entities]
        cells = [(x, y) for _, x, y in self.entities]
        if len(set(kinds)) != len(kinds):
            raise InvalidEnvironment("at most one entity of each kind")
        if len(set(cells)) != len(cells):
            raise InvalidEnvironment("at most one entity per cell")
        for k in kinds:
            if k not in ENTITY_KINDS:
                raise InvalidEnvironment(f"unknown entity kind {k!r}")
        for c in cells + [self.robot_start]:
            if not self.in_bounds(c):
                raise InvalidEnvironment(f"cell {c} outside the grid")
        if tuple(self.robot_start) in cells:
            raise InvalidEnvironment("robot must start on an empty cell")

    def in_bounds(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.size and 0 <= y < self.size

    def position(self, kind: str) -> Optional[Cell]:
        for k, x, y in self.entities:
            if k == kind:
                return (x, y)
        return None

    def occupant(self, cell: Cell) -> Optional[str]:
        for k, x, y in self.entities:
            if (x, y) == cell:
                return k
        return None

    def to_dict(self) -> dict:
        return {
            "grid": self.size,
            "entities": [{"kind": k, "x": x, "y": y} for k, x, y in self.entities],
            "robot": list(self.robot_start),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        try:
            ents = tuple(sorted((e["kind"], int(e["x"]), int(e["y"])) for e in d["entities"]))
            robot = tuple(int(v) for v in d["robot"])
            size = int(d.get("grid", GRID))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidEnvironment(f"bad environment: {exc}") from exc
        if size != GRID or len(robot) != 2:
            raise InvalidEnvironment("environments are 7x7 with a 2d robot position")
        return cls(ents, robot, size)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def render(self, robot: Optional[Cell] = None, removed: Iterable[Cell] = ()) -> str:
        robot = self.robot_start if robot is None else robot
        removed = set(removed)
        rows = []
        for y in range(self.size):
            row = []
            for x in range(self.size):
                k = self.occupant((x, y))
                ch = "."
                if k is not None and (x, y) not in removed:
                    ch = k[0] if k in OBJECTS else k[0].lower()
                if (x, y) == tuple(robot):
                    ch = "@" if ch == "." else "*"
                row.append(ch)
            rows.append(" ".join(row))
        return "\n".join(rows)


@dataclass(frozen=True)
class WorldState:
    env: Environment = field(repr=False)
    robot: Cell
    held: Optional[str] = None
    removed: frozenset = frozenset()
    clock: int = 0


def initial_state(env: Environment) -> WorldState:
    return WorldState(env, tuple(env.robot_start))


def step(s: WorldState, a: str) -> WorldState:
    if a in MOVES:
        dx, dy = MOVES[a]
        nxt = (s.robot[0] + dx, s.robot[1] + dy)
        if not s.env.in_bounds(nxt):
            nxt = s.robot
        return replace(s, robot=nxt, clock=s.clock + 1)
    if a != "GRAB":
        raise ValueError(f"unknown action {a!r}")
    kind = s.env.occupant(s.robot)
    if s.held is None and kind in OBJECTS and s.robot not in s.removed:
        return replace(s, held=kind, removed=s.removed | {s.robot}, clock=s.clock + 1)
    return replace(s, clock=s.clock + 1)


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _object_distance(s: WorldState, obj: str) -> Optional[int]:
    pos = s.env.position(obj)
    if pos is None or pos in s.removed:
        return None
    return manhattan(s.robot, pos)


def transition_valuation(prev: WorldState, cur: WorldState) -> int:
    """Valuation observed at ``cur`` having arrived from ``prev``."""
    val = 0
    if cur.held is not None:
        val |= PREDICATE_BIT[cur.held] | PREDICATE_BIT[CLOSER_OF[cur.held]]
    for obj in OBJECTS:
        if obj == cur.held:
            continue
        before, after = _object_distance(prev, obj), _object_distance(cur, obj)
        if before is not None and after is not None and after < before:
            val |= PREDICATE_BIT[CLOSER_OF[obj]]
    for dest in DESTINATIONS:
        pos = cur.env.position(dest)
        if pos is not None and manhattan(cur.robot, pos) <= 1:
            val |= PREDICATE_BIT[dest]
    return val


def valuation_at(states: Sequence[WorldState], t: int) -> int:
    if not 1 <= t < len(states):
        raise NoSuchStep(f"no valuation at step {t}")
    return transition_valuation(states[t - 1], states[t])


def replay(env: Environment, actions: Sequence[str]) -> list[WorldState]:
    states = [initial_state(env)]
    for a in actions:
        states.append(step(states[-1], a))
    return states


def trace_of(env: Environment, actions: Sequence[str]) -> list[int]:
    states = replay(env, actions)
    return [transition_valuation(states[t - 1], states[t]) for t in range(1, len(states))]


def required_entities(predicates: Iterable[str]) -> set[str]:
    out = set()
    for p in predicates:
        out.add(TARGET_OF_CLOSER.get(p, p))
    return out


def sample_environment(rng: np.random.Generator, required: Iterable[str]) -> Environment:
    """Place required entities, then each other kind with probability 0.3."""
    required = required_entities(required)
    kinds = [k for k in ENTITY_KINDS if k in required]
    for k in ENTITY_KINDS:
        if k not in required and rng.random() < DISTRACTOR_P:
            kinds.append(k)
    cells = rng.permutation(GRID * GRID)[: len(kinds) + 1]
    placed = [(k, int(c % GRID), int(c // GRID)) for k, c in zip(kinds, cells)]
    start = int(cells[len(kinds)])
    return Environment(tuple(sorted(placed)), (start % GRID, start // GRID))


def describe_valuation(val: int) -> list[str]:
    return [p for p, bit in PREDICATE_BIT.items() if val & bit]
