"""Machine-generated command datasets and human-sentence ingestion.

A dataset is a JSONL file, one example per line::

    {"sentence": ["always", "hold", "the", "apple"],
     "formula": "CLOSER_APPLE APPLE UNTIL ALWAYS",
     "class": "safety",
     "split": "train",
     "demos": [{"env": {...}, "actions": ["LEFT", "GRAB"]}, ...]}

``formula`` and ``class`` are null for human data.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .automata import accepts, compile
from .grammar import CLASS_COUNTS, CLASS_NONTERMINAL, CLASSES, Derivation, Grammar, expand, tokenize
from .ltl import (
    DESTINATIONS,
    OBJECTS,
    Formula,
    MalformedSequence,
    atoms,
    formula_length,
    from_text,
    rewrite_closer,
    to_text,
)
from .planner import NotFound, find_accepting_trajectory
from .world import ACTIONS, HORIZON, Environment, InvalidEnvironment, sample_environment, trace_of

log = logging.getLogger(__name__)

UNK = "<unk>"
SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


class SchemaError(ValueError):
    pass


class GenerationStalled(RuntimeError):
    pass


@dataclass
class Demo:
    env: Environment
    actions: list[str]

    def trace(self) -> list[int]:
        return trace_of(self.env, self.actions)

    def to_dict(self) -> dict:
        return {"env": self.env.to_dict(), "actions": list(self.actions)}


@dataclass
class Example:
    sentence: list[str]
    demos: list[Demo]
    formula: Optional[Formula] = None
    class_label: Optional[str] = None
    split: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "sentence": list(self.sentence),
            "formula": None if self.formula is None else to_text(self.formula),
            "class": self.class_label,
            "split": self.split,
            "demos": [d.to_dict() for d in self.demos],
        }


class Lexicon:
    """Word index with an UNK entry at position 0."""

    def __init__(self, words: Iterable[str] = ()):
        self.words = [UNK] + sorted(set(words) - {UNK})
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def encode(self, sentence: Sequence[str]) -> list[int]:
        return [self.index.get(w, 0) for w in sentence]

    def map_unknown(self, sentence: Sequence[str]) -> list[str]:
        return [w if w in self.index else UNK for w in sentence]


@dataclass
class Dataset:
    examples: list[Example]
    lexicon: Lexicon = field(default_factory=Lexicon)

    def __post_init__(self):
        if len(self.lexicon) == 1:
            self.lexicon = Lexicon(w for ex in self.split("train") for w in ex.sentence)

    def split(self, name: str) -> list[Example]:
        return [ex for ex in self.examples if ex.split == name]

    def __len__(self):
        return len(self.examples)


def assign_splits(n: int, seed: int) -> list[str]:
    """Seeded 70/15/15 assignment of ``n`` examples."""
    order = np.random.default_rng([seed, 7]).permutation(n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    labels = [""] * n
    for rank, i in enumerate(order):
        labels[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return labels


# --- formulas and sentences -------------------------------------------------


def sample_class(rng: np.random.Generator) -> str:
    w = np.array([CLASS_COUNTS[c] for c in CLASSES], dtype=float)
    return CLASSES[int(rng.choice(len(CLASSES), p=w / w.sum()))]


def sample_command(cls: str, rng: np.random.Generator, grammar: Optional[Grammar] = None) -> tuple[Formula, Derivation]:
    grammar = grammar or Grammar()
    d = expand(grammar, CLASS_NONTERMINAL[cls], rng)
    return d.semantics(), d


def sample_formula(cls: str, rng: np.random.Generator, grammar: Optional[Grammar] = None) -> Formula:
    """A pre-rewrite formula of the given temporal class."""
    return sample_command(cls, rng, grammar)[0]


def realize_sentence(f: Formula, derivation: Derivation, rng: np.random.Generator, grammar: Optional[Grammar] = None) -> list[str]:
    grammar = grammar or Grammar()
    if derivation.semantics() != f:
        raise ValueError("derivation does not produce this formula")
    return derivation.words(rng, grammar)


def required_predicates(f: Formula) -> set[str]:
    return set(atoms(f))


def build_example(
    f: Formula,
    sentence: list[str],
    rng: np.random.Generator,
    k: int = 3,
    attempts: int = 200,
    class_label: Optional[str] = None,
) -> Example:
    """Rejection-sample ``k`` environments that admit an accepted demonstration."""
    demos = []
    for _ in range(attempts):
        env = sample_environment(rng, required_predicates(f))
        try:
            actions = find_accepting_trajectory(f, env, rng, HORIZON)
        except NotFound:
            continue
        demos.append(Demo(env, actions))
        if len(demos) == k:
            return Example(list(sentence), demos, f, class_label)
    raise GenerationStalled(f"only {len(demos)}/{k} demonstrations after {attempts} environments")


@dataclass(frozen=True)
class GenConfig:
    n: int = 1000
    k: int = 3
    seed: int = 0
    items: tuple[str, ...] = OBJECTS
    landmarks: tuple[str, ...] = DESTINATIONS
    max_tokens: Optional[int] = None
    attempts: int = 200
    formula_retries: int = 100


def generate_example(index: int, cfg: GenConfig, grammar: Grammar) -> Example:
    rng = np.random.default_rng([cfg.seed, index])
    for _ in range(cfg.formula_retries):
        cls = sample_class(rng)
        raw, deriv = sample_command(cls, rng, grammar)
        f = rewrite_closer(raw)
        if cfg.max_tokens is not None and formula_length(f) > cfg.max_tokens:
            continue
        sentence = realize_sentence(raw, deriv, rng, grammar)
        try:
            return build_example(f, sentence, rng, cfg.k, cfg.attempts, cls)
        except GenerationStalled:
            log.debug("stalled on %s", to_text(f))
    raise GenerationStalled(f"example {index}: no usable formula after {cfg.formula_retries} tries")


def generate(cfg: GenConfig) -> Dataset:
    grammar = Grammar(cfg.items, cfg.landmarks)
    examples = [generate_example(i, cfg, grammar) for i in range(cfg.n)]
    for ex, split in zip(examples, assign_splits(len(examples), cfg.seed)):
        ex.split = split
    return Dataset(examples)


# --- serialization ------------------------------------------------------------


def _demo_from(obj, where: str) -> Demo:
    if not isinstance(obj, dict) or "env" not in obj or "actions" not in obj:
        raise SchemaError(f"{where}: demo needs 'env' and 'actions'")
    try:
        env = Environment.from_dict(obj["env"])
    except InvalidEnvironment as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    actions = obj["actions"]
    if not isinstance(actions, list) or not actions or any(a not in ACTIONS for a in actions):
        raise SchemaError(f"{where}: actions must be a nonempty list over {ACTIONS}")
    if len(actions) > HORIZON:
        raise SchemaError(f"{where}: trajectory longer than {HORIZON}")
    return Demo(env, list(actions))


def example_from_dict(row: dict, where: str = "row") -> Example:
    if not isinstance(row, dict):
        raise SchemaError(f"{where}: expected an object")
    sentence = row.get("sentence")
    if isinstance(sentence, str):
        sentence = tokenize(sentence)
    if not isinstance(sentence, list) or not all(isinstance(w, str) for w in sentence):
        raise SchemaError(f"{where}: 'sentence' must be a string or list of words")
    demos = row.get("demos")
    if not isinstance(demos, list):
        raise SchemaError(f"{where}: 'demos' must be a list")
    formula = row.get("formula")
    if formula is not None:
        try:
            formula = from_text(formula)
        except (MalformedSequence, ValueError, AttributeError) as exc:
            raise SchemaError(f"{where}: bad formula: {exc}") from exc
    cls = row.get("class")
    if cls is not None and cls not in CLASSES:
        raise SchemaError(f"{where}: unknown class {cls!r}")
    split = row.get("split")
    if split is not None and split not in SPLITS:
        raise SchemaError(f"{where}: unknown split {split!r}")
    return Example(
        list(sentence),
        [_demo_from(d, f"{where} demo {j}") for j, d in enumerate(demos)],
        formula,
        cls,
        split,
    )


def write_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        for ex in ds.examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True) + "\n")


def read_dataset(path, seed: int = 0) -> Dataset:
    examples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            examples.append(example_from_dict(row, f"line {lineno}"))
    if any(ex.split is None for ex in examples):
        for ex, split in zip(examples, assign_splits(len(examples), seed)):
            ex.split = ex.split or split
    return Dataset(examples)


def ingest_human(path, machine: Optional[Dataset] = None, lexicon: Optional[Lexicon] = None, seed: int = 0) -> Dataset:
    """Load human-written sentences paired with demonstrations.

    Rows carry ``sentence`` (a string), either inline ``demos`` or
    ``demo_refs`` (``[example_index, demo_index]`` pairs into ``machine``),
    and optionally ``gt_formula``, the formula that generated the behaviour.
    The ground truth is kept for evaluation only. Words outside ``lexicon``
    (the training lexicon, when given) become UNK.
    """
    examples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"line {lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict) or not isinstance(row.get("sentence"), str):
                raise SchemaError(f"{where}: 'sentence' must be a string")
            if "demo_refs" in row:
                if machine is None:
                    raise SchemaError(f"{where}: demo_refs need a machine dataset")
                try:
                    demos = [machine.examples[i].demos[j] for i, j in row["demo_refs"]]
                except (IndexError, TypeError, ValueError) as exc:
                    raise SchemaError(f"{where}: bad demo_refs") from exc
                demo_rows = [d.to_dict() for d in demos]
            else:
                demo_rows = row.get("demos")
            payload = {
                "sentence": row["sentence"],
                "demos": demo_rows,
                "formula": row.get("gt_formula"),
                "split": row.get("split"),
            }
            examples.append(example_from_dict(payload, where))
    if any(ex.split is None for ex in examples):
        for ex, split in zip(examples, assign_splits(len(examples), seed)):
            ex.split = ex.split or split
    ds = Dataset(examples, lexicon or Lexicon())
    for ex in ds.examples:
        ex.sentence = ds.lexicon.map_unknown(ex.sentence)
    return ds


def check_demos(ex: Example) -> bool:
    """Every demonstration is accepted by the example's formula."""
    a = compile(ex.formula)
    return all(accepts(a, d.trace()) for d in ex.demos)
