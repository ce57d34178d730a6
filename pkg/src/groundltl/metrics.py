"""Evaluation metrics, baselines and reports.

Exec: the predicted formula accepts every demonstration of its example.
Plan: greedy rollout of the prediction satisfies the ground-truth formula.
Seq:  token-multiset F1 against the gold postorder sequence.
Exact: language equivalence with the gold formula.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .automata import SupportTooLarge, accepts, compile, equivalent
from .dataset import Example, Lexicon
from .ltl import TOKENS, Formula, decode_postorder, encode_postorder, valid_continuations
from .planner import PolicyConfig, rollout
from .world import trace_of

log = logging.getLogger(__name__)


class MissingGroundTruth(ValueError):
    pass


class EvaluationError(RuntimeError):
    pass


def predict(model, lexicon: Lexicon, examples: Sequence[Example], max_len: int, width: int = 10) -> list[Optional[Formula]]:
    """Beam top-1 per example; ``None`` when no complete formula fits ``max_len``."""
    model.eval()
    out = []
    with torch.no_grad():
        for ex in examples:
            ids = lexicon.encode(ex.sentence)
            if not ids:
                out.append(None)
                continue
            hyps = model.beam(model.encode([ids]), max_len, width)
            out.append(decode_postorder(TOKENS[t] for t in hyps[0][0]) if hyps else None)
    return out


def exec_success(pred: Optional[Formula], ex: Example) -> bool:
    if pred is None:
        return False
    a = compile(pred)
    return all(accepts(a, d.trace()) for d in ex.demos)


def metric_exec(preds: Sequence[Optional[Formula]], examples: Sequence[Example]) -> float:
    if not examples:
        return 0.0
    return float(np.mean([exec_success(p, ex) for p, ex in zip(preds, examples)]))


exec_score = metric_exec


def plan_successes(
    pred: Optional[Formula], ex: Example, cfg: PolicyConfig = PolicyConfig(), mode: str = "greedy", seed: int = 0
) -> list[bool]:
    if ex.formula is None:
        raise MissingGroundTruth("example has no ground-truth formula")
    if pred is None:
        return [False] * len(ex.demos)
    gold = compile(ex.formula)
    rng = np.random.default_rng(seed)
    out = []
    for d in ex.demos:
        actions = rollout(pred, d.env, cfg, mode, rng)
        out.append(accepts(gold, trace_of(d.env, actions)))
    return out


def metric_plan(
    preds: Sequence[Optional[Formula]],
    examples: Sequence[Example],
    cfg: PolicyConfig = PolicyConfig(),
    mode: str = "greedy",
    seed: int = 0,
) -> float:
    """Fraction of all demo environments where the rollout satisfies the ground truth."""
    hits = [s for p, ex in zip(preds, examples) for s in plan_successes(p, ex, cfg, mode, seed)]
    return float(np.mean(hits)) if hits else 0.0


def metric_seq(pred: Sequence[str], gold: Sequence[str]) -> float:
    if not pred or not gold:
        return 0.0
    m = sum((Counter(pred) & Counter(gold)).values())
    return 2.0 * m / (len(pred) + len(gold))


def metric_exact(pred: Optional[Formula], gold: Formula) -> Optional[bool]:
    """Language equivalence; ``None`` (with a warning) when the support is too large."""
    if pred is None:
        return False
    try:
        return equivalent(pred, gold)
    except SupportTooLarge as exc:
        warnings.warn(f"exact check skipped: {exc}")
        return None


@dataclass
class MetricsReport:
    exec: float
    plan: Optional[float]
    seq_f1: Optional[float]
    exact: Optional[float]
    n_examples: int
    per_class: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("exec", "plan", "seq_f1", "exact"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise EvaluationError(f"{name}={v} outside [0, 1]")
        if self.exact is not None and self.exact > self.exec + 1e-12:
            raise EvaluationError(f"exact {self.exact} exceeds exec {self.exec}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))

    def write_csv(self, path) -> None:
        cols = ("exec", "plan", "seq_f1", "exact", "n_examples")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("class",) + cols)
            w.writerow(("all",) + tuple(getattr(self, c) for c in cols))
            for name in sorted(self.per_class):
                row = self.per_class[name]
                w.writerow((name,) + tuple(row.get(c) for c in cols))


def _summary(preds, examples, cfg, plan_mode, seed) -> dict:
    n = len(examples)
    execs = [exec_success(p, ex) for p, ex in zip(preds, examples)]
    out = {"exec": float(np.mean(execs)) if n else 0.0, "plan": None, "seq_f1": None, "exact": None, "n_examples": n}
    if n and all(ex.formula is not None for ex in examples):
        out["plan"] = metric_plan(preds, examples, cfg, plan_mode, seed)
        out["seq_f1"] = float(
            np.mean([metric_seq(encode_postorder(p) if p is not None else [], encode_postorder(ex.formula)) for p, ex in zip(preds, examples)])
        )
        exact = [metric_exact(p, ex.formula) for p, ex in zip(preds, examples)]
        # skipped checks count as misses so exact stays a lower bound
        out["exact"] = float(np.mean([bool(e) for e in exact]))
        if out["exact"] > out["exec"]:
            raise EvaluationError("exact above exec: an equivalent prediction rejected a gold demo")
    return out


def report(
    preds: Sequence[Optional[Formula]],
    examples: Sequence[Example],
    cfg: PolicyConfig = PolicyConfig(),
    plan_mode: str = "greedy",
    seed: Optional[int] = None,
) -> MetricsReport:
    if len(preds) != len(examples):
        raise EvaluationError("one prediction per example is required")
    overall = _summary(preds, examples, cfg, plan_mode, seed or 0)
    per_class = {}
    labels = sorted({ex.class_label for ex in examples if ex.class_label is not None})
    for c in labels:
        idx = [i for i, ex in enumerate(examples) if ex.class_label == c]
        per_class[c] = _summary([preds[i] for i in idx], [examples[i] for i in idx], cfg, plan_mode, seed or 0)
    return MetricsReport(per_class=per_class, seed=seed, **overall)


def evaluate(
    model,
    lexicon: Lexicon,
    examples: Sequence[Example],
    max_len: int,
    width: int = 10,
    cfg: PolicyConfig = PolicyConfig(),
    plan_mode: str = "greedy",
) -> MetricsReport:
    return report(predict(model, lexicon, examples, max_len, width), examples, cfg, plan_mode)


def random_formula(rng: np.random.Generator, max_len: int = 9) -> Formula:
    """Uniform choice among valid continuations at each step until EOS."""
    seq: list[str] = []
    while True:
        options = sorted(valid_continuations(seq, max_len - len(seq)))
        tok = options[int(rng.integers(len(options)))]
        if tok == TOKENS[-1]:
            return decode_postorder(seq)
        seq.append(tok)


def random_baseline(
    examples: Sequence[Example], seed: int = 0, max_len: int = 9, cfg: PolicyConfig = PolicyConfig()
) -> MetricsReport:
    rng = np.random.default_rng(seed)
    preds = [random_formula(rng, max_len) for _ in examples]
    return report(preds, examples, cfg, seed=seed)
