"""Weakly supervised training from sentences and demonstrations only.

A sampled formula earns reward only if it accepts every demonstration of
its sentence; it then earns the planner's mean per-step likelihood of those
demonstrations. Two learners are provided: REINFORCE and iterative maximum
likelihood (IML) on the best formulas found so far.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .automata import accepts, compile
from .dataset import Dataset, Demo, Example, Lexicon
from .ltl import TOKEN_INDEX, TOKENS, Formula, decode_postorder, encode_postorder, formula_length
from .model import ModelConfig, ParserModel, grad_step, make_optimizer
from .planner import PolicyConfig, trajectory_likelihood

log = logging.getLogger(__name__)


class EmptyHistory(ValueError):
    pass


@dataclass
class TrainConfig:
    method: str = "iml"
    use_generator: bool = True
    K: int = 128
    eps: float = 0.15
    k_demos: int = 3
    epochs: int = 50
    curriculum_start_len: int = 3
    curriculum_step: int = 3
    curriculum_every: int = 10
    # (first epoch, alpha) pairs; small weight first so the reward can take hold
    alpha_schedule: tuple = ((0, 0.1), (10, 1.0))
    iml_inner_epochs: int = 10
    batch_size: int = 16
    beam_width: int = 10
    eval_every: int = 1
    seed: int = 0
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        if self.method not in ("rl", "iml"):
            raise ValueError("method must be 'rl' or 'iml'")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        epochs = [e for e, _ in self.alpha_schedule]
        if epochs != sorted(epochs):
            raise ValueError("alpha schedule epochs must be nondecreasing")

    def alpha(self, epoch: int) -> float:
        a = 0.0
        for start, value in self.alpha_schedule:
            if epoch >= start:
                a = value
        return a


def curriculum_len(epoch: int, cfg: TrainConfig) -> int:
    return cfg.curriculum_start_len + cfg.curriculum_step * (epoch // cfg.curriculum_every)


def reward(zhat: Formula, demos: Sequence[Demo], policy: PolicyConfig = PolicyConfig()) -> float:
    """Zero unless every demo is accepted; else mean trajectory likelihood."""
    a = compile(zhat)
    for d in demos:
        if not accepts(a, d.trace()):
            return 0.0
    return float(np.mean([trajectory_likelihood(zhat, d.env, d.actions, policy) for d in demos]))


@dataclass
class Candidate:
    tokens: tuple
    reward: float
    accepted_all: bool


class RewardCache:
    """Memoizes rewards per (token sequence, example index)."""

    def __init__(self, examples: Sequence[Example], policy: PolicyConfig):
        self.examples = examples
        self.policy = policy
        self.table: dict[tuple, float] = {}

    def __call__(self, ids: Sequence[int], i: int) -> float:
        key = (tuple(ids), i)
        hit = self.table.get(key)
        if hit is None:
            f = decode_postorder(TOKENS[t] for t in ids)
            hit = reward(f, self.examples[i].demos, self.policy)
            self.table[key] = hit
        return hit


def score_candidates(candidates: Sequence[Sequence[int]], ex: Example, policy: PolicyConfig = PolicyConfig()) -> list[Candidate]:
    """Reward and demo acceptance for each candidate token sequence."""
    out = []
    for ids in candidates:
        f = decode_postorder(TOKENS[t] for t in ids)
        a = compile(f)
        ok = all(accepts(a, d.trace()) for d in ex.demos)
        r = reward(f, ex.demos, policy) if ok else 0.0
        out.append(Candidate(tuple(ids), r, ok))
    return out


def surrogate_loss(model: ParserModel, enc, weights: dict, max_len: int) -> torch.Tensor:
    """-sum_w w * log p(z | x_b) over ``{(row b, tokens z): w}``."""
    keys = list(weights)
    sub = enc.__class__(*(t[[b for b, _ in keys]] for t in (enc.feats, enc.mask, enc.summary)))
    logp = model.formula_logprob(sub, [list(z) for _, z in keys], max_len)
    w = torch.tensor([weights[k] for k in keys], dtype=logp.dtype)
    return -(w * logp).sum()


def select_model(val_history: Sequence[tuple[int, float]]) -> int:
    """Epoch with the best validation Exec; later epochs win ties."""
    if not val_history:
        raise EmptyHistory("no validation results")
    best_epoch, best = val_history[0]
    for epoch, score in val_history[1:]:
        if score >= best:
            best_epoch, best = epoch, score
    return best_epoch


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + size] for i in range(0, n, size)]


def _encode_batch(model: ParserModel, lexicon: Lexicon, examples, idx):
    ids = [lexicon.encode(examples[i].sentence) for i in idx]
    return ids, model.encode(ids)


def reinforce_epoch(
    model: ParserModel,
    optimizer,
    examples: Sequence[Example],
    lexicon: Lexicon,
    cfg: TrainConfig,
    epoch: int,
    rewards: RewardCache,
    rng: np.random.Generator,
    gen: torch.Generator,
) -> dict:
    """One pass of REINFORCE with ε-dithered sampling and optional generator loss."""
    max_len = curriculum_len(epoch, cfg)
    alpha = cfg.alpha(epoch) if cfg.use_generator else 0.0
    total, nonzero, count = 0.0, 0, 0
    for idx in _batches(len(examples), cfg.batch_size, rng):
        model.eval()
        with torch.no_grad():
            ids, enc = _encode_batch(model, lexicon, examples, idx)
            samples = model.sample(enc.repeat(cfg.K), max_len, cfg.eps, gen)
        weights: dict[tuple, float] = {}
        for row, z in enumerate(samples):
            b = row // cfg.K
            r = rewards(z, int(idx[b]))
            total += r
            nonzero += r > 0
            count += 1
            if r > 0:
                key = (b, tuple(z))
                weights[key] = weights.get(key, 0.0) + r / (cfg.K * len(idx))
        model.train()
        ids, enc = _encode_batch(model, lexicon, examples, idx)
        loss = None
        if weights:
            loss = surrogate_loss(model, enc, weights, max_len)
        if alpha > 0:
            recon = alpha * model.reconstruction_loss(enc, ids).mean()
            loss = recon if loss is None else loss + recon
        if loss is not None:
            grad_step(model, optimizer, loss)
    return {"mean_reward": total / max(count, 1), "nonzero": nonzero / max(count, 1), "max_len": max_len}


@dataclass
class PseudoGold:
    reward: float
    formulas: set


def iml_iteration(
    model: ParserModel,
    optimizer,
    examples: Sequence[Example],
    lexicon: Lexicon,
    cfg: TrainConfig,
    epoch: int,
    store: dict[int, PseudoGold],
    rewards: RewardCache,
    rng: np.random.Generator,
    gen: torch.Generator,
) -> dict:
    """Explore with K samples per example, update pseudo-gold, then fit it."""
    max_len = curriculum_len(epoch, cfg)
    total, count = 0.0, 0
    model.eval()
    for idx in _batches(len(examples), cfg.batch_size, rng):
        with torch.no_grad():
            _, enc = _encode_batch(model, lexicon, examples, idx)
            samples = model.sample(enc.repeat(cfg.K), max_len, cfg.eps, gen)
        for b, i in enumerate(idx):
            i = int(i)
            rows = samples[b * cfg.K : (b + 1) * cfg.K]
            scored = {tuple(z): rewards(z, i) for z in rows}
            total += sum(rewards(z, i) for z in rows)
            count += len(rows)
            best = max(scored.values())
            if best <= 0:
                continue
            top = {z for z, r in scored.items() if r == best}
            held = store.get(i)
            if held is None or best > held.reward:
                store[i] = PseudoGold(best, top)
            elif best == held.reward:
                held.formulas |= top

    alpha = 1.0 if cfg.use_generator else 0.0
    losses = []
    for _ in range(cfg.iml_inner_epochs):
        model.train()
        for idx in _batches(len(examples), cfg.batch_size, rng):
            ids, enc = _encode_batch(model, lexicon, examples, idx)
            rows, targets, weights = [], [], []
            for b, i in enumerate(idx):
                pg = store.get(int(i))
                if pg is None:
                    continue
                for z in sorted(pg.formulas):
                    rows.append(b)
                    targets.append(list(z))
                    weights.append(1.0 / len(pg.formulas))
            loss = None
            if rows:
                sub = enc.__class__(*(t[rows] for t in (enc.feats, enc.mask, enc.summary)))
                budget = max(max_len, max(len(t) for t in targets))
                logp = model.formula_logprob(sub, targets, budget)
                w = torch.tensor(weights, dtype=logp.dtype)
                loss = -(w * logp).sum() / len(idx)
            if alpha > 0:
                recon = alpha * model.reconstruction_loss(enc, ids).mean()
                loss = recon if loss is None else loss + recon
            if loss is not None:
                grad_step(model, optimizer, loss)
                losses.append(loss.item())
    return {
        "mean_reward": total / max(count, 1),
        "pseudo_gold": len(store),
        "pseudo_gold_reward": float(np.mean([p.reward for p in store.values()])) if store else 0.0,
        "loss": float(np.mean(losses)) if losses else 0.0,
        "max_len": max_len,
    }


def supervised_epoch(
    model: ParserModel,
    optimizer,
    examples: Sequence[Example],
    lexicon: Lexicon,
    cfg: TrainConfig,
    max_len: int,
    rng: np.random.Generator,
) -> float:
    """Teacher-forced MLE on gold formulas; returns the mean batch loss."""
    model.train()
    losses = []
    for idx in _batches(len(examples), cfg.batch_size, rng):
        ids, enc = _encode_batch(model, lexicon, examples, idx)
        targets = [[TOKEN_INDEX[t] for t in _gold_tokens(examples[i])] for i in idx]
        budget = max(max_len, max(len(t) for t in targets))
        loss = -model.formula_logprob(enc, targets, budget).mean()
        if cfg.use_generator:
            loss = loss + model.reconstruction_loss(enc, ids).mean()
        grad_step(model, optimizer, loss)
        losses.append(loss.item())
    return float(np.mean(losses))


def _gold_tokens(ex: Example) -> list[str]:
    return encode_postorder(ex.formula)


def seed_everything(seed: int) -> tuple[np.random.Generator, torch.Generator]:
    torch.manual_seed(seed)
    return np.random.default_rng(seed), torch.Generator().manual_seed(seed)


@dataclass
class TrainResult:
    model: ParserModel
    lexicon: Lexicon
    history: list[dict]
    best_epoch: int
    max_len: int


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    model_cfg: ModelConfig = ModelConfig(),
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Train from (sentence, demonstrations) pairs; selects the best validation Exec."""
    from .metrics import exec_score, metric_plan, predict

    rng, gen = seed_everything(cfg.seed)
    lexicon = dataset.lexicon
    train_ex = dataset.split("train")
    val_ex = dataset.split("val") or train_ex
    model = ParserModel(len(lexicon), model_cfg)
    optimizer = make_optimizer(model, model_cfg.lr)
    rewards = RewardCache(train_ex, cfg.policy)
    store: dict[int, PseudoGold] = {}

    history: list[dict] = []
    snapshots: dict[int, dict] = {}
    lengths: dict[int, int] = {}
    if cfg.method == "rl":
        steps = [(e, e) for e in range(cfg.epochs)]
    else:
        steps = [(r, r * cfg.iml_inner_epochs) for r in range(max(1, cfg.epochs // cfg.iml_inner_epochs))]
    for n, epoch in steps:
        if cfg.method == "rl":
            stats = reinforce_epoch(model, optimizer, train_ex, lexicon, cfg, epoch, rewards, rng, gen)
        else:
            stats = iml_iteration(model, optimizer, train_ex, lexicon, cfg, epoch, store, rewards, rng, gen)
        row = {"epoch": epoch, "step": n, **stats}
        if (n + 1) % cfg.eval_every == 0 or n == steps[-1][0]:
            max_len = curriculum_len(epoch, cfg)
            preds = predict(model, lexicon, val_ex, max_len, cfg.beam_width)
            row["val_exec"] = exec_score(preds, val_ex)
            if all(ex.formula is not None for ex in val_ex):
                row["val_plan"] = metric_plan(preds, val_ex, cfg.policy)
            snapshots[epoch] = copy.deepcopy(model.state_dict())
            lengths[epoch] = max_len
        history.append(row)
        log.info("%s", json.dumps(row))
        if on_epoch is not None:
            on_epoch(row)
    best = select_model([(r["epoch"], r["val_exec"]) for r in history if "val_exec" in r])
    model.load_state_dict(snapshots[best])
    model.eval()
    return TrainResult(model, lexicon, history, best, lengths[best])


def supervised_train(
    dataset: Dataset,
    cfg: TrainConfig,
    model_cfg: ModelConfig = ModelConfig(),
    max_len: Optional[int] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Upper-bound reference: MLE on gold formulas with the same constrained decoder."""
    from .metrics import MissingGroundTruth, exec_score, predict

    train_ex = dataset.split("train")
    if any(ex.formula is None for ex in train_ex):
        raise MissingGroundTruth("supervised training needs gold formulas")
    rng, _ = seed_everything(cfg.seed)
    lexicon = dataset.lexicon
    val_ex = dataset.split("val") or train_ex
    if max_len is None:
        max_len = max(formula_length(ex.formula) for ex in train_ex)
    model = ParserModel(len(lexicon), model_cfg)
    optimizer = make_optimizer(model, model_cfg.lr)
    history, snapshots = [], {}
    for epoch in range(cfg.epochs):
        loss = supervised_epoch(model, optimizer, train_ex, lexicon, cfg, max_len, rng)
        row = {"epoch": epoch, "loss": loss}
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            row["val_exec"] = exec_score(predict(model, lexicon, val_ex, max_len, cfg.beam_width), val_ex)
            snapshots[epoch] = copy.deepcopy(model.state_dict())
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    best = select_model([(r["epoch"], r["val_exec"]) for r in history if "val_exec" in r])
    model.load_state_dict(snapshots[best])
    model.eval()
    return TrainResult(model, lexicon, history, best, max_len)
