"""Command line interface: ``groundltl gen|train|eval|parse|run|equiv|baseline``."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .automata import SupportTooLarge, accepts, compile, equivalent
from .dataset import Dataset, GenConfig, Lexicon, SchemaError, generate, ingest_human, read_dataset, write_dataset
from .grammar import tokenize
from .ltl import DESTINATIONS, OBJECTS, TOKENS, MalformedSequence, decode_postorder, from_text, to_infix, to_text
from .metrics import EvaluationError, MissingGroundTruth, evaluate, random_baseline
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .planner import PolicyConfig, rollout, step_likelihoods
from .world import Environment, InvalidEnvironment, describe_valuation, trace_of

SCHEMA_EXIT = 2
EVAL_EXIT = 3


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_data(path: str, human: bool = False, lexicon=None) -> Dataset:
    try:
        return ingest_human(path, lexicon=lexicon) if human else read_dataset(path)
    except (SchemaError, InvalidEnvironment) as exc:
        _fail(SCHEMA_EXIT, str(exc))
    except OSError as exc:
        _fail(SCHEMA_EXIT, str(exc))


def _ckpt_file(path: str) -> Path:
    p = Path(path)
    return p / "model.pt" if p.is_dir() else p


def _select(ds: Dataset, split: str):
    examples = ds.examples if split == "all" else ds.split(split)
    if not examples:
        _fail(SCHEMA_EXIT, f"no examples in split {split!r}")
    return examples


def _formula(text: str):
    try:
        return from_text(text)
    except (MalformedSequence, ValueError) as exc:
        _fail(SCHEMA_EXIT, f"bad formula {text!r}: {exc}")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Ground natural-language commands in temporal logic."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@click.option("--n", default=1000, show_default=True)
@click.option("--k", default=3, show_default=True, help="Demonstrations per command.")
@click.option("--seed", default=0, show_default=True)
@click.option("--items", default=",".join(OBJECTS), show_default=True)
@click.option("--landmarks", default=",".join(DESTINATIONS), show_default=True)
@click.option("--max-tokens", type=int, default=None, help="Drop formulas longer than this.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def gen(n, k, seed, items, landmarks, max_tokens, out):
    """Generate a machine dataset as JSONL."""
    cfg = GenConfig(
        n=n,
        k=k,
        seed=seed,
        items=tuple(s for s in items.upper().split(",") if s),
        landmarks=tuple(s for s in landmarks.upper().split(",") if s),
        max_tokens=max_tokens,
    )
    write_dataset(generate(cfg), out)
    click.echo(f"wrote {n} examples to {out}")


@main.command()
@click.option("--method", type=click.Choice(["rl", "iml"]), default="iml", show_default=True)
@click.option("--generator", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=50, show_default=True)
@click.option("--K", "K", default=128, show_default=True, help="Samples per sentence.")
@click.option("--batch-size", default=16, show_default=True)
@click.option("--hidden", default=64, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def train(method, generator, data, seed, epochs, K, batch_size, hidden, out):
    """Train from sentences and demonstrations only."""
    from .train import TrainConfig, train as run_training

    ds = _load_data(data)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(method=method, use_generator=generator == "on", epochs=epochs, K=K, batch_size=batch_size, seed=seed)
    with open(out / "metrics.jsonl", "w") as log_fh:
        res = run_training(
            ds,
            cfg,
            ModelConfig(hidden=hidden),
            on_epoch=lambda row: log_fh.write(json.dumps(row, sort_keys=True) + "\n"),
        )
    save_checkpoint(out / "model.pt", res.model, res.lexicon.words, {"max_len": res.max_len, "best_epoch": res.best_epoch})
    click.echo(f"best epoch {res.best_epoch}; checkpoint in {out / 'model.pt'}")


@main.command("eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.option("--human", is_flag=True, help="Data is a human-sentence file.")
@click.option("--width", default=10, show_default=True)
@click.option("--plan-mode", type=click.Choice(["greedy", "sample"]), default="greedy", show_default=True)
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", default=None, type=click.Path(dir_okay=False))
def eval_cmd(ckpt, data, split, human, width, plan_mode, report_path, csv_path):
    """Evaluate a checkpoint (Exec, Plan, Seq, Exact)."""
    model, words, extra = load_checkpoint(_ckpt_file(ckpt))
    lexicon = Lexicon(words)
    ds = _load_data(data, human, lexicon)
    examples = _select(ds, split)
    try:
        rep = evaluate(model, lexicon, examples, extra.get("max_len", 9), width, PolicyConfig(), plan_mode)
    except (EvaluationError, MissingGroundTruth) as exc:
        _fail(EVAL_EXIT, str(exc))
    Path(report_path).write_text(rep.to_json())
    if csv_path:
        rep.write_csv(csv_path)
    click.echo(rep.to_json(), nl=False)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--sentence", required=True)
@click.option("--width", default=10, show_default=True)
@click.option("--max-len", type=int, default=None)
def parse(ckpt, sentence, width, max_len):
    """Print beam candidates with log-probabilities."""
    model, words, extra = load_checkpoint(_ckpt_file(ckpt))
    ids = Lexicon(words).encode(tokenize(sentence))
    if not ids:
        _fail(SCHEMA_EXIT, "empty sentence")
    for toks, score in model.beam(model.encode([ids]), max_len or extra.get("max_len", 9), width):
        f = decode_postorder(TOKENS[t] for t in toks)
        click.echo(f"{score:9.4f}  {to_text(f):40s}  {to_infix(f)}")


@main.command()
@click.option("--formula", required=True, help="Postorder tokens separated by spaces.")
@click.option("--env", "env_arg", required=True, help="Environment JSON or a path to it.")
@click.option("--mode", type=click.Choice(["greedy", "sample"]), default="greedy", show_default=True)
@click.option("--seed", default=0, show_default=True)
def run(formula, env_arg, mode, seed):
    """Execute a formula with the planner and show the trace."""
    f = _formula(formula)
    try:
        text = env_arg if env_arg.lstrip().startswith("{") else Path(env_arg).read_text()
        env = Environment.from_dict(json.loads(text))
    except (json.JSONDecodeError, InvalidEnvironment, OSError) as exc:
        _fail(SCHEMA_EXIT, f"bad environment: {exc}")
    cfg = PolicyConfig()
    actions = rollout(f, env, cfg, mode, np.random.default_rng(seed))
    probs = step_likelihoods(f, env, actions, cfg)
    trace = trace_of(env, actions)
    click.echo(env.render())
    for t, (a, p, v) in enumerate(zip(actions, probs, trace), 1):
        click.echo(f"{t:2d} {a:5s} p={p:.3f}  {describe_valuation(v)}")
    verdict = accepts(compile(f), trace)
    click.echo("ACCEPT" if verdict else "REJECT")


@main.command()
@click.argument("f1")
@click.argument("f2")
def equiv(f1, f2):
    """Check language equivalence of two postorder formulas."""
    a, b = _formula(f1), _formula(f2)
    try:
        same = equivalent(a, b)
    except SupportTooLarge as exc:
        _fail(EVAL_EXIT, str(exc))
    click.echo("equivalent" if same else "not equivalent")


@main.command()
@click.argument("kind", type=click.Choice(["random", "supervised"]))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=50, show_default=True)
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Checkpoint dir (supervised).")
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
def baseline(kind, data, split, seed, epochs, out, report_path):
    """Random-formula or supervised reference results."""
    ds = _load_data(data)
    examples = _select(ds, split)
    try:
        if kind == "random":
            rep = random_baseline(examples, seed)
        else:
            from .train import TrainConfig, supervised_train

            res = supervised_train(ds, TrainConfig(epochs=epochs, seed=seed, use_generator=False))
            if out:
                Path(out).mkdir(parents=True, exist_ok=True)
                save_checkpoint(Path(out) / "model.pt", res.model, res.lexicon.words, {"max_len": res.max_len})
            rep = evaluate(res.model, res.lexicon, examples, res.max_len)
            rep.seed = seed
    except (EvaluationError, MissingGroundTruth) as exc:
        _fail(EVAL_EXIT, str(exc))
    Path(report_path).write_text(rep.to_json())
    click.echo(rep.to_json(), nl=False)


if __name__ == "__main__":
    main()
