"""Shared generators for tests."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from hypothesis import strategies as st

from groundltl.dataset import GenConfig, generate
from groundltl.ltl import PREDICATE_BIT, PREDICATES, Always, And, Atom, Eventually, Or, Until

UNARY = (Eventually, Always)
BINARY = (And, Or, Until)

REDUCED = GenConfig(n=334, seed=0, items=("APPLE",), landmarks=("FLAG", "TREE"), max_tokens=7)


def reduced_dataset(seed: int = 0):
    """Three-predicate grammar, formulas of at most 7 tokens, 200 train / 50 test."""
    ds = generate(replace(REDUCED, seed=seed))
    train = ds.split("train")[:200]
    keep = set(map(id, train + ds.split("val") + ds.split("test")[:50]))
    ds.examples = [ex for ex in ds.examples if id(ex) in keep]
    return ds


def random_formula(rng: np.random.Generator, names=PREDICATES, size: int = 6):
    """Random tree with about ``size`` nodes."""
    if size <= 1 or rng.random() < 0.2:
        return Atom(names[int(rng.integers(len(names)))])
    if rng.random() < 0.4:
        return UNARY[int(rng.integers(2))](random_formula(rng, names, size - 1))
    k = int(rng.integers(1, size - 1)) if size > 2 else 1
    op = BINARY[int(rng.integers(3))]
    return op(random_formula(rng, names, k), random_formula(rng, names, size - 1 - k))


def random_trace(rng: np.random.Generator, names=PREDICATES, length: int = 5) -> list[int]:
    bits = [PREDICATE_BIT[p] for p in names]
    out = []
    for _ in range(length):
        v = 0
        for b in bits:
            if rng.random() < 0.5:
                v |= b
        out.append(v)
    return out


def formulas(names=PREDICATES, max_leaves: int = 4):
    atom = st.sampled_from(names).map(Atom)
    return st.recursive(
        atom,
        lambda kids: st.one_of(
            st.builds(Eventually, kids),
            st.builds(Always, kids),
            st.builds(And, kids, kids),
            st.builds(Or, kids, kids),
            st.builds(Until, kids, kids),
        ),
        max_leaves=max_leaves,
    )


def traces(names=PREDICATES, min_size: int = 1, max_size: int = 8):
    bits = [PREDICATE_BIT[p] for p in names]
    val = st.lists(st.booleans(), min_size=len(bits), max_size=len(bits)).map(
        lambda flags: sum(b for b, f in zip(bits, flags) if f)
    )
    return st.lists(val, min_size=min_size, max_size=max_size)


def oracle_holds(f, trace, i: int = 0) -> bool:
    """Direct recursive reading of finite-trace semantics."""
    n = len(trace)
    if isinstance(f, Atom):
        return bool(trace[i] & PREDICATE_BIT[f.name])
    if isinstance(f, And):
        return oracle_holds(f.left, trace, i) and oracle_holds(f.right, trace, i)
    if isinstance(f, Or):
        return oracle_holds(f.left, trace, i) or oracle_holds(f.right, trace, i)
    if isinstance(f, Eventually):
        return any(oracle_holds(f.arg, trace, j) for j in range(i, n))
    if isinstance(f, Always):
        return all(oracle_holds(f.arg, trace, j) for j in range(i, n))
    if isinstance(f, Until):
        for j in range(i, n):
            if oracle_holds(f.right, trace, j):
                return True
            if not oracle_holds(f.left, trace, j):
                return False
        return False
    raise TypeError(f)


def oracle_table(f, traces: np.ndarray) -> np.ndarray:
    """Truth of ``f`` at every position of each trace, shape (N, L)."""
    if isinstance(f, Atom):
        return (traces & PREDICATE_BIT[f.name]) != 0
    if isinstance(f, (And, Or)):
        a, b = oracle_table(f.left, traces), oracle_table(f.right, traces)
        return a & b if isinstance(f, And) else a | b
    if isinstance(f, (Eventually, Always)):
        a = oracle_table(f.arg, traces)
        acc = np.logical_or.accumulate if isinstance(f, Eventually) else np.logical_and.accumulate
        return acc(a[:, ::-1], axis=1)[:, ::-1]
    if isinstance(f, Until):
        a, b = oracle_table(f.left, traces), oracle_table(f.right, traces)
        out = np.zeros_like(a)
        nxt = np.zeros(len(traces), dtype=bool)
        for j in range(traces.shape[1] - 1, -1, -1):
            nxt = b[:, j] | (a[:, j] & nxt)
            out[:, j] = nxt
        return out
    raise TypeError(f)


def atoms_of(f) -> set:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, (Eventually, Always)):
        return atoms_of(f.arg)
    return atoms_of(f.left) | atoms_of(f.right)


def all_traces(names, max_len: int):
    """Every trace over ``names`` up to ``max_len``, grouped by length."""
    bits = [PREDICATE_BIT[p] for p in names]
    masks = [sum(b for b, on in zip(bits, flags) if on) for flags in np.ndindex(*(2,) * len(bits))]
    for n in range(1, max_len + 1):
        grid = np.array(np.meshgrid(*[masks] * n, indexing="ij")).reshape(n, -1).T
        yield grid.astype(np.int64)


def bounded_equivalent(f, g, max_len: int = 5) -> bool:
    names = sorted(atoms_of(f) | atoms_of(g))
    return all((oracle_table(f, t)[:, 0] == oracle_table(g, t)[:, 0]).all() for t in all_traces(names, max_len))


def finite_difference_errors(model, loss_fn, h: float = 1e-6) -> dict:
    """Relative error between autograd and central differences, per parameter block that gets a gradient."""
    model.zero_grad()
    loss_fn().backward()
    errs = {}
    for name, p in model.named_parameters():
        if p.grad is None:
            continue
        analytic = p.grad.detach().clone().flatten()
        numeric = analytic.new_zeros(analytic.shape)
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        denom = max(float(numeric.norm() + analytic.norm()), 1e-10)
        errs[name] = float((numeric - analytic).norm()) / denom
    return errs


# acceptance outcomes, printed in the terminal summary
RESULTS: dict[int, tuple[bool, str]] = {}
