"""Sentence encoder with two attentional decoders.

The parser decoder emits postorder formula tokens; at every step tokens that
cannot lead to a well-formed formula within the length budget are removed
from the softmax. The generator decoder reconstructs the input sentence from
the same encoding and only contributes an auxiliary loss.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .ltl import ARITY, BOS, EOS, SYMBOLS, TOKEN_INDEX, TOKENS

N_OUT = len(TOKENS)
EOS_ID = TOKEN_INDEX[EOS]
BOS_ID = TOKEN_INDEX[BOS]
_ARITY = torch.tensor([ARITY[t] for t in SYMBOLS])
_DELTA = torch.tensor([1 - ARITY[t] for t in SYMBOLS] + [0])

CHECKPOINT_VERSION = 1


class EmptySentence(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    word_dim: int = 32
    token_dim: int = 32
    hidden: int = 64
    layers: int = 1
    dropout: float = 0.2
    lr: float = 1e-3

    def __post_init__(self):
        if min(self.word_dim, self.token_dim, self.hidden, self.layers) <= 0:
            raise ValueError("model dimensions must be positive")


def continuation_mask(depth: torch.Tensor, remaining: torch.Tensor) -> torch.Tensor:
    """(B, N_OUT) mask of syntactically allowed next tokens.

    Vectorized form of :func:`groundltl.ltl.valid_continuations`.
    """
    d = depth.unsqueeze(1)
    r = remaining.unsqueeze(1)
    a = _ARITY.to(depth.device).unsqueeze(0)
    sym = (r >= 1) & (d >= a) & (d - a <= r - 1)
    return torch.cat([sym, (depth == 1).unsqueeze(1)], dim=1)


def _masks_for(targets: Sequence[Sequence[int]], max_len: int, steps: int) -> torch.Tensor:
    """Allowed-token masks along teacher-forced target sequences (with EOS)."""
    B = len(targets)
    tgt = torch.full((B, steps), EOS_ID, dtype=torch.long)
    for i, t in enumerate(targets):
        tgt[i, : len(t)] = torch.tensor(t, dtype=torch.long)
    delta = _DELTA[tgt.clamp(max=EOS_ID)]
    depth = torch.cumsum(delta, dim=1) - delta  # depth before each step
    remaining = max_len - torch.arange(steps).unsqueeze(0).expand(B, steps)
    return continuation_mask(depth.reshape(-1), remaining.reshape(-1)).view(B, steps, N_OUT)


class Decoder(nn.Module):
    """LSTM decoder with bilinear attention over encoder features.

    Output logits are ``W_o [prev embedding; context; state]``, with dropout
    applied to that concatenation only.
    """

    def __init__(self, n_in: int, n_out: int, emb_dim: int, hidden: int, enc_dim: int, layers: int, dropout: float):
        super().__init__()
        self.layers, self.hidden = layers, hidden
        self.embed = nn.Embedding(n_in, emb_dim)
        self.rnn = nn.LSTM(emb_dim, hidden, layers, batch_first=True)
        self.init = nn.Linear(enc_dim, hidden * layers)
        self.attn = nn.Linear(hidden, enc_dim, bias=False)
        self.out = nn.Linear(emb_dim + enc_dim + hidden, n_out)
        self.drop = nn.Dropout(dropout)

    def start(self, summary: torch.Tensor):
        B = summary.shape[0]
        h = torch.tanh(self.init(summary)).view(B, self.layers, self.hidden).transpose(0, 1).contiguous()
        return h, torch.zeros_like(h)

    def forward(self, inputs: torch.Tensor, state, enc: torch.Tensor, enc_mask: torch.Tensor):
        """inputs (B, T) -> logits (B, T, n_out), final state."""
        e = self.embed(inputs)
        s, state = self.rnn(e, state)
        scores = torch.bmm(self.attn(s), enc.transpose(1, 2))
        scores = scores.masked_fill(~enc_mask.unsqueeze(1), float("-inf"))
        ctx = torch.bmm(torch.softmax(scores, dim=-1), enc)
        return self.out(self.drop(torch.cat([e, ctx, s], dim=-1))), state


@dataclass
class Encoded:
    feats: torch.Tensor  # (B, n, 2H)
    mask: torch.Tensor  # (B, n)
    summary: torch.Tensor  # (B, 2H)

    def repeat(self, k: int) -> "Encoded":
        return Encoded(
            self.feats.repeat_interleave(k, 0),
            self.mask.repeat_interleave(k, 0),
            self.summary.repeat_interleave(k, 0),
        )


class ParserModel(nn.Module):
    """Shared bidirectional encoder, formula decoder and sentence generator."""

    def __init__(self, n_words: int, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        self.n_words = n_words
        H = cfg.hidden
        self.word_embed = nn.Embedding(n_words, cfg.word_dim)
        self.encoder = nn.LSTM(cfg.word_dim, H, cfg.layers, batch_first=True, bidirectional=True)
        self.parser = Decoder(len(TOKENS) + 1, N_OUT, cfg.token_dim, H, 2 * H, cfg.layers, cfg.dropout)
        # generator input vocabulary has an extra BOS row at index n_words
        self.generator = Decoder(n_words + 1, n_words, cfg.word_dim, H, 2 * H, cfg.layers, cfg.dropout)

    # -- encoder ---------------------------------------------------------------

    def encode(self, sentences: Sequence[Sequence[int]]) -> Encoded:
        if any(len(s) == 0 for s in sentences):
            raise EmptySentence("cannot encode an empty sentence")
        lengths = torch.tensor([len(s) for s in sentences])
        n = int(lengths.max())
        ids = torch.zeros((len(sentences), n), dtype=torch.long)
        for i, s in enumerate(sentences):
            ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        packed = pack_padded_sequence(self.word_embed(ids), lengths, batch_first=True, enforce_sorted=False)
        out, (h, _) = self.encoder(packed)
        feats, _ = pad_packed_sequence(out, batch_first=True, total_length=n)
        mask = torch.arange(n).unsqueeze(0) < lengths.unsqueeze(1)
        summary = torch.cat([h[-2], h[-1]], dim=1)
        return Encoded(feats, mask, summary)

    # -- parser decoder ----------------------------------------------------------

    def formula_logprob(self, enc: Encoded, targets: Sequence[Sequence[int]], max_len: int) -> torch.Tensor:
        """log p(z | x) of each target (token ids without EOS), shape (B,)."""
        steps = max(len(t) for t in targets) + 1
        B = len(targets)
        gold = torch.full((B, steps), EOS_ID, dtype=torch.long)
        inputs = torch.full((B, steps), BOS_ID, dtype=torch.long)
        for i, t in enumerate(targets):
            gold[i, : len(t)] = torch.tensor(t, dtype=torch.long)
            inputs[i, 1 : len(t) + 1] = torch.tensor(t, dtype=torch.long)
        logits, _ = self.parser(inputs, self.parser.start(enc.summary), enc.feats, enc.mask)
        masks = _masks_for(targets, max_len, steps)
        logp = torch.log_softmax(logits.masked_fill(~masks, float("-inf")), dim=-1)
        picked = logp.gather(2, gold.unsqueeze(2)).squeeze(2)
        valid = torch.arange(steps).unsqueeze(0) <= torch.tensor([len(t) for t in targets]).unsqueeze(1)
        return torch.where(valid, picked, torch.zeros_like(picked)).sum(dim=1)

    def step_distribution(self, enc: Encoded, prefixes: Sequence[Sequence[int]], max_len: int) -> torch.Tensor:
        """Masked next-token distributions after each prefix, shape (B, N_OUT)."""
        steps = max((len(p) for p in prefixes), default=0) + 1
        B = len(prefixes)
        inputs = torch.full((B, steps), BOS_ID, dtype=torch.long)
        for i, p in enumerate(prefixes):
            if p:
                inputs[i, 1 : len(p) + 1] = torch.tensor(p, dtype=torch.long)
        logits, _ = self.parser(inputs, self.parser.start(enc.summary), enc.feats, enc.mask)
        idx = torch.tensor([len(p) for p in prefixes])
        last = logits[torch.arange(B), idx]
        depth = torch.tensor([sum(int(_DELTA[t]) for t in p) for p in prefixes])
        mask = continuation_mask(depth, max_len - idx)
        return torch.softmax(last.masked_fill(~mask, float("-inf")), dim=-1)

    @torch.no_grad()
    def sample(
        self,
        enc: Encoded,
        max_len: int,
        eps: float = 0.15,
        generator: Optional[torch.Generator] = None,
    ) -> list[list[int]]:
        """One ε-dithered sample per row of ``enc``.

        Each step draws from the model with probability 1-ε and uniformly
        from the allowed tokens otherwise.
        """
        B = enc.feats.shape[0]
        state = self.parser.start(enc.summary)
        prev = torch.full((B,), BOS_ID, dtype=torch.long)
        depth = torch.zeros(B, dtype=torch.long)
        done = torch.zeros(B, dtype=torch.bool)
        out = [[] for _ in range(B)]
        for t in range(max_len + 1):
            logits, state = self.parser(prev.unsqueeze(1), state, enc.feats, enc.mask)
            mask = continuation_mask(depth, torch.full((B,), max_len - t))
            probs = torch.softmax(logits[:, 0].masked_fill(~mask, float("-inf")), dim=-1)
            uniform = mask.float() / mask.float().sum(1, keepdim=True)
            explore = torch.rand(B, generator=generator) < eps
            mix = torch.where(explore.unsqueeze(1), uniform, probs)
            tok = torch.multinomial(mix, 1, generator=generator).squeeze(1)
            tok = torch.where(done, torch.full_like(tok, EOS_ID), tok)
            for i in torch.nonzero(~done & (tok != EOS_ID)).flatten().tolist():
                out[i].append(int(tok[i]))
            done = done | (tok == EOS_ID)
            depth = depth + _DELTA[tok]
            prev = tok
            if bool(done.all()):
                break
        return out

    @torch.no_grad()
    def beam(self, enc: Encoded, max_len: int, width: int = 10) -> list[tuple[list[int], float]]:
        """Beam search for one sentence; returns (tokens, log-prob) best first."""
        if enc.feats.shape[0] != 1:
            raise ValueError("beam search decodes one sentence at a time")
        alive = [([], 0.0, 0)]  # tokens, score, depth
        state = self.parser.start(enc.summary)
        finished: list[tuple[list[int], float]] = []
        for t in range(max_len + 1):
            k = len(alive)
            prev = torch.tensor([a[0][-1] if a[0] else BOS_ID for a in alive])
            logits, new_state = self.parser(
                prev.unsqueeze(1), state, enc.feats.expand(k, -1, -1), enc.mask.expand(k, -1)
            )
            depth = torch.tensor([a[2] for a in alive])
            mask = continuation_mask(depth, torch.full((k,), max_len - t))
            logp = torch.log_softmax(logits[:, 0].masked_fill(~mask, float("-inf")), dim=-1)
            cands = []
            for i, (toks, score, d) in enumerate(alive):
                for j in torch.nonzero(mask[i]).flatten().tolist():
                    cands.append((score + float(logp[i, j]), i, j))
            cands.sort(key=lambda c: -c[0])
            nxt, keep = [], []
            # finished hypotheses use up beam slots, so width 1 is greedy decoding
            for score, i, j in cands[: width - len(finished)]:
                toks, _, d = alive[i]
                if j == EOS_ID:
                    finished.append((toks, score))
                else:
                    nxt.append((toks + [j], score, d + int(_DELTA[j])))
                    keep.append(i)
            if not nxt:
                break
            idx = torch.tensor(keep)
            state = (new_state[0][:, idx], new_state[1][:, idx])
            alive = nxt
        finished.sort(key=lambda f: -f[1])
        return finished

    # -- generator decoder ---------------------------------------------------------

    def reconstruction_loss(self, enc: Encoded, sentences: Sequence[Sequence[int]]) -> torch.Tensor:
        """Teacher-forced -log p(x | x) per sentence, shape (B,)."""
        B = len(sentences)
        n = max(len(s) for s in sentences)
        gold = torch.zeros((B, n), dtype=torch.long)
        inputs = torch.full((B, n), self.n_words, dtype=torch.long)
        for i, s in enumerate(sentences):
            gold[i, : len(s)] = torch.tensor(s, dtype=torch.long)
            inputs[i, 1 : len(s)] = torch.tensor(s[:-1], dtype=torch.long)
        logits, _ = self.generator(inputs, self.generator.start(enc.summary), enc.feats, enc.mask)
        nll = F.cross_entropy(logits.reshape(B * n, -1), gold.reshape(-1), reduction="none").view(B, n)
        valid = torch.arange(n).unsqueeze(0) < torch.tensor([len(s) for s in sentences]).unsqueeze(1)
        return (nll * valid).sum(dim=1)


def make_optimizer(model: nn.Module, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8)


def grad_step(model: nn.Module, optimizer: torch.optim.Optimizer, loss: torch.Tensor) -> None:
    """Backpropagate ``loss`` and take one Adam step; refuses non-finite gradients."""
    optimizer.zero_grad()
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            optimizer.zero_grad()
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    optimizer.step()


def save_checkpoint(path, model: ParserModel, words: Sequence[str], extra: Optional[dict] = None) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.cfg),
            "words": list(words),
            "state_dict": model.state_dict(),
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path) -> tuple[ParserModel, list[str], dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    model = ParserModel(len(blob["words"]), ModelConfig(**blob["config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob["words"], blob["extra"]
