"""Span-matching NER: type prompts and text share one encoder; every span is
scored against every type with a dot product in a common latent space."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import ENT_TOKEN, MAX_LEN, MAX_TYPES, SEP_TOKEN, SpanNerExample
from .neural.autograd import (Tensor, _sigmoid, add, bce_loss, concat, dropout, matmul, relu, reshape,
                              span_grid_sum, take, transpose)
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.layers import BiLSTM, FeedForward, HashEmbedding, Linear, Module
from .neural.optim import Adam, clip_grad_norm

log = logging.getLogger(__name__)

DEFAULT_WIDTH = 12


class InputError(ValueError):
    pass


class TrainingDivergence(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass(frozen=True)
class SpanPrediction:
    start: int
    end: int  # inclusive
    type: int
    score: float


@dataclass
class PairSets:
    """Positive (span index, type) pairs and a mask of sampled negatives."""

    positives: np.ndarray  # (P, 2) int
    negatives: np.ndarray  # (S, M) bool
    ratio: float = 1.0

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        y = np.zeros(self.negatives.shape)
        if len(self.positives):
            y[self.positives[:, 0], self.positives[:, 1]] = 1.0
        return y, y + self.negatives


@dataclass
class SpanTrainConfig:
    num_steps: int = 500
    batch_size: int = 2
    warmup_ratio: float = 0.1
    lr_encoder: float = 1e-5
    lr_others: float = 5e-5
    max_types: int = MAX_TYPES
    max_neg_type_ratio: float = 1.0
    neg_sample_ratio: float = 1.0
    max_len: int = MAX_LEN
    eval_every: int = 10
    shuffle_types: bool = True
    random_drop: bool = True
    dropout: float = 0.1
    max_grad_norm: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.lr_encoder <= 0 or self.lr_others <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must be in [0, 1)")
        if self.num_steps < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("num_steps >= 0, batch_size >= 1, eval_every >= 1 required")


def enumerate_spans(n: int, k: int) -> list[tuple[int, int]]:
    """All (i, j) with i <= j < n and j - i < k, lexicographic."""
    return [(i, j) for i in range(n) for j in range(i, min(n, i + k))]


def span_count(n: int, k: int) -> int:
    return sum(max(0, n - w + 1) for w in range(1, k + 1))


def _span_arrays(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Start and end arrays in ``enumerate_spans`` order."""
    if n <= 0:
        return np.zeros(0, np.intp), np.zeros(0, np.intp)
    widths = np.minimum(k, n - np.arange(n))
    starts = np.repeat(np.arange(n, dtype=np.intp), widths)
    offsets = np.arange(len(starts)) - np.repeat(np.cumsum(widths) - widths, widths)
    return starts, starts + offsets.astype(np.intp)


def _layout(tokens: list[str]) -> tuple[list[int], int]:
    """Positions of [ENT] markers and of the single [SEP]."""
    seps = [i for i, t in enumerate(tokens) if t == SEP_TOKEN]
    if len(seps) != 1:
        raise InputError(f"expected exactly one {SEP_TOKEN}, found {len(seps)}")
    ents = [i for i, t in enumerate(tokens[:seps[0]]) if t == ENT_TOKEN]
    return ents, seps[0]


class SpanNerModel(Module):
    def __init__(self, vocab: list[str], dim: int = 64, max_width: int = DEFAULT_WIDTH,
                 hash_seed: int = 0, buckets: int = 4096, seed: int = 0,
                 diagnostic_identity: bool = False, prompt_reset: bool = True,
                 prior: float = 1e-3, embed_scale: float = 1.0):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.max_width = max_width
        self.embedding = HashEmbedding(vocab, dim, buckets=buckets, hash_seed=hash_seed, rng=rng,
                                       init_scale=embed_scale)
        self.special = Tensor(rng.normal(0.0, embed_scale, size=(2, dim)), requires_grad=True)
        self.encoder = BiLSTM(dim, dim, rng)
        self.proj = Linear(2 * dim, dim, rng)
        self.type_head = FeedForward(dim, dim, dim, rng)
        self.span_head = FeedForward(2 * dim, dim, dim, rng)
        if prior > 0:
            # Start every logit near log(prior / (1 - prior)): small output
            # weights plus head biases whose dot product equals that offset.
            # Without this the first updates are dominated by the flood of
            # negative pairs and collapse all type queries onto one direction.
            self.span_head.l2.W.data *= 0.1
            self.type_head.l2.W.data *= 0.1
            a = math.sqrt(-math.log(prior / (1.0 - prior)))
            self.span_head.l2.b.data[0] = a
            self.type_head.l2.b.data[0] = -a
        # identity-per-position encoder, used to test prompt handling in isolation
        self.diagnostic_identity = diagnostic_identity
        self.prompt_reset = prompt_reset
        self.config = {"dim": dim, "max_width": max_width, "hash_seed": hash_seed,
                       "buckets": buckets, "seed": seed, "prompt_reset": prompt_reset, "prior": prior,
                       "embed_scale": embed_scale}

    def groups(self) -> dict[str, str]:
        """Parameter name -> "encoder" or "others"."""
        enc = ("embedding.", "encoder.", "proj.")
        return {k: ("encoder" if k.startswith(enc) else "others") for k in self.parameters()}

    # -- encoding

    def encode_batch(self, token_lists: list[list[str]], training: bool = False,
                     rng: np.random.Generator | None = None, rate: float = 0.0):
        """Returns one ``(p, h)`` pair per sequence: p (M, D) and h (N, D)."""
        layouts = [_layout(toks) for toks in token_lists]
        B = len(token_lists)
        T = max(len(t) for t in token_lists)
        words: dict[str, int] = {}
        idx = np.zeros((B, T), dtype=np.intp)
        mask = np.zeros((B, T))
        for b, toks in enumerate(token_lists):
            for i, tok in enumerate(toks):
                if tok == ENT_TOKEN:
                    idx[b, i] = 1
                elif tok == SEP_TOKEN:
                    idx[b, i] = 2
                else:
                    idx[b, i] = 3 + words.setdefault(tok, len(words))
            mask[b, :len(toks)] = 1.0
        table = concat([Tensor(np.zeros((1, self.dim))), self.special,
                        self.embedding(list(words))], axis=0)
        x = take(table, idx)
        if self.diagnostic_identity:
            enc = x
        else:
            x = dropout(x, rate, rng, training)
            resets = None
            if self.prompt_reset:
                # the backward pass starts the prompt from a fresh state
                bwd = np.zeros((B, T))
                for b, (_, sep) in enumerate(layouts):
                    bwd[b, sep] = 1.0
                resets = (None, bwd)
            enc = self.proj(self.encoder(x, mask, resets))
        flat = reshape(enc, (B * T, self.dim))
        out = []
        for b, (ents, sep) in enumerate(layouts):
            n = len(token_lists[b]) - sep - 1
            p = take(flat, b * T + np.asarray(ents, dtype=np.intp))
            h = take(flat, b * T + sep + 1 + np.arange(n, dtype=np.intp))
            out.append((p, h))
        return out

    # -- scoring

    def span_reps(self, h: Tensor) -> Tensor:
        """S for every (start, width < K) cell: FFN([h_i; h_j]) with the first
        layer split per endpoint, laid out row-major as i * K + (j - i)."""
        W1 = self.span_head.l1.W
        hs = matmul(h, W1[:self.dim])
        he = matmul(h, W1[self.dim:])
        z = add(span_grid_sum(hs, he, self.max_width), self.span_head.l1.b)
        return self.span_head.l2(relu(z))

    def logits(self, p: Tensor, h: Tensor, starts, ends) -> Tensor:
        """(len(starts), M) logits of S_ij . q_t."""
        q = self.type_head(p)
        grid = matmul(self.span_reps(h), transpose(q))
        starts = np.asarray(starts, dtype=np.intp)
        rows = starts * self.max_width + np.asarray(ends, dtype=np.intp) - starts
        return take(grid, rows, unique=len(np.unique(rows)) == len(rows))


def encode(example, model: SpanNerModel):
    """(p, h) for a single example or raw token list."""
    tokens = example.tokens if isinstance(example, SpanNerExample) else list(example)
    return model.encode_batch([tokens])[0]


def score(i: int, j: int, t: int, p: Tensor, h: Tensor, model: SpanNerModel) -> float:
    n, m = h.shape[0], p.shape[0]
    if not (0 <= i <= j < n) or not (0 <= t < m):
        raise InputError(f"span ({i},{j}) / type {t} out of range for N={n}, M={m}")
    z = model.logits(p, h, np.array([i]), np.array([j])).data[0, t]
    return float(_sigmoid(np.float64(z)))


def span_index(starts, ends, n: int, k: int) -> np.ndarray:
    """Position of (start, end) in ``enumerate_spans(n, k)`` order."""
    offsets = np.concatenate([[0], np.cumsum(np.minimum(k, n - np.arange(n)))])
    return offsets[np.asarray(starts)] + np.asarray(ends) - np.asarray(starts)


def build_pairs(example: SpanNerExample, k: int, ratio: float = 1.0,
                rng: np.random.Generator | None = None) -> PairSets:
    """Gold (span, type) pairs are positive; all other pairs are negative candidates.

    Candidates that touch a gold span (the gold span under another type, or
    any span overlapping a gold span) are always kept; a ``ratio`` share of
    the remaining candidates is sampled uniformly.
    """
    n, m = example.N, example.M
    n_spans = span_count(n, k)
    gold = [(s, e, t) for s, e, t in example.gold if e - s < k and e < n]
    if gold:
        g = np.array(gold, dtype=np.intp)
        pos = np.stack([span_index(g[:, 0], g[:, 1], n, k), g[:, 2]], axis=1)
    else:
        pos = np.zeros((0, 2), dtype=np.intp)
    neg = np.ones((n_spans, m), dtype=bool)
    neg[pos[:, 0], pos[:, 1]] = False
    if ratio < 1.0:
        starts, ends = _span_arrays(n, k)
        hard = np.zeros(n_spans, dtype=bool)
        for s, e, _ in gold:
            hard |= (starts <= e) & (ends >= s)
        easy = neg & ~hard[:, None]
        flat = np.flatnonzero(easy)
        keep = int(math.floor(ratio * len(flat)))
        rng = rng or np.random.default_rng(0)
        chosen = rng.choice(flat, keep, replace=False) if keep else flat[:0]
        neg &= ~easy
        neg.flat[chosen] = True
    return PairSets(pos, neg, ratio)


def example_loss(model: SpanNerModel, example: SpanNerExample, p: Tensor, h: Tensor,
                 pairs: PairSets | None = None, ratio: float = 1.0, rng=None) -> Tensor:
    """Summed BCE over positive and negative (span, type) pairs."""
    starts, ends = _span_arrays(example.N, model.max_width)
    if len(starts) == 0 or example.M == 0:
        return Tensor(0.0)
    pairs = pairs or build_pairs(example, model.max_width, ratio, rng)
    z = model.logits(p, h, starts, ends)
    y, w = pairs.weights()
    return bce_loss(z, y, w)


def loss(example: SpanNerExample, model: SpanNerModel, pairs: PairSets | None = None) -> Tensor:
    p, h = encode(example, model)
    return example_loss(model, example, p, h, pairs)


# ---------------------------------------------------------------- training


def _prompt_types(example: SpanNerExample, all_types: list[str], cfg: SpanTrainConfig,
                  rng: np.random.Generator) -> SpanNerExample:
    """Re-draw the prompt: positive types, capped negatives, optional shuffle/drop."""
    pos = sorted({example.types[t] for _, _, t in example.gold}, key=all_types.index)
    absent = [t for t in all_types if t not in pos]
    cap = int(math.floor(cfg.max_neg_type_ratio * max(len(pos), 1)))
    if len(absent) > cap:
        absent = [absent[k] for k in sorted(rng.choice(len(absent), cap, replace=False))]
    if cfg.random_drop and absent and rng.random() < 0.5:
        n_keep = int(rng.integers(0, len(absent) + 1))
        absent = [absent[k] for k in sorted(rng.choice(len(absent), n_keep, replace=False))]
    types = (pos + absent)[:cfg.max_types]
    if cfg.shuffle_types:
        types = [types[k] for k in rng.permutation(len(types))]
    index = {t: k for k, t in enumerate(types)}
    gold = sorted((s, e, index[example.types[t]]) for s, e, t in example.gold
                  if example.types[t] in index)
    return SpanNerExample(example.id, types, example.text_tokens[:cfg.max_len], gold)


def _bucketed_batches(lengths: list[int], batch: int, rng: np.random.Generator, window: int = 64):
    """Shuffled batches of similar-length examples (less padding per step)."""
    order = list(rng.permutation(len(lengths)))
    batches = []
    for w in range(0, len(order), window):
        chunk = sorted(order[w:w + window], key=lambda k: (lengths[k], k))
        batches.extend(chunk[i:i + batch] for i in range(0, len(chunk), batch))
    return [batches[k] for k in rng.permutation(len(batches))]


@dataclass
class StepLog:
    step: int
    loss: float
    lr_scale: float


@dataclass
class TrainResult:
    log: list[StepLog] = field(default_factory=list)
    steps: int = 0

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.log], sort_keys=True)


def lr_scale(step: int, cfg: SpanTrainConfig) -> float:
    warm = int(round(cfg.warmup_ratio * cfg.num_steps))
    return 1.0 if warm == 0 or step > warm else step / warm


def train(examples: list[SpanNerExample], cfg: SpanTrainConfig, model: SpanNerModel,
          entity_types: list[str] | None = None) -> TrainResult:
    cfg.validate()
    if not examples:
        raise ValueError("empty training set")
    all_types = list(entity_types or [])
    for ex in examples:
        for t in ex.types:
            if t not in all_types:
                all_types.append(t)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    groups = model.groups()
    lrs = {k: (cfg.lr_encoder if groups[k] == "encoder" else cfg.lr_others) for k in params}
    opt = Adam(params, lrs)
    lengths = [ex.N for ex in examples]
    result = TrainResult()
    queue: list[list[int]] = []
    window: list[float] = []
    for step in range(1, cfg.num_steps + 1):
        if not queue:
            queue = _bucketed_batches(lengths, cfg.batch_size, rng)
        batch = [_prompt_types(examples[k], all_types, cfg, rng) for k in queue.pop()]
        opt.zero_grad()
        encoded = model.encode_batch([ex.tokens for ex in batch], training=True, rng=rng,
                                     rate=cfg.dropout)
        total = None
        for ex, (p, h) in zip(batch, encoded):
            part = example_loss(model, ex, p, h, ratio=cfg.neg_sample_ratio, rng=rng)
            total = part if total is None else add(total, part)
        value = float(total.data)
        if not math.isfinite(value):
            raise TrainingDivergence(step, value)
        if total.requires_grad:
            total.backward()
            clip_grad_norm(params.values(), cfg.max_grad_norm)
        scale = lr_scale(step, cfg)
        opt.step(scale)
        window.append(value / len(batch))
        if step % cfg.eval_every == 0:
            entry = StepLog(step, float(np.mean(window)), scale)
            result.log.append(entry)
            log.info("step %d loss %.4f", step, entry.loss)
            window = []
        result.steps = step
    return result


# ---------------------------------------------------------------- inference


def decode(scores: np.ndarray, starts, ends, threshold: float = 0.5) -> list[SpanPrediction]:
    """Greedy flat decoding: highest φ first, skipping spans that overlap a kept one."""
    cand = np.argwhere(scores >= threshold)
    order = sorted(cand.tolist(), key=lambda st: (-scores[st[0], st[1]], st[0], st[1]))
    taken = []
    out = []
    for s, t in order:
        i, j = int(starts[s]), int(ends[s])
        if any(i <= b and a <= j for a, b in taken):
            continue
        taken.append((i, j))
        out.append(SpanPrediction(i, j, int(t), float(scores[s, t])))
    return sorted(out, key=lambda p: (p.start, p.end, p.type))


def predict_batch(token_lists: list[list[str]], entity_types: list[str], model: SpanNerModel,
                  threshold: float = 0.5, batch_size: int = 8) -> list[list[SpanPrediction]]:
    if len(entity_types) > MAX_TYPES:
        raise InputError(f"at most {MAX_TYPES} entity types per prompt")
    prompt = []
    for t in entity_types:
        prompt.extend([ENT_TOKEN, t])
    prompt.append(SEP_TOKEN)
    results: list[list[SpanPrediction]] = [[] for _ in token_lists]
    order = sorted(range(len(token_lists)), key=lambda k: (len(token_lists[k]), k))
    for b in range(0, len(order), batch_size):
        ids = order[b:b + batch_size]
        encoded = model.encode_batch([prompt + list(token_lists[k]) for k in ids])
        for k, (p, h) in zip(ids, encoded):
            starts, ends = _span_arrays(h.shape[0], model.max_width)
            if len(starts) == 0 or not entity_types:
                continue
            z = model.logits(p, h, starts, ends).data
            results[k] = decode(_sigmoid(z), starts, ends, threshold)
    return results


def predict(tokens: list[str], entity_types: list[str], model: SpanNerModel,
            threshold: float = 0.5) -> list[SpanPrediction]:
    return predict_batch([tokens], entity_types, model, threshold)[0]


def prediction_record(page_id: str, preds: list[SpanPrediction], entity_types: list[str]) -> dict:
    return {"page_id": page_id,
            "spans": [{"start": p.start, "end": p.end, "type": entity_types[p.type],
                       "score": round(p.score, 6)} for p in preds]}


# ---------------------------------------------------------------- persistence


def save_model(model: SpanNerModel, path, extra: dict | None = None) -> None:
    meta = {"kind": "span", "config": model.config, "vocab": model.embedding.vocab[2:],
            "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8}}
    meta.update(extra or {})
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path) -> tuple[SpanNerModel, dict]:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "span":
        raise ValueError(f"{path}: not a span-ner checkpoint")
    cfg = meta["config"]
    model = SpanNerModel(meta["vocab"], cfg["dim"], cfg["max_width"], cfg["hash_seed"],
                         cfg["buckets"], cfg["seed"], prompt_reset=cfg["prompt_reset"], prior=cfg["prior"],
                         embed_scale=cfg["embed_scale"])
    model.load_state_dict(tensors)
    return model, meta
