"""BiLSTM-CNN baseline: one (start, end) pointer pair per entity type.

embedding -> dropout -> BiLSTM-1 -> BiLSTM-2 (+ BiLSTM-1 residual) -> dropout
-> Conv1D -> masked average pooling; each position's head input is the conv
feature concatenated with the pooled page vector.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import MAX_LEN, AnnotatedListing, pad_truncate
from .evaluation import MatchCounts, exact_match, prf
from .neural.autograd import (Tensor, add, ce_loss, concat, conv1d, dropout, masked_mean, matmul,
                              parameter, relu, reshape, softmax, take, transpose)
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.layers import BiLSTM, HashEmbedding, Linear, Module
from .neural.optim import Adam, clip_grad_norm

log = logging.getLogger(__name__)

K_SEQ = 12
HIDDEN = 100
CONV_CHANNELS = 64
KERNEL = 3
# dimensions of the contextual embedding this stands in for
REFERENCE_EMBEDDING_SHAPE = (34598, 1024)


class SeqInputError(ValueError):
    pass


class SeqTrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} in epoch {epoch}")
        self.epoch = epoch


@dataclass
class SeqTrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 2e-3
    dropout_embedding: float = 0.68
    dropout_lstm: float = 0.5
    pad_length: int = MAX_LEN
    max_grad_norm: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr > 0 required")


class SeqNerModel(Module):
    def __init__(self, vocab: list[str], entity_types: list[str], dim: int = 64, hidden: int = HIDDEN,
                 channels: int = CONV_CHANNELS, hash_seed: int = 0, buckets: int = 4096, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.entity_types = list(entity_types)
        self.dim = dim
        self.embedding = HashEmbedding(vocab, dim, buckets=buckets, hash_seed=hash_seed, rng=rng,
                                       init_scale=1.0)
        self.lstm1 = BiLSTM(dim, hidden, rng)
        self.lstm2 = BiLSTM(2 * hidden, hidden, rng)
        bound = math.sqrt(6.0 / (KERNEL * 2 * hidden + channels))
        self.conv_w = parameter(rng.uniform(-bound, bound, size=(KERNEL, 2 * hidden, channels)))
        self.conv_b = parameter(np.zeros(channels))
        # the head over [conv_i ; pooled] is stored as its two row blocks
        E = len(self.entity_types)
        self.head_local = Linear(channels, 2 * E, rng)
        bound = math.sqrt(6.0 / (channels + 2 * E))
        self.head_pooled = parameter(rng.uniform(-bound, bound, size=(channels, 2 * E)))
        self.config = {"dim": dim, "hidden": hidden, "channels": channels, "hash_seed": hash_seed,
                       "buckets": buckets, "seed": seed, "k_seq": K_SEQ}

    def forward(self, token_lists: list[list[str]], mask, training: bool = False,
                rng: np.random.Generator | None = None, cfg: SeqTrainConfig | None = None) -> Tensor:
        """Logits (B, 2E, T): rows 2e and 2e+1 are the start and end heads of type e.

        ``mask`` (B, T) marks real positions; padded columns may be present.
        """
        mask = np.asarray(mask, dtype=float)
        B, T = mask.shape
        if not mask.any(axis=1).all():
            raise SeqInputError("sequence with no unpadded position")
        words: dict[str, int] = {}
        idx = np.zeros((B, T), dtype=np.intp)
        for b, toks in enumerate(token_lists):
            for i, tok in enumerate(toks[:T]):
                if mask[b, i]:
                    idx[b, i] = 1 + words.setdefault(tok, len(words))
        table = concat([Tensor(np.zeros((1, self.dim))), self.embedding(list(words))], axis=0)
        x = take(table, idx)
        rate_e = cfg.dropout_embedding if cfg else 0.0
        rate_l = cfg.dropout_lstm if cfg else 0.0
        x = dropout(x, rate_e, rng, training)
        h1 = self.lstm1(x, mask)
        h2 = add(self.lstm2(h1, mask), h1)
        h2 = dropout(h2, rate_l, rng, training)
        c = relu(conv1d(h2, self.conv_w, self.conv_b))
        pooled = masked_mean(c, mask)
        E2 = 2 * len(self.entity_types)
        local = self.head_local(c)  # (B, T, 2E)
        glob = reshape(matmul(pooled, self.head_pooled), (B, 1, E2))
        return transpose(add(local, glob), (0, 2, 1))

    def distributions(self, token_lists, mask) -> np.ndarray:
        """(B, 2E, T) probabilities, zero on padded positions."""
        logits = self.forward(token_lists, mask)
        m = np.repeat(np.asarray(mask, bool)[:, None, :], logits.shape[1], axis=1)
        return softmax(logits, axis=-1, mask=m).data


def _gold_positions(listing: AnnotatedListing, entity_types: list[str], limit: int):
    """(E, 2) start/end targets and an (E,) presence weight."""
    tgt = np.zeros((len(entity_types), 2), dtype=np.intp)
    w = np.zeros(len(entity_types))
    first = {}
    for s in listing.spans:
        first.setdefault(s.entity_type, s)
    for e, t in enumerate(entity_types):
        s = first.get(t)
        if s is not None and s.end < limit:
            tgt[e] = (s.start, s.end)
            w[e] = 1.0
    return tgt, w


def _batch_arrays(listings, pad_length: int):
    """Masks padded to ``pad_length`` then trimmed to the longest real row.

    The trimmed columns are all padding, and every layer masks padding, so
    outputs on real positions are identical to the fully padded computation.
    """
    masks, truncated = [], False
    for lst in listings:
        _, m, tr = pad_truncate(range(len(lst.tokens)), pad_length)
        masks.append(m)
        truncated |= tr
    mask = np.stack(masks)
    width = max(1, int(mask.sum(axis=1).max()))
    return mask[:, :width], truncated


def batch_loss(model: SeqNerModel, listings, cfg: SeqTrainConfig | None = None, training=False,
               rng=None) -> Tensor:
    """Summed start/end cross-entropy over present entity types, averaged over pages."""
    pad = cfg.pad_length if cfg else MAX_LEN
    mask, _ = _batch_arrays(listings, pad)
    B, T = mask.shape
    E = len(model.entity_types)
    logits = model.forward([lst.tokens for lst in listings], mask, training, rng, cfg)
    targets, weights = [], []
    for lst in listings:
        tgt, w = _gold_positions(lst, model.entity_types, T)
        targets.append(tgt.reshape(-1))
        weights.append(np.repeat(w, 2))
    rows_mask = np.repeat(mask.astype(bool), 2 * E, axis=0)
    flat = reshape(logits, (B * 2 * E, T))
    total = ce_loss(flat, np.concatenate(targets), rows_mask, np.concatenate(weights) / B)
    return total


def decode_pointers(probs: np.ndarray, n: int, k: int = K_SEQ) -> tuple[int, int]:
    """(start, end) from one type's start/end distributions over ``n`` real positions."""
    s = int(np.argmax(probs[0, :n]))
    e = int(np.argmax(probs[1, :n]))
    e = min(max(e, s), s + k - 1, n - 1)
    return s, e


def predict_batch(listings_or_tokens, model: SeqNerModel, entity_types=None, batch_size: int = 8,
                  pad_length: int = MAX_LEN) -> list[list[tuple[int, int, str, float]]]:
    """One (start, end, type, score) per requested type the model has a head for."""
    token_lists = [getattr(x, "tokens", x) for x in listings_or_tokens]
    wanted = [t for t in (entity_types or model.entity_types) if t in model.entity_types]
    out: list[list] = [[] for _ in token_lists]
    order = sorted(range(len(token_lists)), key=lambda i: (len(token_lists[i]), i))
    for b0 in range(0, len(order), batch_size):
        ids = order[b0:b0 + batch_size]
        toks = [token_lists[i][:pad_length] for i in ids]
        if any(len(t) == 0 for t in toks):
            raise SeqInputError("empty document")
        width = max(len(t) for t in toks)
        mask = np.zeros((len(ids), width))
        for r, t in enumerate(toks):
            mask[r, :len(t)] = 1.0
        probs = model.distributions(toks, mask)
        for r, i in enumerate(ids):
            n = len(toks[r])
            for t in wanted:
                e = model.entity_types.index(t)
                pair = probs[r, 2 * e:2 * e + 2]
                s, en = decode_pointers(pair, n)
                out[i].append((s, en, t, float(pair[0, s] * pair[1, en])))
    return out


# ---------------------------------------------------------------- training


@dataclass
class EpochLog:
    epoch: int
    loss: float
    per_type: dict[str, dict] = field(default_factory=dict)


@dataclass
class SeqTrainResult:
    epochs: list[EpochLog] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps([asdict(e) for e in self.epochs], sort_keys=True)


def epoch_metrics(model: SeqNerModel, listings) -> dict[str, dict]:
    """Per-type accuracy (exact span on pages with gold) and P/R/F1."""
    preds = predict_batch(listings, model)
    pred_map = {lst.page_id: [(s, e, t) for s, e, t, _ in p] for lst, p in zip(listings, preds)}
    gold_map = {lst.page_id: [(s.start, s.end, s.entity_type) for s in lst.spans
                              if s.entity_type in model.entity_types] for lst in listings}
    counts: MatchCounts = exact_match(pred_map, gold_map, model.entity_types)
    out = {}
    for t in model.entity_types:
        m = prf(counts.cell(t))
        attempted = sum(1 for g in gold_map.values() if any(x[2] == t for x in g))
        acc = m.tp / attempted if attempted else 0.0
        out[t] = {"accuracy": round(acc, 6), "precision": round(m.precision, 6),
                  "recall": round(m.recall, 6), "f1": round(m.f1, 6)}
    return out


def train(listings: list[AnnotatedListing], cfg: SeqTrainConfig, model: SeqNerModel,
          eval_listings: list[AnnotatedListing] | None = None) -> SeqTrainResult:
    """Adam on page-averaged loss; metrics per epoch on ``eval_listings`` (or the train set)."""
    cfg.validate()
    if not listings:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.lr)
    result = SeqTrainResult()
    monitor = eval_listings if eval_listings is not None else listings
    lengths = [len(lst.tokens) for lst in listings]
    for epoch in range(1, cfg.epochs + 1):
        order = list(rng.permutation(len(listings)))
        chunks = []
        for w in range(0, len(order), 64):
            part = sorted(order[w:w + 64], key=lambda k: (lengths[k], k))
            chunks.extend(part[i:i + cfg.batch_size] for i in range(0, len(part), cfg.batch_size))
        total, pages = 0.0, 0
        for k in rng.permutation(len(chunks)):
            batch = [listings[i] for i in chunks[k]]
            opt.zero_grad()
            loss = batch_loss(model, batch, cfg, training=True, rng=rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise SeqTrainingDivergence(epoch, value)
            loss.backward()
            clip_grad_norm(params.values(), cfg.max_grad_norm)
            opt.step()
            total += value * len(batch)
            pages += len(batch)
        entry = EpochLog(epoch, total / pages, epoch_metrics(model, monitor))
        log.info("epoch %d loss %.4f", epoch, entry.loss)
        result.epochs.append(entry)
    return result


# ---------------------------------------------------------------- persistence


def save_model(model: SeqNerModel, path, extra: dict | None = None) -> None:
    meta = {"kind": "seq", "config": model.config, "entity_types": model.entity_types,
            "vocab": model.embedding.vocab[2:], "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8}}
    meta.update(extra or {})
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path) -> tuple[SeqNerModel, dict]:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "seq":
        raise ValueError(f"{path}: not a seq-ner checkpoint")
    c = meta["config"]
    model = SeqNerModel(meta["vocab"], meta["entity_types"], c["dim"], c["hidden"], c["channels"],
                        c["hash_seed"], c["buckets"], c["seed"])
    model.load_state_dict(tensors)
    return model, meta
