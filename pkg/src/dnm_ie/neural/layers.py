"""Parameterised building blocks shared by both NER models."""
from __future__ import annotations

import hashlib
import re

import numpy as np

from .autograd import Tensor, add, embedding_bag, lstm_layers, matmul, parameter, relu, take

PAD, UNK = "<pad>", "<unk>"


class Module:
    """Parameter container; ``parameters()`` walks attributes in definition order."""

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.parameters(f"{name}.{i}."))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) ^ set(state)
        if missing:
            raise KeyError(f"parameter mismatch: {sorted(missing)[:5]}")
        for k, p in params.items():
            if p.shape != state[k].shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data[...] = state[k]


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = np.sqrt(6.0 / (n_in + n_out))
        self.W = parameter(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.b = parameter(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.W), self.b)


class FeedForward(Module):
    """Two linear layers with a ReLU in between."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator):
        self.l1 = Linear(n_in, n_hidden, rng)
        self.l2 = Linear(n_hidden, n_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(relu(self.l1(x)))


class LSTMDirection(Module):
    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator, reverse: bool = False,
                 forget_bias: float = 1.0):
        s = 1.0 / np.sqrt(n_hidden)
        self.W = parameter(rng.uniform(-s, s, size=(n_in, 4 * n_hidden)))
        self.U = parameter(rng.uniform(-s, s, size=(n_hidden, 4 * n_hidden)))
        b = np.zeros(4 * n_hidden)
        b[n_hidden:2 * n_hidden] = forget_bias
        self.b = parameter(b)
        self.reverse = reverse

    def spec(self):
        return (self.W, self.U, self.b, self.reverse)


class BiLSTM(Module):
    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator, forget_bias: float = 1.0):
        self.fwd = LSTMDirection(n_in, n_hidden, rng, forget_bias=forget_bias)
        self.bwd = LSTMDirection(n_in, n_hidden, rng, reverse=True, forget_bias=forget_bias)
        self.n_hidden = n_hidden

    def __call__(self, x: Tensor, mask, resets=None) -> Tensor:
        """(B, T, I) -> (B, T, 2H); padded positions produce zeros.

        ``resets`` is an optional pair (forward, backward) of (B, T) arrays.
        """
        return lstm_layers(x, mask, [self.fwd.spec(), self.bwd.spec()], resets)


_SHAPE_SUBS = ((re.compile(r"[0-9]+"), "0"), (re.compile(r"[^\W\d_]+"), "a"))


def word_shape(token: str) -> str:
    for rx, rep in _SHAPE_SUBS:
        token = rx.sub(rep, token)
    return token


class HashEmbedding(Module):
    """Vocabulary rows plus hashed character n-gram buckets.

    Any string maps to a vector: known words add their own row, unknown ones
    the shared UNK row; both add the mean of their n-gram and word-shape
    buckets, which is what lets unseen numbers and names share structure.
    """

    def __init__(self, vocab: list[str], dim: int = 64, buckets: int = 4096,
                 ngrams=(1, 2, 3), hash_seed: int = 0, rng: np.random.Generator | None = None,
                 init_scale: float = 0.1):
        rng = rng if rng is not None else np.random.default_rng(hash_seed)
        words = [PAD, UNK] + [w for w in vocab if w not in (PAD, UNK)]
        self.index = {w: i for i, w in enumerate(words)}
        self.dim = dim
        self.n_buckets = buckets
        self.ngrams = tuple(ngrams)
        self.hash_seed = hash_seed
        table = rng.normal(0.0, init_scale, size=(len(words), dim))
        table[0] = 0.0
        self.table = parameter(table)
        self.ngram_table = parameter(rng.normal(0.0, init_scale, size=(buckets, dim)))
        self._feature_cache: dict[str, list[int]] = {}
        self._key = hash_seed.to_bytes(8, "little", signed=False)

    @property
    def vocab(self) -> list[str]:
        return list(self.index)

    def _bucket(self, feature: str) -> int:
        h = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=self._key)
        return int.from_bytes(h.digest(), "little") % self.n_buckets

    def features(self, token: str) -> list[int]:
        cached = self._feature_cache.get(token)
        if cached is None:
            marked = f"<{token}>"
            feats = [f"s:{word_shape(token)}"]
            for n in self.ngrams:
                src = token if n == 1 else marked
                feats.extend(f"{n}:{src[i:i + n]}" for i in range(len(src) - n + 1))
            cached = [self._bucket(f) for f in feats]
            self._feature_cache[token] = cached
        return cached

    def ids(self, tokens: list[str]) -> np.ndarray:
        unk = self.index[UNK]
        return np.array([self.index.get(t, unk) for t in tokens], dtype=np.intp)

    def __call__(self, tokens: list[str]) -> Tensor:
        """(len(tokens), dim) embeddings."""
        n = len(tokens)
        if n == 0:
            return Tensor(np.zeros((0, self.dim)))
        idx, seg, w = [], [], []
        for s, tok in enumerate(tokens):
            feats = self.features(tok)
            idx.extend(feats)
            seg.extend([s] * len(feats))
            w.extend([1.0 / len(feats)] * len(feats))
        rows = take(self.table, self.ids(tokens))
        return add(rows, embedding_bag(self.ngram_table, idx, seg, w, n))
