"""Gradient-check cases shared by the unit tests and the acceptance run.

Each builder takes a numpy Generator and returns ``(name, fn, params)``
where ``fn`` recomputes a scalar from ``params``.
"""
from __future__ import annotations

import numpy as np

from dnm_ie import seq_ner, span_ner
from dnm_ie.dataset import AnnotatedListing, SpanNerExample, TokenSpan
from dnm_ie.neural import autograd as A
from dnm_ie.neural.gradcheck import grad_check

TOL = 1e-4


def _p(rng, *shape):
    return A.parameter(rng.normal(size=shape))


def _weights(rng, shape):
    # a random linear functional turns any output into a scalar with a generic gradient
    return A.Tensor(rng.normal(size=shape))


def _dot(out, w):
    return A.tsum(A.mul(out, w))


def _linear_case(name, op, *shapes, out_shape, positive=False):
    def build(rng):
        params = [_p(rng, *sh) for sh in shapes]
        w = _weights(rng, out_shape)
        return name, lambda: _dot(op(*params), w), params
    return build


def _relu(rng):
    x = A.parameter(rng.uniform(0.1, 1.0, 6) * rng.choice([-1, 1], 6))  # away from the kink
    w = _weights(rng, (6,))
    return "relu", lambda: _dot(A.relu(x), w), [x]


def _take(rng):
    x = _p(rng, 5, 3)
    idx = rng.integers(0, 5, size=(2, 4))
    w = _weights(rng, (2, 4, 3))
    return "take", lambda: _dot(A.take(x, idx), w), [x]


def _take_unique(rng):
    x = _p(rng, 5, 3)
    idx = rng.permutation(5)[:3]
    w = _weights(rng, (3, 3))
    return "take_unique", lambda: _dot(A.take(x, idx, unique=True), w), [x]


def _embedding_bag(rng):
    table = _p(rng, 6, 3)
    ids, segs = rng.integers(0, 6, 7), np.sort(rng.integers(0, 3, 7))
    wts = rng.uniform(0.2, 1.0, 7)
    w = _weights(rng, (3, 3))
    return "embedding_bag", lambda: _dot(A.embedding_bag(table, ids, segs, wts, 3), w), [table]


def _masked_mean(rng):
    x = _p(rng, 2, 4, 3)
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]])
    w = _weights(rng, (2, 3))
    return "masked_mean", lambda: _dot(A.masked_mean(x, mask), w), [x]


SOFT_MASK = np.array([[1, 1, 1, 1, 0], [1, 1, 1, 0, 0]], dtype=bool)


def _softmax(rng):
    x = _p(rng, 2, 5)
    w = _weights(rng, (2, 5))
    return "softmax", lambda: _dot(A.softmax(x, axis=-1, mask=SOFT_MASK), w), [x]


def _log_softmax(rng):
    x = _p(rng, 2, 5)
    w = rng.normal(size=(2, 5))

    def fn():
        # masked entries are -inf; select the valid ones before reducing
        out = A.log_softmax(x, axis=-1, mask=SOFT_MASK)
        valid = np.flatnonzero(SOFT_MASK)
        flat = A.take(A.reshape(out, (10,)), valid, unique=True)
        return _dot(flat, A.Tensor(w.reshape(-1)[valid]))
    return "log_softmax", fn, [x]


def _bce(rng):
    z = _p(rng, 4, 3)
    y = rng.integers(0, 2, (4, 3)).astype(float)
    bw = rng.uniform(0.5, 2.0, (4, 3))
    return "bce_loss", lambda: A.bce_loss(z, y, bw), [z]


def _ce(rng):
    z = _p(rng, 3, 5)
    t = np.array([0, 2, 1])
    mask = np.array([[1, 1, 1, 1, 0], [1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=bool)
    cw = rng.uniform(0.5, 2.0, 3)
    return "ce_loss", lambda: A.ce_loss(z, t, mask, cw), [z]


def _dropout(rng):
    x = _p(rng, 3, 4)
    seed = int(rng.integers(1 << 30))
    w = _weights(rng, (3, 4))
    return "dropout", lambda: _dot(A.dropout(x, 0.3, np.random.default_rng(seed), True), w), [x]


def _lstm_step(rng):
    x = _p(rng, 2, 3)
    W, U, b = _p(rng, 3, 8), _p(rng, 2, 8), _p(rng, 8)
    h0, c0 = A.Tensor(rng.normal(size=(2, 2))), A.Tensor(rng.normal(size=(2, 2)))
    w = _weights(rng, (2, 2))

    def fn():
        h, c = A.lstm_step(x, h0, c0, W, U, b)
        return A.add(_dot(h, w), A.tsum(c))
    return "lstm_step", fn, [x, W, U, b]


def _lstm_layers(rng):
    B, T, I, H = 2, 5, 3, 2
    x = _p(rng, B, T, I)
    dirs = [(_p(rng, I, 4 * H), _p(rng, H, 4 * H), _p(rng, 4 * H), r) for r in (False, True)]
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]])
    resets = [None, (rng.random((B, T)) < 0.3).astype(float)]
    w = _weights(rng, (B, T, 2 * H))
    params = [x] + [t for d in dirs for t in d[:3]]
    return "lstm_layers", lambda: _dot(A.lstm_layers(x, mask, dirs, resets), w), params


PRIMITIVES = [
    _linear_case("add", A.add, (3, 4), (4,), out_shape=(3, 4)),
    _linear_case("mul", A.mul, (3, 4), (3, 1), out_shape=(3, 4)),
    _linear_case("neg", A.neg, (5,), out_shape=(5,)),
    _linear_case("sigmoid", A.sigmoid, (5,), out_shape=(5,)),
    _linear_case("tanh", A.tanh, (5,), out_shape=(5,)),
    _relu,
    _linear_case("matmul", A.matmul, (2, 3, 4), (4, 5), out_shape=(2, 3, 5)),
    _linear_case("concat", lambda a, b: A.concat([a, b], axis=1), (2, 3), (2, 2), out_shape=(2, 5)),
    _linear_case("getitem", lambda x: A.getitem(x, (slice(1, 3), slice(0, 3))), (4, 5), out_shape=(2, 3)),
    _take, _take_unique,
    _linear_case("span_grid_sum", lambda s, e: A.span_grid_sum(s, e, 3), (4, 3), (4, 3), out_shape=(12, 3)),
    _linear_case("reshape", lambda x: A.reshape(x, (3, 4)), (2, 6), out_shape=(3, 4)),
    _linear_case("transpose", lambda x: A.transpose(x, (2, 0, 1)), (2, 3, 4), out_shape=(4, 2, 3)),
    _linear_case("sum", lambda x: A.tsum(x, axis=0), (3, 4), out_shape=(4,)),
    _embedding_bag, _masked_mean, _softmax, _log_softmax, _bce, _ce,
    _linear_case("conv1d", A.conv1d, (2, 5, 3), (3, 3, 4), (4,), out_shape=(2, 5, 4)),
    _dropout, _lstm_step, _lstm_layers,
]


def primitive_cases(rng: np.random.Generator):
    return [build(rng) for build in PRIMITIVES]


def span_model_case(rng: np.random.Generator):
    seed = int(rng.integers(1 << 30))
    words = ["alpha", "beta", "gamma", "12", "€", "delta"]
    tokens = [words[i] for i in rng.integers(0, len(words), 6)]
    model = span_ner.SpanNerModel(words + ["price", "name"], dim=4, max_width=3, buckets=8, seed=seed)
    ex = SpanNerExample("x", ["price", "name"], tokens, [(0, 1, 0), (3, 3, 1)])
    pairs = span_ner.build_pairs(ex, model.max_width)
    params = list(model.parameters().values())
    return "span_ner_loss", lambda: span_ner.loss(ex, model, pairs), params


def seq_model_case(rng: np.random.Generator):
    seed = int(rng.integers(1 << 30))
    words = ["alpha", "beta", "gamma", "12", "€", "delta"]

    def listing(n, pid):
        toks = [words[i] for i in rng.integers(0, len(words), n)]
        return AnnotatedListing(pid, "m", "en", " ".join(toks), toks,
                                [TokenSpan("price", 1, 2, ""), TokenSpan("name", 0, 0, "")])

    pages = [listing(6, "a"), listing(4, "b")]
    model = seq_ner.SeqNerModel(words, ["price", "name", "absent"], dim=4, hidden=3, channels=4,
                                buckets=8, seed=seed)
    params = list(model.parameters().values())
    return "seq_ner_loss", lambda: seq_ner.batch_loss(model, pages), params


MODEL_CASES = ("span_ner_loss", "seq_ner_loss")


def check_case(case, rng, sample: int | None = None) -> tuple[str, float]:
    """Worst relative error of one case.

    Full-model losses are O(10) while some of their gradient entries are
    O(1e-7), so a central difference carries ~1e-10 of absolute round-off
    there.  They use a denominator floor of 1e-5 (entries below it are
    effectively compared in absolute terms) and a random subset of entries
    per parameter.  Larger steps are not an option: they cross ReLU kinks.
    """
    name, fn, params = case
    if name in MODEL_CASES:
        return name, grad_check(fn, params, atol=1e-5, sample=sample or 8, rng=rng)
    return name, grad_check(fn, params, sample=sample, rng=rng)
