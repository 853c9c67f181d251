from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnm_ie import span_ner as sn
from dnm_ie.dataset import SpanNerExample, build_vocab, entity_types_of, to_span_input


@given(st.integers(0, 50), st.integers(1, 12))
def test_span_enumeration_agrees(n, k):
    spans = sn.enumerate_spans(n, k)
    starts, ends = sn._span_arrays(n, k)
    assert list(zip(starts.tolist(), ends.tolist())) == spans
    assert len(spans) == sn.span_count(n, k)
    if spans:
        s, e = np.array(spans).T
        assert list(sn.span_index(s, e, n, k)) == list(range(len(spans)))


def test_decode_is_greedy_and_flat():
    starts, ends = np.array([0, 0, 1, 2]), np.array([0, 1, 1, 2])
    scores = np.array([[0.6], [0.9], [0.7], [0.4]])
    preds = sn.decode(scores, starts, ends, threshold=0.5)
    assert [(p.start, p.end) for p in preds] == [(0, 1)]
    assert sn.decode(scores, starts, ends, threshold=0.95) == []


def test_build_pairs_counts():
    ex = SpanNerExample("x", ["a", "b"], list("uvwxyz"), [(0, 1, 0), (3, 3, 1)])
    full = sn.build_pairs(ex, 3)
    n_spans = sn.span_count(6, 3)
    assert len(full.positives) == 2
    assert full.negatives.sum() == n_spans * 2 - 2
    sampled = sn.build_pairs(ex, 3, ratio=0.0)
    starts, ends = sn._span_arrays(6, 3)
    # only negatives overlapping a gold span survive a zero sampling ratio
    hard = ((starts <= 1) & (ends >= 0)) | ((starts <= 3) & (ends >= 3))
    assert sampled.negatives.sum() == hard.sum() * 2 - 2


def test_lr_schedule():
    cfg = sn.SpanTrainConfig(num_steps=100, warmup_ratio=0.1)
    assert sn.lr_scale(5, cfg) == 0.5 and sn.lr_scale(10, cfg) == 1.0 and sn.lr_scale(80, cfg) == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        sn.SpanTrainConfig(lr_encoder=0).validate()
    with pytest.raises(ValueError):
        sn.SpanTrainConfig(warmup_ratio=1.0).validate()


@pytest.fixture(scope="module")
def tiny(small_listings):
    train = small_listings[:12]
    types = entity_types_of(train)
    model = sn.SpanNerModel(build_vocab(train, extra=types), dim=16, seed=0)
    return train, types, model


def test_too_many_types(tiny):
    train, _, model = tiny
    with pytest.raises(sn.InputError):
        sn.predict_batch([train[0].tokens], [f"t{i}" for i in range(26)], model)


def test_predictions_do_not_depend_on_batching(tiny):
    train, types, model = tiny
    toks = [x.tokens for x in train[:5]]
    a = sn.predict_batch(toks, types, model, threshold=0.0, batch_size=1)
    b = sn.predict_batch(toks, types, model, threshold=0.0, batch_size=5)
    assert [[(p.start, p.end, p.type) for p in x] for x in a] == [[(p.start, p.end, p.type) for p in x] for x in b]
    for x, y in zip(a, b):
        np.testing.assert_allclose([p.score for p in x], [p.score for p in y], atol=1e-10)


def test_predictions_are_non_overlapping(tiny):
    train, types, model = tiny
    for preds in sn.predict_batch([x.tokens for x in train[:3]], types, model, threshold=0.0):
        spans = sorted((p.start, p.end) for p in preds)
        assert all(b[0] > a[1] for a, b in zip(spans, spans[1:]))
        assert all(p.end - p.start < model.max_width for p in preds)


def test_prompt_reset_isolates_text_from_type_order(tiny):
    train, types, model = tiny
    a = sn.encode(to_span_input(train[0], types), model)[1].data
    b = sn.encode(to_span_input(train[0], types[::-1]), model)[1].data
    # the backward pass restarts at [SEP]; the forward pass still reads the prompt
    assert a.shape == b.shape and not np.allclose(a, b)
    plain = sn.SpanNerModel(model.embedding.vocab[2:], dim=16, seed=0, diagnostic_identity=True)
    a = sn.encode(to_span_input(train[0], types), plain)[1].data
    b = sn.encode(to_span_input(train[0], types[::-1]), plain)[1].data
    np.testing.assert_allclose(a, b)


def test_short_training_reduces_loss(small_listings):
    train = small_listings[:12]
    types = entity_types_of(train)
    model = sn.SpanNerModel(build_vocab(train, extra=types), dim=16, seed=0)
    cfg = sn.SpanTrainConfig(num_steps=40, lr_encoder=5e-3, lr_others=5e-3, eval_every=5, seed=0)
    res = sn.train([to_span_input(x, types) for x in train], cfg, model, types)
    assert res.steps == 40 and len(res.log) == 8
    assert res.log[-1].loss < res.log[0].loss


def test_save_load_round_trip(tmp_path, tiny):
    train, types, model = tiny
    ex = to_span_input(train[0], types)
    sn.save_model(model, tmp_path / "s.ckpt", {"note": 1})
    back, meta = sn.load_model(tmp_path / "s.ckpt")
    assert meta["note"] == 1 and meta["kind"] == "span"
    assert float(sn.loss(ex, back).data) == float(sn.loss(ex, model).data)


def test_training_is_reproducible(small_listings):
    train = small_listings[:6]
    types = entity_types_of(train)
    examples = [to_span_input(x, types) for x in train]

    def run():
        model = sn.SpanNerModel(build_vocab(train, extra=types), dim=8, seed=1)
        cfg = sn.SpanTrainConfig(num_steps=6, lr_encoder=5e-3, lr_others=5e-3, eval_every=2, seed=2)
        return sn.train(examples, cfg, model, types).to_json(), model.state_dict()

    (log_a, sa), (log_b, sb) = run(), run()
    assert log_a == log_b
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
