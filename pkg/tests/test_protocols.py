from __future__ import annotations

import pytest

from dnm_ie import protocols as P
from dnm_ie.dataset import split
from dnm_ie.evaluation import ProtocolError
from dnm_ie.experiments import robustness_corpus, span_spec


@pytest.fixture(scope="module")
def setup(small_listings):
    return small_listings, split(small_listings, 0.75, 0)


def test_canonical_names():
    assert P.canonical("zero_shot") == "zero_shot_analog"
    assert P.canonical("fine_tune_analog") == "fine_tune_analog"
    with pytest.raises(ProtocolError):
        P.canonical("cross_validation")


def test_requested_types_follow_market_schema():
    assert "sku" in P.requested_types("palmetto")
    assert "sku" not in P.requested_types("cocorico")


def test_evaluation_pages(setup):
    corpus, man = setup
    pages, split_name, scope = P.evaluation_pages("in_domain", corpus, man)
    assert {p.page_id for p in pages} == set(man.test) and scope == "all_markets"
    pages, _, scope = P.evaluation_pages("zero_shot", corpus, man, "cocorico")
    assert scope == "cocorico" and {p.market_id for p in pages} == {"cocorico"}
    with pytest.raises(ProtocolError):
        P.evaluation_pages("zero_shot", corpus, man, "atlantis")
    with pytest.raises(ProtocolError):
        P.evaluation_pages("robustness", corpus, man)


def test_leakage_is_refused(setup):
    corpus, man = setup
    trained = P.TrainedModel("span", None, [man.test[0]], [], [])
    with pytest.raises(ProtocolError):
        P.check_leakage(trained, man.test)


def test_held_out_market_must_be_unseen(setup):
    corpus, man = setup
    pages, split_name, scope = P.evaluation_pages("zero_shot", corpus, man, "cocorico")
    trained = P.TrainedModel("span", None, [], ["cocorico"], [])
    with pytest.raises(ProtocolError):
        P.evaluate("zero_shot", trained, pages, split_name, scope, "m", predictions={})


def test_score_with_external_predictions(setup):
    corpus, man = setup
    pages, split_name, scope = P.evaluation_pages("in_domain", corpus, man)
    gold = {p.page_id: [(s.start, s.end, s.entity_type, 1.0) for s in p.spans] for p in pages}
    trained = P.TrainedModel("span", None, man.train, [], [])
    rep = P.evaluate("in_domain", trained, pages, split_name, scope, "oracle", predictions=gold)[0]
    assert rep.micro.f1 == 1.0


def test_robustness_reports_novel_scope(setup):
    corpus, man = setup
    rob = robustness_corpus(pages=3)
    trained = P.TrainedModel("span", None, [], sorted({x.market_id for x in corpus}), [])
    pages, split_name, scope = P.evaluation_pages("robustness", corpus, man, robustness_corpus=rob)
    reps = P.evaluate("robustness", trained, pages, split_name, scope, "m", predictions={})
    assert [r.scope for r in reps] == ["palmetto", "palmetto:novel_types"]
    assert set(reps[1].counts.per_type) == {"sku", "brand"}
    assert reps[1].micro.fn > 0


def test_fine_tune_continues_the_held_out_model(setup):
    corpus, man = setup
    spec = span_spec(steps=2)
    spec.span.eval_every = 1
    zs = P.run_protocol("zero_shot", spec, corpus, man, "cocorico")
    assert "cocorico" not in zs.trained.train_markets
    ft = P.run_protocol("fine_tune", spec, corpus, man, "cocorico", trained=zs.trained)
    assert ft.trained.model is zs.trained.model
    assert "cocorico" in ft.trained.train_markets
    assert not set(ft.trained.train_ids) & set(ft.eval_ids)


def test_seq_cannot_grow_new_heads(setup):
    corpus, man = setup
    base = P.TrainedModel("seq", None, [], [], ["vendor_name"])
    with pytest.raises(ProtocolError):
        P.train_model(P.ModelSpec("seq"), corpus[:2], base=base)


def test_model_spec_rejects_unknown_kind():
    with pytest.raises(ValueError):
        P.ModelSpec("crf")
