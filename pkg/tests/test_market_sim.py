from __future__ import annotations

import urllib.error
import urllib.request

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnm_ie.extract.text import extract_text, normalize
from dnm_ie.market_sim.generator import (
    CorpusConfig, CorpusConfigError, entity_inventory, generate_corpus, generate_page, listing_path,
    load_corpus, write_corpus,
)
from dnm_ie.market_sim.service import MockMarket, overview_html, transient_failure
from dnm_ie.market_sim.templates import DEFAULT_MARKETS, MARKET_IDS, TEMPLATES


def test_generation_is_deterministic():
    cfg = CorpusConfig({"cocorico": 3, "silkroad": 2}, seed=11)
    a, _ = generate_corpus(cfg)
    b, _ = generate_corpus(cfg)
    assert [p.html for p in a] == [p.html for p in b]
    assert [p.entities for p in a] == [p.entities for p in b]


def test_seed_changes_pages():
    a, _ = generate_corpus(CorpusConfig({"berlusconi": 2}, seed=1))
    b, _ = generate_corpus(CorpusConfig({"berlusconi": 2}, seed=2))
    assert [p.html for p in a] != [p.html for p in b]


def test_page_ids_and_urls(small_pages):
    ids = [p.page_id for p in small_pages]
    assert len(ids) == len(set(ids))
    for p in small_pages:
        assert p.url.endswith(listing_path(p.market_id, p.page_id))


@given(st.sampled_from(MARKET_IDS), st.integers(0, 30), st.integers(0, 2**32), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_entity_offsets_point_at_surfaces(market, index, seed, noise):
    page = generate_page(market, index, 31, seed, noise)
    text = extract_text(page.html)[0]
    for e in page.entities:
        assert page.html[e.char_start:e.char_end] == e.surface
        assert normalize(e.surface) in normalize(text)


def test_every_template_slot_is_filled(small_pages):
    for p in small_pages:
        types = {e.entity_type for e in p.entities}
        assert types == set(TEMPLATES[p.market_id].entity_slots)


def test_inventory_counts(small_pages):
    inv = entity_inventory(small_pages)
    assert sum(inv.values()) == sum(len(p.entities) for p in small_pages)
    assert list(inv) == sorted(inv)


@pytest.mark.parametrize("cfg", [
    CorpusConfig({"nowhere": 1}),
    CorpusConfig({"cocorico": -1}),
    CorpusConfig({"cocorico": 1}, noise_rate=1.5),
    CorpusConfig({"cocorico": 1}, seed=-3),
])
def test_config_validation(cfg):
    with pytest.raises(CorpusConfigError):
        generate_corpus(cfg)


def test_corpus_round_trip(tmp_path, small_pages):
    write_corpus(small_pages, tmp_path, CorpusConfig({m: 4 for m in DEFAULT_MARKETS}, seed=7))
    back = load_corpus(tmp_path)
    assert [(p.page_id, p.html, p.entities, p.language) for p in back] == \
        [(p.page_id, p.html, p.entities, p.language) for p in small_pages]


@given(st.integers(0, 1000), st.text(min_size=1, max_size=20), st.integers(0, 5),
       st.floats(0.0, 1.0))
def test_transient_failure_is_a_pure_function(seed, path, attempt, rate):
    assert transient_failure(seed, path, attempt, rate) == transient_failure(seed, path, attempt, rate)


def test_failure_rate_extremes():
    assert not any(transient_failure(0, f"/p{i}", 0, 0.0) for i in range(100))
    assert all(transient_failure(0, f"/p{i}", 0, 1.0) for i in range(100))


def test_respond_without_socket(small_pages):
    market = MockMarket.from_corpus(small_pages)
    path = listing_path(small_pages[0].market_id, small_pages[0].page_id)
    assert market.respond(path) == (200, small_pages[0].html)
    assert market.respond("/missing.html")[0] == 404
    status, body = market.respond("/")
    assert status == 200 and path in body
    assert market.request_log[-1] == ("/", 200)


def test_failures_replay_identically(small_pages):
    def statuses():
        m = MockMarket.from_corpus(small_pages, failure_rate=0.5, seed=3)
        paths = sorted(m.pages)
        return [m.respond(p)[0] for p in paths for _ in range(3)]

    first = statuses()
    assert first == statuses()
    assert 503 in first and 200 in first


def test_overview_links_every_path():
    html = overview_html(["/a/listing/x.html", "/b/listing/y.html"])
    assert 'href="/a/listing/x.html"' in html and 'href="/b/listing/y.html"' in html


def test_http_server(small_pages):
    with MockMarket.from_corpus(small_pages[:3]) as market:
        path = listing_path(small_pages[0].market_id, small_pages[0].page_id)
        with urllib.request.urlopen(market.base_url + path, timeout=5) as resp:
            assert resp.status == 200
            assert resp.read().decode("utf-8") == small_pages[0].html
        with pytest.raises(urllib.error.HTTPError) as exc:
            urllib.request.urlopen(market.base_url + "/nope", timeout=5)
        assert exc.value.code == 404


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        MockMarket({})
