from __future__ import annotations

import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnm_ie.crawler import (
    CrawlConfig, CrawlError, CrawlState, DirectoryFetcher, HttpFetcher, PermanentFetchError,
    ProxyRotatingFetcher, TransientFetchError, canonicalize, crawl, harvest_links, market_of,
    page_id_of, should_enqueue, write_store,
)
from dnm_ie.market_sim.generator import listing_path, load_corpus
from dnm_ie.market_sim.service import MockMarket, overview_html

BASE = "http://market.local"


class FakeClock:
    """Virtual time: ``sleep`` advances it, each fetch costs ``cost`` seconds."""

    def __init__(self, cost: float = 0.0):
        self.now = 0.0
        self.cost = cost

    def __call__(self) -> float:
        return self.now

    def sleep(self, s: float) -> None:
        self.now += max(s, 0.0)


class CountingFetcher:
    def __init__(self, inner, clock: FakeClock | None = None):
        self.inner = inner
        self.clock = clock
        self.calls: Counter = Counter()

    def fetch(self, url, headers=None):
        self.calls[url] += 1
        if self.clock is not None:
            self.clock.now += self.clock.cost
        return self.inner.fetch(url, headers)


def site(n_pages: int = 30, fanout: int = 2) -> DirectoryFetcher:
    """Overview linking to every page; page i links to i+1 .. i+fanout."""
    paths = [f"/m/listing/p{i:03d}.html" for i in range(n_pages)]
    pages = {}
    for i, p in enumerate(paths):
        links = "".join(f'<a href="{paths[(i + k) % n_pages]}">x</a>' for k in range(1, fanout + 1))
        pages[p] = f"<html><body>page {i} {links}</body></html>"
    pages["/"] = overview_html(paths)
    return DirectoryFetcher(pages)


def config(**kw) -> CrawlConfig:
    base = dict(seed_url=BASE + "/", delay_min_ms=0, delay_max_ms=0)
    base.update(kw)
    return CrawlConfig(**base)


def test_static_site_converges():
    clock = FakeClock()
    fetcher = CountingFetcher(site(30), clock)
    store, report = crawl(fetcher, config(), clock=clock, sleep=clock.sleep)
    assert len(store) == 31
    assert report.stop_reason == "frontier_empty"
    assert report.new_pages_per_round == [31, 0, 0]
    assert set(fetcher.calls.values()) == {1}


@pytest.mark.parametrize("workers", [1, 4])
def test_each_url_stored_once(workers):
    fetcher = CountingFetcher(site(40, fanout=5))
    store, report = crawl(fetcher, config(workers=workers))
    assert len(store) == len(set(store)) == 41
    assert max(fetcher.calls.values()) == 1
    assert report.stats.deduped > 0


def test_link_limit():
    store, report = crawl(site(30), config(max_stored_links=5))
    assert report.stop_reason == "link_limit"
    assert report.link_limit_hit
    assert len(store) <= 5


def test_time_budget():
    clock = FakeClock(cost=0.1)
    store, report = crawl(CountingFetcher(site(100), clock), config(max_seconds=2.0),
                          clock=clock, sleep=clock.sleep)
    assert report.stop_reason == "time_budget"
    assert report.time_budget_exceeded
    assert 0 < len(store) < 101


class FailFirst:
    """Permanent failure on the first request for deep pages, success afterwards."""

    def __init__(self, inner, deep):
        self.inner = inner
        self.deep = set(deep)
        self.tried: set = set()

    def fetch(self, url, headers=None):
        if url in self.deep and url not in self.tried:
            self.tried.add(url)
            raise PermanentFetchError(url)
        return self.inner.fetch(url, headers)


def test_rounds_exhausted_when_last_round_still_finds_pages():
    deep = [BASE + "/m/listing/p005.html"]
    store, report = crawl(FailFirst(site(10), deep), config(rounds=2))
    assert report.stop_reason == "rounds_exhausted"
    assert report.new_pages_per_round == [10, 1]
    assert deep[0] in store


def test_failed_urls_are_retried_next_round_then_converge():
    deep = [BASE + "/m/listing/p005.html"]
    store, report = crawl(FailFirst(site(10), deep), config(rounds=3))
    assert report.stop_reason == "frontier_empty"
    assert report.new_pages_per_round == [10, 1, 0]


class Flaky:
    def __init__(self, inner, failures: int):
        self.inner = inner
        self.left: Counter = Counter()
        self.failures = failures

    def fetch(self, url, headers=None):
        if self.left[url] < self.failures:
            self.left[url] += 1
            raise TransientFetchError(url)
        return self.inner.fetch(url, headers)


def test_transient_errors_are_retried():
    store, report = crawl(Flaky(site(5), failures=2), config(max_retries=3))
    assert len(store) == 6
    assert report.stats.retries == 12
    assert report.stats.errors == 12


def test_exhausted_retries_count_as_failed():
    with pytest.raises(CrawlError) as exc:
        crawl(Flaky(site(5), failures=5), config(max_retries=1, rounds=1))
    assert exc.value.report.stop_reason == "seed_failed"


def test_politeness_spacing():
    clock = FakeClock()
    starts = []

    class Recorder:
        def fetch(self, url, headers=None):
            starts.append(clock())
            return site(10).fetch(url)

    crawl(Recorder(), config(delay_min_ms=100, delay_max_ms=200, rounds=1), clock=clock,
          sleep=clock.sleep)
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert all(0.1 - 1e-9 <= g <= 0.2 + 1e-9 for g in gaps)


def test_proxy_rotation_headers():
    seen = []

    class Spy:
        def fetch(self, url, headers=None):
            seen.append(headers["X-Proxy-Identity"])
            return site(4).fetch(url)

    proxy = ProxyRotatingFetcher(Spy(), ("a", "b"))
    crawl(proxy, config(rounds=1))
    assert seen[:4] == ["a", "b", "a", "b"]
    assert [ident for _, ident in proxy.assignments] == seen


def test_offsite_links_are_ignored():
    pages = {"/": '<a href="http://elsewhere.example/x.html">x</a><a href="mailto:a@b">m</a>'
                  '<a href="/m/listing/a.html#frag">a</a>',
             "/m/listing/a.html": "<p>leaf</p>"}
    store, _ = crawl(DirectoryFetcher(pages), config())
    assert sorted(store) == [BASE + "/", BASE + "/m/listing/a.html"]


def test_config_validation():
    for bad in (dict(max_stored_links=0), dict(rounds=0), dict(delay_min_ms=5, delay_max_ms=1),
                dict(workers=0)):
        with pytest.raises(ValueError):
            config(**bad).validate()


def test_harvest_links_resolves_and_survives_garbage():
    links = harvest_links('<a href="b.html">b</a><a href="/c">c</a><a>none</a><a href="', BASE + "/x/a.html")
    assert links[:2] == [BASE + "/x/b.html", BASE + "/c"]


@given(st.sampled_from(["http://A.B/x#f", "HTTP://a.b/x", "http://a.b/x"]))
def test_canonicalize_normalizes(url):
    assert canonicalize(url) == "http://a.b/x"


def test_canonicalize_keeps_query_and_defaults_path():
    assert canonicalize("http://a.b?q=1") == "http://a.b/?q=1"
    assert canonicalize("../y", "http://a.b/x/z") == "http://a.b/y"


def test_should_enqueue():
    st_ = CrawlState(seen={"u1"})
    assert not should_enqueue("u1", st_, config())
    assert should_enqueue("u2", st_, config())
    assert not should_enqueue("u2", st_, config(max_stored_links=1))


def test_url_helpers():
    assert market_of(BASE + "/") == "overview"
    assert market_of(BASE + listing_path("cocorico", "cocorico-00001")) == "cocorico"
    assert market_of(BASE + "/zzz/a.html") == "unknown"
    assert page_id_of(BASE + listing_path("cocorico", "cocorico-00001")) == "cocorico-00001"
    assert page_id_of(BASE + "/") == "overview"


def test_write_store_is_a_loadable_corpus(tmp_path, small_pages):
    fetcher = DirectoryFetcher({listing_path(p.market_id, p.page_id): p.html for p in small_pages})
    fetcher.pages["/"] = overview_html(sorted(fetcher.pages))
    store, report = crawl(fetcher, config())
    write_store(store, tmp_path, report)
    back = load_corpus(tmp_path)
    assert {p.page_id for p in back} == {p.page_id for p in small_pages} | {"overview"}
    assert json.loads((tmp_path / "crawl_report.json").read_text())["stop_reason"] == "frontier_empty"
    lines = (tmp_path / "manifest.jsonl").read_text().splitlines()
    assert lines == sorted(lines, key=lambda l: json.loads(l)["page_id"])


def test_http_crawl_with_failures(small_pages):
    with MockMarket.from_corpus(small_pages, failure_rate=0.2, seed=5) as market:
        store, report = crawl(HttpFetcher(timeout=5), CrawlConfig(
            seed_url=market.overview_url, delay_min_ms=0, delay_max_ms=1, workers=3, max_retries=6))
        ok = Counter(path for path, status in market.request_log if status == 200)
    assert len(store) == len(small_pages) + 1
    assert set(ok.values()) == {1}
    assert report.stop_reason == "frontier_empty"
