"""Bounded, deduplicating breadth-first crawler.

The crawl runs ``rounds`` passes.  The first pass starts at the seed page;
each later pass restarts from the seed with the seen-set retained: stored
pages are re-harvested from the store instead of being downloaded again, so
only urls never seen before (or urls whose fetch failed earlier) cost a
request.  On a static market every pass after the first fetches nothing.
"""
from __future__ import annotations

import json
import logging
import random
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import asdict, dataclass, field
from html.parser import HTMLParser
from itertools import cycle
from pathlib import Path
from typing import Callable, Protocol
from urllib.parse import urljoin, urlsplit, urlunsplit

from .market_sim.templates import TEMPLATES

log = logging.getLogger(__name__)

OVERVIEW_ID = "overview"


class TransientFetchError(Exception):
    pass


class PermanentFetchError(Exception):
    pass


class CrawlError(RuntimeError):
    def __init__(self, message: str, report: "CrawlReport"):
        super().__init__(message)
        self.report = report


@dataclass
class CrawlConfig:
    seed_url: str
    max_stored_links: int = 1_000_000
    max_seconds: float = 86_400
    rounds: int = 3
    delay_min_ms: float = 100.0
    delay_max_ms: float = 500.0
    max_retries: int = 3
    workers: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.max_stored_links < 1:
            raise ValueError("max_stored_links must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 <= self.delay_min_ms <= self.delay_max_ms:
            raise ValueError("need 0 <= delay_min_ms <= delay_max_ms")
        if self.max_retries < 0 or self.workers < 1:
            raise ValueError("max_retries >= 0 and workers >= 1 required")


@dataclass
class RawPage:
    url: str
    market_id: str
    html: str
    fetched_at: float
    round: int


@dataclass
class CrawlStats:
    fetched: int = 0
    deduped: int = 0
    errors: int = 0
    retries: int = 0
    failed: int = 0


@dataclass
class CrawlState:
    frontier: deque = field(default_factory=deque)
    seen: set = field(default_factory=set)
    stored: dict = field(default_factory=dict)
    started_at: float = 0.0
    stats: CrawlStats = field(default_factory=CrawlStats)


@dataclass
class CrawlReport:
    seed_url: str
    stop_reason: str = ""
    link_limit_hit: bool = False
    time_budget_exceeded: bool = False
    rounds_completed: int = 0
    new_pages_per_round: list = field(default_factory=list)
    stored: int = 0
    seen: int = 0
    stats: CrawlStats = field(default_factory=CrawlStats)
    duration_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- fetchers


class Fetcher(Protocol):
    def fetch(self, url: str, headers: dict | None = None) -> str:
        """Page html; raises TransientFetchError or PermanentFetchError."""


class HttpFetcher:
    """Plain urllib client: 5xx, 429 and network errors are transient, other 4xx permanent."""

    def __init__(self, timeout: float = 10.0):
        self.timeout = timeout

    def fetch(self, url: str, headers: dict | None = None) -> str:
        req = urllib.request.Request(url, headers=headers or {})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read().decode("utf-8", errors="replace")
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise TransientFetchError(f"{url}: HTTP {exc.code}") from None
            raise PermanentFetchError(f"{url}: HTTP {exc.code}") from None
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise TransientFetchError(f"{url}: {exc}") from None


class DirectoryFetcher:
    """Serves a path -> html map (e.g. a corpus directory) without sockets."""

    def __init__(self, pages: dict[str, str]):
        self.pages = pages

    @classmethod
    def from_corpus_dir(cls, corpus_dir) -> "DirectoryFetcher":
        from .market_sim.generator import OVERVIEW_PATH, listing_path, load_corpus
        from .market_sim.service import overview_html

        corpus = load_corpus(Path(corpus_dir))
        pages = {listing_path(p.market_id, p.page_id): p.html for p in corpus}
        pages[OVERVIEW_PATH] = overview_html([listing_path(p.market_id, p.page_id) for p in corpus])
        return cls(pages)

    def fetch(self, url: str, headers: dict | None = None) -> str:
        path = urlsplit(url).path or "/"
        if path not in self.pages:
            raise PermanentFetchError(f"{url}: not found")
        return self.pages[path]


class ProxyRotatingFetcher:
    """Decorator tagging each request with the next identity in a fixed rotation."""

    def __init__(self, inner: Fetcher, identities=("proxy-0", "proxy-1", "proxy-2")):
        self.inner = inner
        self._ids = cycle(identities)
        self._lock = threading.Lock()
        self.assignments: list[tuple[str, str]] = []

    def fetch(self, url: str, headers: dict | None = None) -> str:
        with self._lock:
            ident = next(self._ids)
            self.assignments.append((url, ident))
        return self.inner.fetch(url, {**(headers or {}), "X-Proxy-Identity": ident})


# ---------------------------------------------------------------- links


class _AnchorParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            for key, val in attrs:
                if key == "href" and val:
                    self.hrefs.append(val.strip())


def harvest_links(html: str, base_url: str) -> list[str]:
    """Anchor hrefs resolved against ``base_url``, in document order, duplicates kept."""
    parser = _AnchorParser()
    try:
        parser.feed(html)
        parser.close()
    except Exception:  # malformed markup: keep what was collected
        log.debug("link harvest stopped early on %s", base_url)
    return [urljoin(base_url, h) for h in parser.hrefs]


def canonicalize(url: str, base: str | None = None) -> str:
    """Resolve against ``base``, lowercase scheme/host, drop the fragment; keep the query."""
    if base is not None:
        url = urljoin(base, url)
    parts = urlsplit(url)
    return urlunsplit((parts.scheme.lower(), parts.netloc.lower(), parts.path or "/", parts.query, ""))


def should_enqueue(url: str, state: CrawlState, config: CrawlConfig) -> bool:
    return url not in state.seen and len(state.seen) < config.max_stored_links


def market_of(url: str) -> str:
    path = urlsplit(url).path
    if path in ("", "/"):
        return OVERVIEW_ID
    head = path.strip("/").split("/")[0]
    return head if head in TEMPLATES else "unknown"


def page_id_of(url: str) -> str:
    path = urlsplit(url).path.strip("/")
    if not path:
        return OVERVIEW_ID
    name = path.split("/")[-1]
    return name[:-5] if name.endswith(".html") else name.replace(".", "_")


# ---------------------------------------------------------------- crawl


class _Crawl:
    def __init__(self, fetcher: Fetcher, config: CrawlConfig, clock, sleep):
        self.fetcher = fetcher
        self.cfg = config
        self.clock = clock
        self.sleep = sleep
        self.state = CrawlState(started_at=clock())
        self.lock = threading.Lock()
        self.cond = threading.Condition(self.lock)
        self.delay_rng = random.Random(config.seed)
        self.next_slot = self.state.started_at
        self.in_flight = 0
        self.failed: set[str] = set()
        self.link_limit_hit = False
        self.timed_out = False
        self.round = 1
        self.visited: set[str] = set()
        self.seed = canonicalize(config.seed_url)
        self.host = urlsplit(self.seed).netloc

    # -- shared-state helpers (call with the lock held)

    def _offer(self, url: str) -> None:
        if urlsplit(url).scheme not in ("http", "https") or urlsplit(url).netloc != self.host:
            return
        st = self.state
        if url in self.visited:
            st.stats.deduped += 1
        elif url in st.seen:
            # known from an earlier round: walk stored pages again, skip failures
            # (those are re-queued once at the start of the round)
            if url in st.stored:
                self.visited.add(url)
                st.frontier.append(url)
            else:
                st.stats.deduped += 1
        elif should_enqueue(url, st, self.cfg):
            st.seen.add(url)
            self.visited.add(url)
            st.frontier.append(url)
        else:
            self.link_limit_hit = True

    def _expired(self) -> bool:
        return self.clock() - self.state.started_at >= self.cfg.max_seconds

    def _reserve_slot(self) -> float | None:
        """Global politeness: fetch starts are spaced by a fresh uniform delay.

        Returns the start time, or None when it would fall past the budget.
        """
        delay = self.delay_rng.uniform(self.cfg.delay_min_ms, self.cfg.delay_max_ms) / 1000.0
        start = max(self.clock(), self.next_slot)
        if start - self.state.started_at >= self.cfg.max_seconds:
            return None
        self.next_slot = start + delay
        return start

    # -- one url

    def _fetch_with_retries(self, url: str) -> str | None:
        for attempt in range(self.cfg.max_retries + 1):
            with self.lock:
                if self.timed_out or self._expired():
                    self.timed_out = True
                    return None
                start = self._reserve_slot()
                if start is None:
                    self.timed_out = True
                    return None
                if attempt:
                    self.state.stats.retries += 1
            wait = start - self.clock()
            if wait > 0:
                self.sleep(wait)
            try:
                html = self.fetcher.fetch(url)
            except TransientFetchError as exc:
                with self.lock:
                    self.state.stats.errors += 1
                log.debug("transient: %s", exc)
                continue
            except PermanentFetchError as exc:
                with self.lock:
                    self.state.stats.errors += 1
                log.debug("permanent: %s", exc)
                return None
            if not html:
                with self.lock:
                    self.state.stats.errors += 1
                return None
            return html
        return None

    def _process(self, url: str) -> None:
        with self.lock:
            page = self.state.stored.get(url)
        if page is not None:  # later round: re-harvest without downloading
            links = harvest_links(page.html, url)
        else:
            html = self._fetch_with_retries(url)
            with self.lock:
                if html is None:
                    if not self.timed_out:
                        self.failed.add(url)
                        self.state.stats.failed += 1
                    return
                self.failed.discard(url)
                self.state.stats.fetched += 1
                self.state.stored[url] = RawPage(url, market_of(url), html, self.clock(), self.round)
            links = harvest_links(html, url)
        with self.lock:
            for link in links:
                self._offer(canonicalize(link))

    # -- rounds

    def _worker(self) -> None:
        while True:
            with self.cond:
                while not self.state.frontier and self.in_flight and not self.timed_out:
                    self.cond.wait()
                if self.timed_out or not self.state.frontier:
                    self.cond.notify_all()
                    return
                url = self.state.frontier.popleft()
                self.in_flight += 1
            try:
                self._process(url)
            finally:
                with self.cond:
                    self.in_flight -= 1
                    self.cond.notify_all()

    def _run_round(self) -> None:
        if self.cfg.workers == 1:
            self._worker()
            return
        threads = [threading.Thread(target=self._worker, name=f"crawl-{k}")
                   for k in range(self.cfg.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    def run(self) -> tuple[dict[str, RawPage], CrawlReport]:
        st = self.state
        report = CrawlReport(seed_url=self.seed)
        st.seen.add(self.seed)
        for r in range(1, self.cfg.rounds + 1):
            self.round = r
            before = len(st.stored)
            # restart at the seed; urls that failed before get one more chance
            retry = sorted(self.failed - {self.seed})
            self.visited = {self.seed, *retry}
            st.frontier.append(self.seed)
            st.frontier.extend(retry)
            self._run_round()
            if r == 1 and self.seed not in st.stored and not self.timed_out:
                report.stop_reason = "seed_failed"
                self._finish(report)
                raise CrawlError(f"seed {self.seed} could not be fetched", report)
            report.new_pages_per_round.append(len(st.stored) - before)
            report.rounds_completed = r
            if self.timed_out:
                break
        if self.timed_out:
            report.stop_reason = "time_budget"
        elif self.link_limit_hit:
            report.stop_reason = "link_limit"
        elif report.new_pages_per_round[-1] > 0 or st.frontier:
            report.stop_reason = "rounds_exhausted"
        else:
            report.stop_reason = "frontier_empty"
        self._finish(report)
        return dict(st.stored), report

    def _finish(self, report: CrawlReport) -> None:
        st = self.state
        report.link_limit_hit = self.link_limit_hit
        report.time_budget_exceeded = self.timed_out
        report.stored = len(st.stored)
        report.seen = len(st.seen)
        report.stats = st.stats
        report.duration_s = round(self.clock() - st.started_at, 3)


def crawl(fetcher: Fetcher, config: CrawlConfig, clock: Callable[[], float] = time.monotonic,
          sleep: Callable[[float], None] = time.sleep) -> tuple[dict[str, RawPage], CrawlReport]:
    """Crawl from ``config.seed_url``; returns the page store keyed by url and a report.

    ``stop_reason`` is one of ``time_budget``, ``link_limit``,
    ``rounds_exhausted`` (the last round still found pages) or
    ``frontier_empty`` (the crawl converged: the last round found nothing).
    """
    config.validate()
    return _Crawl(fetcher, config, clock, sleep).run()


# ---------------------------------------------------------------- persistence


def write_store(store: dict[str, RawPage], out_dir, report: CrawlReport | None = None) -> None:
    """Persist pages in the corpus layout: pages/<id>.html plus manifest.jsonl (sorted by id)."""
    out = Path(out_dir)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    records = []
    for url, page in store.items():
        pid = page_id_of(url)
        tpl = TEMPLATES.get(page.market_id)
        records.append({"page_id": pid, "url": url, "market_id": page.market_id,
                        "language": tpl.language if tpl else "en"})
        (out / "pages" / f"{pid}.html").write_text(page.html, encoding="utf-8")
    records.sort(key=lambda r: r["page_id"])
    with open(out / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    if report is not None:
        (out / "crawl_report.json").write_text(report.to_json(), encoding="utf-8")
