"""In-process HTTP market serving a generated corpus to the crawler."""
from __future__ import annotations

import html as html_lib
import logging
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

from .generator import OVERVIEW_PATH, GroundTruthListing, listing_path

log = logging.getLogger(__name__)


class MarketStartupError(RuntimeError):
    pass


def overview_html(paths: list[str], title: str = "market overview") -> str:
    """Seed page linking every product path, in the given order."""
    items = "".join(f'<div><a href="{html_lib.escape(p)}">listing {k}</a></div>\n'
                    for k, p in enumerate(paths))
    return (f"<html><body><div><span>{html_lib.escape(title)}</span></div>\n"
            f"{items}</body></html>\n")


def transient_failure(seed: int, path: str, attempt: int, rate: float) -> bool:
    """Whether request number ``attempt`` (0-based) for ``path`` gets a 503."""
    if rate <= 0:
        return False
    return random.Random(f"{seed}:{path}:{attempt}").random() < rate


class MockMarket:
    """Immutable path -> html map behind a threaded HTTP/1.1 server.

    Transient failures depend only on (seed, path, per-path attempt count),
    so the error sequence replays exactly however requests interleave.
    """

    def __init__(self, pages: dict[str, str], failure_rate: float = 0.0,
                 latency: tuple[float, float] = (0.0, 0.0), seed: int = 0):
        if not pages:
            raise ValueError("cannot serve an empty corpus")
        self.pages = dict(pages)
        self.pages.setdefault(OVERVIEW_PATH, overview_html(sorted(p for p in pages if p != OVERVIEW_PATH)))
        self.failure_rate = failure_rate
        self.latency = latency
        self.seed = seed
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()
        self._latency_rng = random.Random(f"{seed}:latency")
        self.request_log: list[tuple[str, int]] = []
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @classmethod
    def from_corpus(cls, corpus: list[GroundTruthListing], **kwargs) -> "MockMarket":
        if not corpus:
            raise ValueError("cannot serve an empty corpus")
        pages = {listing_path(p.market_id, p.page_id): p.html for p in corpus}
        pages[OVERVIEW_PATH] = overview_html([listing_path(p.market_id, p.page_id) for p in corpus])
        return cls(pages, **kwargs)

    # -- request handling

    def respond(self, path: str) -> tuple[int, str]:
        """Status and body for a GET of ``path`` (also usable without a socket)."""
        path = urlsplit(path).path or "/"
        with self._lock:
            attempt = self._attempts.get(path, 0)
            self._attempts[path] = attempt + 1
            lo, hi = self.latency
            wait = lo if hi <= lo else self._latency_rng.uniform(lo, hi)
        if wait > 0:
            time.sleep(wait)
        if path not in self.pages:
            status, body = 404, "<html><body>not found</body></html>"
        elif transient_failure(self.seed, path, attempt, self.failure_rate):
            status, body = 503, "<html><body>busy</body></html>"
        else:
            status, body = 200, self.pages[path]
        with self._lock:
            self.request_log.append((path, status))
        return status, body

    def _handler(self):
        market = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_GET(self):  # noqa: N802 (stdlib naming)
                status, body = market.respond(self.path)
                data = body.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, fmt, *args):
                log.debug("mock market: " + fmt, *args)

        return Handler

    # -- lifecycle

    def start(self, host: str = "127.0.0.1", port: int = 0) -> "MockMarket":
        try:
            self._server = ThreadingHTTPServer((host, port), self._handler())
        except OSError as exc:
            raise MarketStartupError(f"cannot bind {host}:{port}: {exc}") from exc
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, name="mock-market",
                                        daemon=True)
        self._thread.start()
        log.info("mock market on %s (%d pages)", self.base_url, len(self.pages))
        return self

    @property
    def base_url(self) -> str:
        if self._server is None:
            raise RuntimeError("market not started")
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def overview_url(self) -> str:
        return self.base_url + OVERVIEW_PATH

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._thread.join(timeout=5)
            self._server = None

    def __enter__(self) -> "MockMarket":
        return self if self._server is not None else self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(corpus: list[GroundTruthListing], host: str = "127.0.0.1", port: int = 0,
          **kwargs) -> MockMarket:
    """Start a market for ``corpus``; the caller owns ``stop()``."""
    return MockMarket.from_corpus(corpus, **kwargs).start(host, port)
