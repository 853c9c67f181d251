"""Deterministic generator of listing pages with ground-truth entity spans."""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..extract.patterns import (
    BRAND, DESCRIPTION, MARKET_NAME, MODEL, PRICE, PRODUCT, SKU, STOCK, VENDOR, VIEWS,
)
from ..extract.text import extract_text, normalize
from . import vocab
from .templates import EURO, MARKET_IDS, TEMPLATES, MarketTemplate, Slot

BASE_URL = "http://market.local"
OVERVIEW_PATH = "/"


class CorpusConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EntitySpan:
    entity_type: str
    char_start: int
    char_end: int
    surface: str


@dataclass
class GroundTruthListing:
    page_id: str
    url: str
    market_id: str
    html: str
    entities: list[EntitySpan]
    language: str

    def manifest_record(self) -> dict:
        return {"page_id": self.page_id, "url": self.url,
                "market_id": self.market_id, "language": self.language}


@dataclass
class CorpusConfig:
    counts: dict[str, int] = field(default_factory=dict)
    seed: int = 42
    noise_rate: float = 0.2

    def validate(self) -> None:
        for market, n in self.counts.items():
            if market not in TEMPLATES:
                raise CorpusConfigError(f"unknown market_id {market!r}")
            if n < 0:
                raise CorpusConfigError(f"negative page count for {market}")
        if not 0 <= self.seed < 2**64:
            raise CorpusConfigError("seed must be a 64-bit unsigned integer")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise CorpusConfigError("noise_rate must lie in [0, 1]")


def listing_path(market_id: str, page_id: str) -> str:
    return f"/{market_id}/listing/{page_id}.html"


# ---------------------------------------------------------------- values


def _vendor_pool(market_id: str) -> list[str]:
    pool = list(vocab.VENDORS)
    random.Random(f"vendors:{market_id}").shuffle(pool)
    return pool[:25] if market_id != "palmetto" else pool


def _zipf_choice(rng: random.Random, pool: list[str]) -> str:
    weights = [1.0 / (rank + 1) for rank in range(len(pool))]
    return rng.choices(pool, weights=weights)[0]


def _drug_product(rng: random.Random) -> str:
    qty = rng.choice(["1", "2", "3.5", "5", "7", "10", "14", "28", "50", "100", "250", "500"])
    words = [qty + rng.choice(vocab.UNITS)]
    if rng.random() < 0.6:
        words.append(rng.choice(vocab.PRODUCT_ADJECTIVES))
    words.append(rng.choice(vocab.DRUGS))
    if rng.random() < 0.3:
        words.append(rng.choice(vocab.DRUGS))
    return " ".join(words)


def _firearm_product(rng: random.Random) -> str:
    words = [rng.choice(vocab.FIREARM_ADJECTIVES), rng.choice(vocab.FIREARM_CALIBERS),
             rng.choice(vocab.FIREARM_PRODUCTS)]
    if rng.random() < 0.4:
        words.append(rng.choice(vocab.FIREARM_PRODUCTS))
    return " ".join(words)


def _maybe_title(rng: random.Random, text: str) -> str:
    return text.title() if rng.random() < 0.4 else text


def _sample_values(template: MarketTemplate, rng: random.Random) -> dict[str, str]:
    m = template.market_id
    fr = template.language == "fr"
    amount = rng.uniform(5, 900) if m != "palmetto" else rng.uniform(40, 2500)
    if m == "silkroad":
        price = str(int(amount))
    elif fr:
        price = f"{amount:.2f}".replace(".", ",")
    else:
        price = f"{amount:.2f}"
    if m == "palmetto":
        product = _firearm_product(rng)
        model = rng.choice(vocab.FIREARM_CATEGORIES)
    else:
        product = _drug_product(rng)
        model = rng.choice(vocab.CATEGORIES_FR if fr else vocab.CATEGORIES_EN)
    desc_pool = vocab.FRENCH_DESCRIPTION if fr else vocab.ENGLISH_DESCRIPTION
    values = {
        MARKET_NAME: template.display_name,
        PRODUCT: _maybe_title(rng, product),
        PRICE: price,
        MODEL: _maybe_title(rng, model),
        STOCK: str(rng.randint(1, 500)),
        VIEWS: str(rng.randint(1, 5000)),
        VENDOR: _zipf_choice(rng, _vendor_pool(m)),
        DESCRIPTION: " ".join(rng.choices(desc_pool, k=rng.randint(4, 9))),
        SKU: f"psa-{rng.randint(10000, 99999)}",
        BRAND: rng.choice(vocab.BRANDS),
        "_euro": f"{amount * 0.92:.2f}".replace(".", ","),
    }
    return values


# ---------------------------------------------------------------- rendering


class _PageBuilder:
    def __init__(self, rng: random.Random, noisy: bool):
        self.rng = rng
        self.noisy = noisy
        self.parts: list[str] = []
        self.size = 0
        self.entities: list[EntitySpan] = []

    def raw(self, s: str) -> None:
        self.parts.append(s)
        self.size += len(s)

    def entity(self, etype: str, surface: str) -> None:
        self.raw(f'<span class="{etype}">')
        self.entities.append(EntitySpan(etype, self.size, self.size + len(surface), surface))
        self.raw(surface)
        self.raw("</span>")

    def gap(self, decoys: bool = False) -> None:
        """Inter-token separator; on noisy pages sometimes whitespace runs, symbols or numbers."""
        if not self.noisy or self.rng.random() >= 0.3:
            self.raw(" ")
            return
        kind = self.rng.random()
        if kind < 0.4:
            self.raw(self.rng.choice(["  ", " \n\t ", "\n\n   ", " \t"]))
        elif kind < 0.8 or not decoys:
            self.raw(f" {self.rng.choice('&*;:')} ")
        else:
            self.raw(f" {self.rng.randint(2, 999)} ")

    def html(self) -> str:
        return "".join(self.parts)


def _render_pieces(b: _PageBuilder, pieces, values: dict[str, str]) -> None:
    for i, piece in enumerate(pieces):
        if i:
            b.gap()
        if isinstance(piece, Slot):
            b.entity(piece.entity_type, values[piece.entity_type])
        elif piece is EURO:
            b.raw(f"{values['_euro']} €")
        else:
            b.raw(piece)


def _filler_words(b: _PageBuilder, lang: str, n: int) -> None:
    pool = vocab.LANGUAGE_FILLER[lang]
    for i in range(n):
        if i:
            b.gap(decoys=True)
        b.raw(b.rng.choice(pool))


def _render(template: MarketTemplate, values, rng, noisy, links: list[str], target: int) -> _PageBuilder:
    b = _PageBuilder(rng, noisy)
    lang = template.language
    b.raw(f'<html lang="{lang}"><body>')
    for kind, payload in template.layout:
        if kind == "header":
            b.raw('<div class="header">')
            _render_pieces(b, payload, values)
            b.raw("</div>")
        elif kind == "div":
            b.raw("<div>")
            _render_pieces(b, payload, values)
            b.raw("</div>")
        elif kind == "table":
            b.raw("<table>")
            for row in payload:
                b.raw("<tr>")
                for j, piece in enumerate(row):
                    b.raw("<td>")
                    _render_pieces(b, [piece], values)
                    b.raw("</td>")
                b.raw("</tr>")
            b.raw("</table>")
        elif kind == "nav":
            b.raw('<div class="nav"><a href="/">')
            _filler_words(b, lang, rng.randint(3, 8))
            b.raw("</a></div>")
        elif kind == "footer":
            used = len(normalize(extract_text(b.html())[0]).split())
            remaining = max(4, target - used)
            b.raw('<div class="footer">')
            link_iter = iter(links)
            while remaining > 0:
                n = min(remaining, rng.randint(6, 14))
                href = next(link_iter, None)
                if href is not None:
                    b.raw(f'<div><a href="{href}">')
                    _filler_words(b, lang, n)
                    b.raw("</a></div>")
                else:
                    b.raw("<div>")
                    _filler_words(b, lang, n)
                    b.raw("</div>")
                remaining -= n
            b.raw("</div>")
    b.raw("</body></html>\n")
    return b


def page_id_for(market_id: str, index: int) -> str:
    return f"{market_id}-{index:05d}"


def generate_page(market_id: str, index: int, count: int, seed: int, noise_rate: float) -> GroundTruthListing:
    template = TEMPLATES[market_id]
    rng = random.Random(f"{seed}:{market_id}:{index}")
    values = _sample_values(template, rng)
    noisy = rng.random() < noise_rate
    target = max(1, round(template.token_budget * rng.uniform(0.8, 1.2)))
    related = [(index + k) % count for k in (1, 2)] if count > 1 else []
    links = [listing_path(market_id, page_id_for(market_id, r)) for r in related]
    b = _render(template, values, rng, noisy, links, target)
    pid = page_id_for(market_id, index)
    return GroundTruthListing(
        page_id=pid,
        url=BASE_URL + listing_path(market_id, pid),
        market_id=market_id,
        html=b.html(),
        entities=b.entities,
        language=template.language,
    )


def generate_corpus(config: CorpusConfig) -> tuple[list[GroundTruthListing], list[dict]]:
    """Pages for every market in ``config.counts`` (in market-enum order) plus the manifest."""
    config.validate()
    pages: list[GroundTruthListing] = []
    for market_id in MARKET_IDS:
        n = config.counts.get(market_id, 0)
        for i in range(n):
            pages.append(generate_page(market_id, i, n, config.seed, config.noise_rate))
    return pages, [p.manifest_record() for p in pages]


def entity_inventory(corpus) -> dict[str, int]:
    counts: Counter[str] = Counter()
    for page in corpus:
        counts.update(e.entity_type for e in page.entities)
    return dict(sorted(counts.items()))


# ---------------------------------------------------------------- persistence


def write_corpus(pages: list[GroundTruthListing], out_dir: Path, config: CorpusConfig | None = None) -> None:
    out_dir = Path(out_dir)
    (out_dir / "pages").mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as mf, \
            open(out_dir / "ground_truth.jsonl", "w", encoding="utf-8") as gf:
        for page in pages:
            (out_dir / "pages" / f"{page.page_id}.html").write_text(page.html, encoding="utf-8")
            mf.write(json.dumps(page.manifest_record(), ensure_ascii=False) + "\n")
            for e in page.entities:
                rec = {"page_id": page.page_id, **asdict(e)}
                gf.write(json.dumps(rec, ensure_ascii=False) + "\n")
    if config is not None:
        (out_dir / "corpus_config.json").write_text(
            json.dumps(asdict(config), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_corpus(corpus_dir: Path) -> list[GroundTruthListing]:
    corpus_dir = Path(corpus_dir)
    manifest = read_jsonl(corpus_dir / "manifest.jsonl")
    gt_path = corpus_dir / "ground_truth.jsonl"
    by_page: dict[str, list[EntitySpan]] = {}
    if gt_path.exists():
        for rec in read_jsonl(gt_path):
            by_page.setdefault(rec["page_id"], []).append(EntitySpan(
                rec["entity_type"], rec["char_start"], rec["char_end"], rec["surface"]))
    pages = []
    for rec in manifest:
        html = (corpus_dir / "pages" / f"{rec['page_id']}.html").read_text(encoding="utf-8")
        pages.append(GroundTruthListing(rec["page_id"], rec["url"], rec["market_id"], html,
                                        by_page.get(rec["page_id"], []), rec.get("language", "en")))
    return pages
