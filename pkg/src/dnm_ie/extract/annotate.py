"""Annotated-corpus records: normalized text plus regex entity labels."""
from __future__ import annotations

import json
from pathlib import Path

from .labeling import LabeledEntity, apply_patterns
from .patterns import PatternSet
from .text import NormalizedDoc


def to_record(doc: NormalizedDoc, labels: list[LabeledEntity]) -> dict:
    return {
        "page_id": doc.page_id,
        "market_id": doc.market_id,
        "language": doc.language,
        "text": doc.text,
        "entities": [{"type": e.entity_type, "char_start": e.char_start,
                      "char_end": e.char_end, "surface": e.surface} for e in labels],
    }


def annotate_html(page_id: str, market_id: str, html: str, language: str = "en",
                  patterns: PatternSet | None = None) -> tuple[NormalizedDoc, list[LabeledEntity]]:
    doc = NormalizedDoc.from_html(page_id, market_id, html, language)
    return doc, apply_patterns(doc, patterns or PatternSet())


def write_annotated(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_annotated(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def annotate_pages(pages, patterns: PatternSet | None = None) -> list[dict]:
    """Annotated records for pages carrying ``page_id``, ``market_id``, ``html``, ``language``.

    Pages from markets without patterns (such as a crawl's overview page) are skipped.
    """
    patterns = patterns or PatternSet()
    out = []
    for p in pages:
        if p.market_id not in patterns:
            continue
        doc, labels = annotate_html(p.page_id, p.market_id, p.html, p.language, patterns)
        out.append(to_record(doc, labels))
    return out
