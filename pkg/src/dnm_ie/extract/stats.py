"""Corpus statistics (top vendors, top categories, market shares) and CSV output."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field

from .labeling import LabelingReport
from .patterns import MODEL, VENDOR

TOP_N = 10


@dataclass
class CorpusStats:
    top_vendor_markets: list[tuple[str, str, int]] = field(default_factory=list)
    top_categories: list[tuple[str, int]] = field(default_factory=list)
    market_shares: dict[str, float] = field(default_factory=dict)
    pages: int = 0

    def summary(self) -> str:
        lines = [f"{self.pages} annotated pages"]
        lines.append("market shares:")
        lines += [f"  {m:<18} {s:.3f}" for m, s in self.market_shares.items()]
        lines.append("top vendor/market pairs:")
        lines += [f"  {v} @ {m}: {n}" for v, m, n in self.top_vendor_markets]
        lines.append("top categories:")
        lines += [f"  {c}: {n}" for c, n in self.top_categories]
        return "\n".join(lines)


def _first_surface(record: dict, etype: str) -> str | None:
    for ent in record.get("entities", []):
        if ent["type"] == etype:
            return ent["surface"]
    return None


def _top(counter: Counter, n: int) -> list:
    # most frequent first; ties broken by key so output is stable
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:n]


def corpus_stats(records: list[dict], top_n: int = TOP_N) -> CorpusStats:
    """Statistics over annotated-corpus records (one per page)."""
    pairs: Counter = Counter()
    cats: Counter = Counter()
    markets: Counter = Counter()
    for rec in records:
        markets[rec["market_id"]] += 1
        vendor = _first_surface(rec, VENDOR)
        if vendor is not None:
            pairs[(vendor, rec["market_id"])] += 1
        cat = _first_surface(rec, MODEL)
        if cat is not None:
            cats[cat] += 1
    total = sum(markets.values())
    shares = {m: markets[m] / total for m in sorted(markets)} if total else {}
    return CorpusStats(
        top_vendor_markets=[(v, m, n) for (v, m), n in _top(pairs, top_n)],
        top_categories=_top(cats, top_n),
        market_shares=shares,
        pages=total,
    )


def _csv(fields: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def stats_csv(stats: CorpusStats) -> str:
    rows = [{"table": "market_share", "key": m, "market_id": m, "value": f"{s:.6f}"}
            for m, s in stats.market_shares.items()]
    rows += [{"table": "vendor_market", "key": v, "market_id": m, "value": n}
             for v, m, n in stats.top_vendor_markets]
    rows += [{"table": "category", "key": c, "market_id": "", "value": n}
             for c, n in stats.top_categories]
    return _csv(["table", "key", "market_id", "value"], rows)


def labeling_csv(report: LabelingReport) -> str:
    return _csv(["market_id", "entity_type", "attempted", "matched", "exact_correct", "accuracy"],
                report.rows())
