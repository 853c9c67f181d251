"""Model-ready datasets built from the annotated corpus."""
from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

ENT_TOKEN = "[ENT]"
SEP_TOKEN = "[SEP]"
MAX_TYPES = 25
MAX_LEN = 3000
PAD_ID = 0
QUESTION = "What describes {} in the text?"


class AlignmentError(ValueError):
    pass


class DatasetConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TokenSpan:
    entity_type: str
    start: int
    end: int  # inclusive
    surface: str


@dataclass
class AnnotatedListing:
    page_id: str
    market_id: str
    language: str
    text: str
    tokens: list[str]
    spans: list[TokenSpan]

    def span_text(self, span: TokenSpan) -> str:
        return " ".join(self.tokens[span.start:span.end + 1])


def align_spans(char_spans, tokens, page_id: str = "?") -> list[TokenSpan]:
    """Map ``(type, char_start, char_end, surface)`` onto inclusive token ranges.

    ``tokens`` are ``(surface, start, end)`` triples in text order.
    """
    out = []
    for etype, cs, ce, surface in char_spans:
        first = last = None
        for k, (_, ts, te) in enumerate(tokens):
            if te > cs and ts < ce:
                if first is None:
                    first = k
                last = k
            elif ts >= ce:
                break
        if first is None:
            raise AlignmentError(f"page {page_id}: span {etype} [{cs},{ce}) covers no token")
        out.append(TokenSpan(etype, first, last, surface))
    return out


def listing_from_record(rec: dict) -> AnnotatedListing:
    """Build a listing from an annotated-corpus record (see ``extract.annotate``)."""
    text = rec["text"]
    toks = [(m, s, e) for m, s, e in _whitespace_tokens(text)]
    spans = align_spans(
        [(e["type"], e["char_start"], e["char_end"], e["surface"]) for e in rec["entities"]],
        toks, rec["page_id"])
    return AnnotatedListing(rec["page_id"], rec["market_id"], rec.get("language", "en"),
                            text, [t[0] for t in toks], spans)


def _whitespace_tokens(text):
    pos = 0
    for tok in text.split(" "):
        if tok:
            yield tok, pos, pos + len(tok)
        pos += len(tok) + 1


def load_annotated(path) -> list[AnnotatedListing]:
    with open(path, encoding="utf-8") as fh:
        return [listing_from_record(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------- conversation template


@dataclass
class ConversationExample:
    id: str
    passage: str
    turns: list[tuple[str, list[str]]]
    system: str | None = None

    def to_record(self) -> dict:
        conv = []
        if self.system:
            conv.append({"from": "system", "value": self.system})
        conv.append({"from": "human", "value": f"Text: {self.passage}"})
        conv.append({"from": "gpt", "value": "I've read this text."})
        for question, answer in self.turns:
            conv.append({"from": "human", "value": question})
            conv.append({"from": "gpt", "value": json.dumps(answer, ensure_ascii=False)})
        return {"id": self.id, "conversations": conv}


def to_conversation(listing: AnnotatedListing, entity_types, system: str | None = None) -> ConversationExample:
    turns = []
    for etype in entity_types:
        answers = [listing.span_text(s) for s in listing.spans if s.entity_type == etype]
        turns.append((QUESTION.format(etype), answers))
    return ConversationExample(listing.page_id, listing.text, turns, system)


# ---------------------------------------------------------------- span-NER input


@dataclass
class SpanNerExample:
    id: str
    types: list[str]
    text_tokens: list[str]
    gold: list[tuple[int, int, int]]  # (start, end inclusive, type index)

    @property
    def prompt_tokens(self) -> list[str]:
        out = []
        for t in self.types:
            out.extend([ENT_TOKEN, t])
        out.append(SEP_TOKEN)
        return out

    @property
    def tokens(self) -> list[str]:
        return self.prompt_tokens + self.text_tokens

    @property
    def M(self) -> int:
        return len(self.types)

    @property
    def N(self) -> int:
        return len(self.text_tokens)

    def gold_surfaces(self) -> list[tuple[str, str]]:
        return [(self.types[t], " ".join(self.text_tokens[s:e + 1])) for s, e, t in self.gold]


def to_span_input(listing: AnnotatedListing, entity_types, max_types: int = MAX_TYPES,
                  max_len: int = MAX_LEN) -> SpanNerExample:
    entity_types = list(entity_types)
    if len(entity_types) > max_types:
        raise DatasetConfigError(f"{len(entity_types)} entity types exceed max_types={max_types}")
    tokens = listing.tokens[:max_len]
    index = {t: i for i, t in enumerate(entity_types)}
    gold = [(s.start, s.end, index[s.entity_type]) for s in listing.spans
            if s.entity_type in index and s.end < len(tokens)]
    return SpanNerExample(listing.page_id, entity_types, tokens, sorted(gold))


def span_record(listing: AnnotatedListing) -> dict:
    return {"id": listing.page_id, "market_id": listing.market_id, "tokens": listing.tokens,
            "ner": [[s.start, s.end, s.entity_type] for s in listing.spans]}


# ---------------------------------------------------------------- split / padding


@dataclass
class SplitManifest:
    seed: int
    ratio: float
    train: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        return cls(**json.loads(text))


def split(corpus, ratio: float = 0.8, seed: int = 0) -> SplitManifest:
    """Deterministic split stratified by market.

    Train size is ``round(ratio * total)``; per-market shares use largest
    remainders, and a market with two or more pages lands on both sides.
    """
    if not corpus:
        raise DatasetConfigError("cannot split an empty corpus")
    by_market: dict[str, list[str]] = defaultdict(list)
    for item in corpus:
        by_market[item.market_id].append(item.page_id)
    markets = sorted(by_market)
    total = sum(len(v) for v in by_market.values())
    quota = {m: ratio * len(by_market[m]) for m in markets}
    alloc = {m: int(np.floor(quota[m])) for m in markets}
    for m in markets:
        n = len(by_market[m])
        if n >= 2:
            alloc[m] = min(max(alloc[m], 1), n - 1)
    target = round(ratio * total)
    order = sorted(markets, key=lambda m: (-(quota[m] - np.floor(quota[m])), m))
    for m in order:
        if sum(alloc.values()) >= target:
            break
        n = len(by_market[m])
        if alloc[m] < (n - 1 if n >= 2 else n):
            alloc[m] += 1
    manifest = SplitManifest(seed=seed, ratio=ratio)
    for m in markets:
        ids = sorted(by_market[m])
        random.Random(f"{seed}:{m}").shuffle(ids)
        manifest.train.extend(ids[:alloc[m]])
        manifest.test.extend(ids[alloc[m]:])
    return manifest


def pad_truncate(ids, target: int = MAX_LEN, pad_id: int = PAD_ID):
    """Right-pad or truncate to ``target``; returns (sequence, mask, truncated)."""
    if target < 1:
        raise DatasetConfigError("target length must be >= 1")
    ids = list(ids)
    truncated = len(ids) > target
    ids = ids[:target]
    n = len(ids)
    seq = np.full(target, pad_id, dtype=np.int64)
    seq[:n] = ids
    mask = np.zeros(target, dtype=np.int8)
    mask[:n] = 1
    return seq, mask, truncated


def build_vocab(listings, extra=(), min_count: int = 1) -> list[str]:
    counts = Counter()
    for lst in listings:
        counts.update(lst.tokens)
    words = sorted(w for w, c in counts.items() if c >= min_count)
    for w in extra:
        if w not in counts:
            words.append(w)
    return words


def entity_types_of(listings) -> list[str]:
    """Entity types in first-seen order."""
    seen: dict[str, None] = {}
    for lst in listings:
        for s in lst.spans:
            seen.setdefault(s.entity_type, None)
    return list(seen)


def write_jsonl(path, records) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
