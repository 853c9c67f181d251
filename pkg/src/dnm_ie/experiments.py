"""Shared setup for the experiment scripts and the slow tests."""
from __future__ import annotations

from collections import Counter

import numpy as np

from . import seq_ner, span_ner
from .dataset import AnnotatedListing, build_vocab, entity_types_of, listing_from_record, split
from .extract.annotate import annotate_pages
from .market_sim.generator import CorpusConfig, generate_corpus
from .market_sim.templates import DEFAULT_MARKETS
from .protocols import ModelSpec

# Learning rates for the span model in the scaled-down setting (small
# randomly initialised encoder, 500 steps).  SpanTrainConfig keeps the
# fine-tuning defaults meant for a large pretrained encoder.
DESK_SPAN_LR = 5e-3


def annotated_corpus(pages_per_market: int = 100, seed: int = 42, noise_rate: float = 0.0,
                     markets=DEFAULT_MARKETS) -> list[AnnotatedListing]:
    pages, _ = generate_corpus(CorpusConfig({m: pages_per_market for m in markets}, seed=seed,
                                            noise_rate=noise_rate))
    return [listing_from_record(r) for r in annotate_pages(pages)]


def robustness_corpus(pages: int = 50, seed: int = 42, market: str = "palmetto",
                      noise_rate: float = 0.0) -> list[AnnotatedListing]:
    return annotated_corpus(pages, seed, noise_rate, markets=(market,))


def head_per_market(listings: list[AnnotatedListing], n: int) -> list[AnnotatedListing]:
    """The first ``n`` pages of every market, order preserved."""
    seen: Counter = Counter()
    out = []
    for x in listings:
        seen[x.market_id] += 1
        if seen[x.market_id] <= n:
            out.append(x)
    return out


def train_test(listings, ratio: float = 0.8, seed: int = 0):
    manifest = split(listings, ratio, seed)
    ids = set(manifest.train)
    return manifest, [x for x in listings if x.page_id in ids], [x for x in listings if x.page_id not in ids]


def span_spec(seed: int = 0, steps: int = 500) -> ModelSpec:
    return ModelSpec("span", span=span_ner.SpanTrainConfig(num_steps=steps, lr_encoder=DESK_SPAN_LR,
                                                           lr_others=DESK_SPAN_LR, seed=seed))


def seq_spec(seed: int = 0, epochs: int = 10) -> ModelSpec:
    return ModelSpec("seq", seq=seq_ner.SeqTrainConfig(epochs=epochs, seed=seed))


def fresh_seq_model(train: list[AnnotatedListing], seed: int = 0) -> seq_ner.SeqNerModel:
    return seq_ner.SeqNerModel(build_vocab(train), entity_types_of(train), seed=seed)


def median(values) -> float:
    return float(np.median(np.asarray(values, dtype=float)))
