"""Evaluation protocols: in-domain, held-out market (before and after
fine-tuning) and unseen-market robustness with novel entity types."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import seq_ner, span_ner
from .dataset import (AnnotatedListing, SplitManifest, build_vocab, entity_types_of,
                      to_span_input)
from .evaluation import EvalReport, MatchCounts, ProtocolError, exact_match
from .extract.patterns import NOVEL_TYPES, PatternSet

log = logging.getLogger(__name__)

PROTOCOLS = ("in_domain", "zero_shot_analog", "fine_tune_analog", "robustness")
ALIASES = {"zero_shot": "zero_shot_analog", "fine_tune": "fine_tune_analog"}
DEFAULT_HELD_OUT = "cocorico"


@dataclass
class RobustnessConfig:
    market_id: str = "palmetto"
    novel_types: tuple[str, ...] = NOVEL_TYPES


@dataclass
class ModelSpec:
    """What to train: model kind, its config, and an id used in reports."""

    kind: str = "span"
    span: span_ner.SpanTrainConfig = field(default_factory=span_ner.SpanTrainConfig)
    seq: seq_ner.SeqTrainConfig = field(default_factory=seq_ner.SeqTrainConfig)
    threshold: float = 0.5
    model_id: str = ""

    def __post_init__(self):
        if self.kind not in ("span", "seq"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.model_id = self.model_id or f"{self.kind}-ner"


@dataclass
class TrainedModel:
    kind: str
    model: object
    train_ids: list[str]
    train_markets: list[str]
    entity_types: list[str]
    log: object = None


@dataclass
class ProtocolResult:
    reports: list[EvalReport]
    trained: TrainedModel
    eval_ids: list[str]


# ---------------------------------------------------------------- training


def train_model(spec: ModelSpec, train: list[AnnotatedListing], base: TrainedModel | None = None,
                monitor: list[AnnotatedListing] | None = None) -> TrainedModel:
    """Train from scratch, or continue training ``base`` on ``train``."""
    if not train:
        raise ProtocolError("empty training set")
    types = list(base.entity_types) if base else entity_types_of(train)
    for t in entity_types_of(train):
        if t not in types:
            types.append(t)
    if spec.kind == "span":
        model = base.model if base else span_ner.SpanNerModel(build_vocab(train, extra=types),
                                                              seed=spec.span.seed)
        examples = [to_span_input(lst, types, max_len=spec.span.max_len) for lst in train]
        result = span_ner.train(examples, spec.span, model, types)
    else:
        if base is not None and set(types) != set(base.entity_types):
            raise ProtocolError("seq-ner cannot add heads for new entity types")
        model = base.model if base else seq_ner.SeqNerModel(build_vocab(train), types,
                                                            seed=spec.seq.seed)
        types = model.entity_types
        result = seq_ner.train(train, spec.seq, model, monitor)
    prior_ids = base.train_ids if base else []
    prior_markets = base.train_markets if base else []
    return TrainedModel(spec.kind, model, sorted(set(prior_ids) | {x.page_id for x in train}),
                        sorted(set(prior_markets) | {x.market_id for x in train}), types, result)


# ---------------------------------------------------------------- prediction


def requested_types(market_id: str, patterns: PatternSet | None = None) -> list[str]:
    """Entity types asked for on a page: the labeled schema of its market."""
    return (patterns or PatternSet()).entity_types(market_id)


def predict(trained: TrainedModel, listings: list[AnnotatedListing], threshold: float = 0.5,
            patterns: PatternSet | None = None) -> dict[str, list[tuple]]:
    """page_id -> [(start, end, type, score)] with per-market requested types."""
    out: dict[str, list[tuple]] = {}
    by_market: dict[str, list[AnnotatedListing]] = {}
    for lst in listings:
        by_market.setdefault(lst.market_id, []).append(lst)
    for market in sorted(by_market):
        group = by_market[market]
        types = requested_types(market, patterns)
        if trained.kind == "span":
            preds = span_ner.predict_batch([g.tokens for g in group], types, trained.model, threshold)
            for g, ps in zip(group, preds):
                out[g.page_id] = [(p.start, p.end, types[p.type], p.score) for p in ps]
        else:
            preds = seq_ner.predict_batch(group, trained.model, types)
            for g, ps in zip(group, preds):
                out[g.page_id] = list(ps)
    return out


def gold_of(listings: list[AnnotatedListing]) -> dict[str, list[tuple[int, int, str]]]:
    return {x.page_id: [(s.start, s.end, s.entity_type) for s in x.spans] for x in listings}


def check_leakage(trained: TrainedModel, eval_ids) -> None:
    overlap = sorted(set(trained.train_ids) & set(eval_ids))
    if overlap:
        raise ProtocolError(f"{len(overlap)} evaluation pages were used in training, e.g. {overlap[:3]}")


def score(trained: TrainedModel, listings, predictions, model_id, protocol, split, scope,
          types=None) -> EvalReport:
    pred = {pid: [(s, e, t) for s, e, t, *_ in spans] for pid, spans in predictions.items()}
    gold = gold_of(listings)
    if types is not None:
        keep = set(types)
        pred = {k: [x for x in v if x[2] in keep] for k, v in pred.items()}
        gold = {k: [x for x in v if x[2] in keep] for k, v in gold.items()}
    counts: MatchCounts = exact_match(pred, gold, types)
    return EvalReport(model_id, protocol, split, scope, counts)


# ---------------------------------------------------------------- protocols


def _subset(listings, ids) -> list[AnnotatedListing]:
    ids = set(ids)
    return [x for x in listings if x.page_id in ids]


def evaluation_pages(protocol: str, corpus: list[AnnotatedListing], manifest: SplitManifest,
                     held_out: str = DEFAULT_HELD_OUT,
                     robustness_corpus: list[AnnotatedListing] | None = None,
                     robustness: RobustnessConfig | None = None):
    """(pages, split name, scope) evaluated by ``protocol``."""
    protocol = canonical(protocol)
    if protocol == "in_domain":
        return _subset(corpus, manifest.test), "test", "all_markets"
    if protocol == "robustness":
        rc = robustness or RobustnessConfig()
        pages = [x for x in (robustness_corpus or []) if x.market_id == rc.market_id]
        if not pages:
            raise ProtocolError(f"robustness needs a corpus of {rc.market_id} pages")
        return pages, "all", rc.market_id
    if held_out not in {x.market_id for x in corpus}:
        raise ProtocolError(f"held-out market {held_out!r} not in corpus")
    return [x for x in _subset(corpus, manifest.test) if x.market_id == held_out], "test", held_out


def canonical(protocol: str) -> str:
    protocol = ALIASES.get(protocol, protocol)
    if protocol not in PROTOCOLS:
        raise ProtocolError(f"unknown protocol {protocol!r}")
    return protocol


def evaluate(protocol: str, trained: TrainedModel, pages: list[AnnotatedListing], split: str,
             scope: str, model_id: str, threshold: float = 0.5,
             robustness: RobustnessConfig | None = None,
             predictions: dict | None = None) -> list[EvalReport]:
    """Hygiene checks, prediction (unless ``predictions`` is given) and scoring."""
    protocol = canonical(protocol)
    eval_ids = [x.page_id for x in pages]
    check_leakage(trained, eval_ids)
    if protocol in ("zero_shot_analog", "robustness") and scope in trained.train_markets:
        raise ProtocolError(f"{scope} appears in the model's training data")
    preds = predictions if predictions is not None else predict(trained, pages, threshold)
    reports = [score(trained, pages, preds, model_id, protocol, split, scope)]
    if protocol == "robustness":
        rc = robustness or RobustnessConfig()
        reports.append(score(trained, pages, preds, model_id, protocol, split,
                             f"{scope}:novel_types", list(rc.novel_types)))
    return reports


def run_protocol(protocol: str, spec: ModelSpec, corpus: list[AnnotatedListing],
                 manifest: SplitManifest, held_out: str = DEFAULT_HELD_OUT,
                 robustness_corpus: list[AnnotatedListing] | None = None,
                 robustness: RobustnessConfig | None = None,
                 trained: TrainedModel | None = None) -> ProtocolResult:
    """Train (unless ``trained`` is given) and evaluate one protocol.

    ``trained`` is the in-domain model for ``in_domain``/``robustness``, the
    held-out-market model for ``zero_shot_analog``, and the starting point
    (that same held-out-market model, continued in place) for
    ``fine_tune_analog``.
    """
    protocol = canonical(protocol)
    pages, split, scope = evaluation_pages(protocol, corpus, manifest, held_out,
                                           robustness_corpus, robustness)
    train_pages = _subset(corpus, manifest.train)
    if protocol in ("in_domain", "robustness"):
        trained = trained or train_model(spec, train_pages)
    else:
        base_train = [x for x in train_pages if x.market_id != held_out]
        trained = trained or train_model(spec, base_train)
        if protocol == "fine_tune_analog":
            trained = train_model(spec, [x for x in train_pages if x.market_id == held_out],
                                  base=trained)
    reports = evaluate(protocol, trained, pages, split, scope, spec.model_id, spec.threshold,
                       robustness)
    return ProtocolResult(reports, trained, [x.page_id for x in pages])
