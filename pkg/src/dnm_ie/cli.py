"""Command-line entry point: gen | serve | crawl | extract | build | train | eval | report.

Configuration is one INI file (``--config``) whose sections mirror the
subcommands; flags override the file; the environment only supplies the
default output root (``EXTRACT_HOME``).  Every command writes the resolved
configuration to ``<out>/config/<command>.ini``, which can be passed back
through ``--config`` to repeat the run.

Exit codes: 0 success, 1 usage error, 2 missing input or invalid data,
3 internal error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("dnm_ie")

DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"seed": "42", "out": ""},
    "gen": {"markets": "agartha_item,berlusconi,cannahome,cocorico,darkmarket,silkroad",
            "pages_per_market": "100", "noise_rate": "0.2",
            "robustness_market": "palmetto", "robustness_pages": "50"},
    "serve": {"host": "127.0.0.1", "port": "8088", "failure_rate": "0.0",
              "latency_min_ms": "0", "latency_max_ms": "0"},
    "crawl": {"seed_url": "", "max_stored_links": "1000000", "max_seconds": "86400",
              "rounds": "3", "delay_min_ms": "5", "delay_max_ms": "20", "max_retries": "3",
              "workers": "4", "failure_rate": "0.05"},
    "build": {"ratio": "0.8"},
    "span": {"num_steps": "500", "batch_size": "2", "warmup_ratio": "0.1", "lr_encoder": "5e-3",
             "lr_others": "5e-3", "max_types": "25", "max_neg_type_ratio": "1.0",
             "neg_sample_ratio": "1.0", "max_len": "3000", "eval_every": "10",
             "shuffle_types": "true", "random_drop": "true", "dropout": "0.1",
             "max_grad_norm": "1.0", "max_width": "12", "dim": "64"},
    "seq": {"epochs": "10", "batch_size": "8", "lr": "2e-3", "dropout_embedding": "0.68",
            "dropout_lstm": "0.5", "pad_length": "3000", "max_grad_norm": "5.0"},
    "eval": {"threshold": "0.5", "held_out": "cocorico", "novel_types": "sku,brand"},
}

COMMANDS = ("gen", "serve", "crawl", "extract", "build", "train", "eval", "report")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- configuration


def load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read_dict(DEFAULTS)
    if path:
        if not Path(path).is_file():
            raise DataError(f"config file not found: {path}")
        user = configparser.ConfigParser(interpolation=None)
        try:
            user.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise UsageError(f"cannot parse {path}: {exc}") from None
        for section in user.sections():
            if section not in DEFAULTS:
                raise UsageError(f"{path}: unknown section [{section}]")
            for key, value in user.items(section, raw=True):
                if key not in DEFAULTS[section]:
                    raise UsageError(f"{path}: unknown key {key!r} in [{section}]")
                cfg.set(section, key, value)
    return cfg


def apply_flags(cfg: configparser.ConfigParser, args) -> None:
    if args.seed is not None:
        cfg.set("run", "seed", str(args.seed))
    if args.out:
        cfg.set("run", "out", args.out)
    if not cfg.get("run", "out"):
        root = os.environ.get("EXTRACT_HOME") or "."
        cfg.set("run", "out", str(Path(root) / "extract-out"))
    if args.workers is not None:
        cfg.set("crawl", "workers", str(args.workers))
    if args.threshold is not None:
        cfg.set("eval", "threshold", str(args.threshold))
    if args.epochs is not None:
        cfg.set("seq", "epochs", str(args.epochs))
    if args.steps is not None:
        cfg.set("span", "num_steps", str(args.steps))
    if args.market:
        if args.command == "gen":
            cfg.set("gen", "markets", args.market)
        else:
            cfg.set("eval", "held_out", args.market)


def write_snapshot(cfg: configparser.ConfigParser, out: Path, command: str) -> None:
    (out / "config").mkdir(parents=True, exist_ok=True)
    with open(out / "config" / f"{command}.ini", "w", encoding="utf-8") as fh:
        cfg.write(fh)


def _get(cfg, section, key, cast=str):
    raw = cfg.get(section, key)
    try:
        if cast is bool:
            return cfg.getboolean(section, key)
        return cast(raw)
    except ValueError:
        raise UsageError(f"[{section}] {key} = {raw!r} is not a valid {cast.__name__}") from None


def _need(path: Path) -> Path:
    if not path.exists():
        raise DataError(f"missing input: {path}")
    return path


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_gen(cfg, out: Path, args) -> None:
    from .market_sim.generator import CorpusConfig, entity_inventory, generate_corpus, write_corpus

    seed = _get(cfg, "run", "seed", int)
    n = _get(cfg, "gen", "pages_per_market", int)
    markets = [m.strip() for m in cfg.get("gen", "markets").split(",") if m.strip()]
    config = CorpusConfig({m: n for m in markets}, seed=seed, noise_rate=_get(cfg, "gen", "noise_rate", float))
    pages, _ = generate_corpus(config)
    write_corpus(pages, out / "corpus", config)
    rmarket = cfg.get("gen", "robustness_market")
    rn = _get(cfg, "gen", "robustness_pages", int)
    if rmarket and rn > 0:
        rconfig = CorpusConfig({rmarket: rn}, seed=seed, noise_rate=config.noise_rate)
        rpages, _ = generate_corpus(rconfig)
        write_corpus(rpages, out / "corpus_robustness", rconfig)
    _write(out / "corpus" / "inventory.json", json.dumps(entity_inventory(pages), indent=2) + "\n")
    print(f"generated {len(pages)} pages in {out / 'corpus'}")


def _market_from(cfg, out: Path, failure_rate: float):
    from .market_sim.generator import load_corpus
    from .market_sim.service import MockMarket

    corpus = load_corpus(_need(out / "corpus"))
    lo, hi = _get(cfg, "serve", "latency_min_ms", float), _get(cfg, "serve", "latency_max_ms", float)
    return MockMarket.from_corpus(corpus, failure_rate=failure_rate, latency=(lo / 1000, hi / 1000),
                                  seed=_get(cfg, "run", "seed", int))


def cmd_serve(cfg, out: Path, args) -> None:
    market = _market_from(cfg, out, _get(cfg, "serve", "failure_rate", float))
    market.start(cfg.get("serve", "host"), _get(cfg, "serve", "port", int))
    print(f"serving {len(market.pages)} pages; seed url {market.overview_url} (Ctrl-C to stop)")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        market.stop()


def cmd_crawl(cfg, out: Path, args) -> None:
    from .crawler import CrawlConfig, CrawlError, HttpFetcher, crawl, write_store

    def run(seed_url: str):
        config = CrawlConfig(
            seed_url=seed_url,
            max_stored_links=_get(cfg, "crawl", "max_stored_links", int),
            max_seconds=_get(cfg, "crawl", "max_seconds", float),
            rounds=_get(cfg, "crawl", "rounds", int),
            delay_min_ms=_get(cfg, "crawl", "delay_min_ms", float),
            delay_max_ms=_get(cfg, "crawl", "delay_max_ms", float),
            max_retries=_get(cfg, "crawl", "max_retries", int),
            workers=_get(cfg, "crawl", "workers", int),
            seed=_get(cfg, "run", "seed", int))
        try:
            config.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        try:
            return crawl(HttpFetcher(), config)
        except CrawlError as exc:
            raise DataError(str(exc)) from None

    seed_url = cfg.get("crawl", "seed_url")
    if seed_url:
        store, report = run(seed_url)
    else:  # crawl an in-process market serving the generated corpus
        with _market_from(cfg, out, _get(cfg, "crawl", "failure_rate", float)) as market:
            store, report = run(market.overview_url)
    dest = out / "crawl"
    if dest.exists():
        for old in (dest / "pages").glob("*.html"):
            old.unlink()
    write_store(store, dest, report)
    print(f"crawl stored {report.stored} pages ({report.stop_reason}) in {dest}")


def cmd_extract(cfg, out: Path, args) -> None:
    from .extract.annotate import annotate_pages, write_annotated
    from .extract.labeling import LabeledEntity, verify_labels
    from .extract.stats import corpus_stats, labeling_csv, stats_csv
    from .market_sim.generator import load_corpus

    source = out / "crawl" if (out / "crawl" / "manifest.jsonl").exists() else out / "corpus"
    pages = load_corpus(_need(source / "manifest.jsonl").parent)
    records = annotate_pages(pages)
    dest = out / "annotated"
    write_annotated(dest / "annotated.jsonl", records)
    truth_dir = out / "corpus"
    if (truth_dir / "ground_truth.jsonl").exists():
        truth = {p.page_id: (p.market_id, p.entities) for p in load_corpus(truth_dir)}
        labeled = {r["page_id"]: [LabeledEntity(r["page_id"], e["type"], e["char_start"], e["char_end"],
                                                e["surface"]) for e in r["entities"]] for r in records}
        missing = sorted(set(truth) - set(labeled))
        if missing:
            log.warning("%d generated pages were not crawled; labeling check covers the rest",
                        len(missing))
        report = verify_labels(labeled, {k: v for k, v in truth.items() if k in labeled})
        _write(dest / "labeling_report.csv", labeling_csv(report))
        _write(dest / "labeling_summary.txt", report.summary() + "\n")
        print(report.summary())
    stats = corpus_stats(records)
    _write(dest / "stats.csv", stats_csv(stats))
    _write(dest / "stats.txt", stats.summary() + "\n")
    rdir = out / "corpus_robustness"
    if (rdir / "manifest.jsonl").exists():
        write_annotated(dest / "robustness.jsonl", annotate_pages(load_corpus(rdir)))
    print(f"annotated {len(records)} pages from {source}")


def cmd_build(cfg, out: Path, args) -> None:
    from .dataset import (build_vocab, entity_types_of, load_annotated, span_record, split,
                          to_conversation, write_jsonl)

    listings = load_annotated(_need(out / "annotated" / "annotated.jsonl"))
    if not listings:
        raise DataError("annotated corpus is empty")
    manifest = split(listings, _get(cfg, "build", "ratio", float), _get(cfg, "run", "seed", int))
    dest = out / "datasets"
    _write(dest / "split.json", manifest.to_json())
    train_ids = set(manifest.train)
    types = entity_types_of(listings)
    for name, part in (("train", [x for x in listings if x.page_id in train_ids]),
                       ("test", [x for x in listings if x.page_id not in train_ids])):
        write_jsonl(dest / f"span_{name}.jsonl", [span_record(x) for x in part])
        write_jsonl(dest / f"conversations_{name}.jsonl",
                    [to_conversation(x, types).to_record() for x in part])
    vocab = build_vocab([x for x in listings if x.page_id in train_ids])
    _write(dest / "vocab.json", json.dumps(vocab, ensure_ascii=False) + "\n")
    print(f"split {len(manifest.train)} train / {len(manifest.test)} test into {dest}")


def _load_inputs(out: Path):
    from .dataset import SplitManifest, load_annotated

    listings = load_annotated(_need(out / "annotated" / "annotated.jsonl"))
    manifest = SplitManifest.from_json(_need(out / "datasets" / "split.json").read_text(encoding="utf-8"))
    return listings, manifest


def _spec(cfg, model: str):
    from .protocols import ModelSpec
    from .seq_ner import SeqTrainConfig
    from .span_ner import SpanTrainConfig

    seed = _get(cfg, "run", "seed", int)
    span = SpanTrainConfig(
        num_steps=_get(cfg, "span", "num_steps", int), batch_size=_get(cfg, "span", "batch_size", int),
        warmup_ratio=_get(cfg, "span", "warmup_ratio", float),
        lr_encoder=_get(cfg, "span", "lr_encoder", float), lr_others=_get(cfg, "span", "lr_others", float),
        max_types=_get(cfg, "span", "max_types", int),
        max_neg_type_ratio=_get(cfg, "span", "max_neg_type_ratio", float),
        neg_sample_ratio=_get(cfg, "span", "neg_sample_ratio", float),
        max_len=_get(cfg, "span", "max_len", int), eval_every=_get(cfg, "span", "eval_every", int),
        shuffle_types=_get(cfg, "span", "shuffle_types", bool),
        random_drop=_get(cfg, "span", "random_drop", bool), dropout=_get(cfg, "span", "dropout", float),
        max_grad_norm=_get(cfg, "span", "max_grad_norm", float), seed=seed)
    seq = SeqTrainConfig(
        epochs=_get(cfg, "seq", "epochs", int), batch_size=_get(cfg, "seq", "batch_size", int),
        lr=_get(cfg, "seq", "lr", float), dropout_embedding=_get(cfg, "seq", "dropout_embedding", float),
        dropout_lstm=_get(cfg, "seq", "dropout_lstm", float), pad_length=_get(cfg, "seq", "pad_length", int),
        max_grad_norm=_get(cfg, "seq", "max_grad_norm", float), seed=seed)
    try:
        span.validate()
        seq.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return ModelSpec(model, span=span, seq=seq, threshold=_get(cfg, "eval", "threshold", float))


def _ckpt_path(out: Path, model: str, protocol: str) -> Path:
    from .protocols import canonical

    stage = {"in_domain": "in_domain", "robustness": "in_domain", "zero_shot_analog": "zero_shot",
             "fine_tune_analog": "fine_tune"}[canonical(protocol)]
    return out / "models" / f"{model}_{stage}.ckpt"


def _new_model(cfg, spec, train, types):
    from .dataset import build_vocab
    from .seq_ner import SeqNerModel
    from .span_ner import SpanNerModel

    seed = _get(cfg, "run", "seed", int)
    if spec.kind == "span":
        return SpanNerModel(build_vocab(train, extra=types), dim=_get(cfg, "span", "dim", int),
                            max_width=_get(cfg, "span", "max_width", int), seed=seed)
    return SeqNerModel(build_vocab(train), types, seed=seed)


def _save(trained, path: Path, protocol: str) -> None:
    from . import seq_ner, span_ner

    extra = {"protocol": protocol, "train_ids": trained.train_ids,
             "train_markets": trained.train_markets, "entity_types": trained.entity_types}
    path.parent.mkdir(parents=True, exist_ok=True)
    (span_ner if trained.kind == "span" else seq_ner).save_model(trained.model, path, extra)


def _load(path: Path):
    from . import seq_ner, span_ner
    from .neural.checkpoint import load_checkpoint
    from .protocols import TrainedModel

    _need(path)
    _, meta = load_checkpoint(path)
    module = span_ner if meta.get("kind") == "span" else seq_ner
    model, meta = module.load_model(path)
    return TrainedModel(meta["kind"], model, meta.get("train_ids", []), meta.get("train_markets", []),
                        meta.get("entity_types", []))


def cmd_train(cfg, out: Path, args) -> None:
    from .dataset import entity_types_of
    from .protocols import TrainedModel, canonical, train_model

    model_kind = args.model or "span"
    protocol = canonical(args.protocol or "in_domain")
    if protocol == "robustness":
        raise UsageError("robustness evaluates the in_domain model; train --protocol in_domain")
    spec = _spec(cfg, model_kind)
    listings, manifest = _load_inputs(out)
    train_ids = set(manifest.train)
    train = [x for x in listings if x.page_id in train_ids]
    held_out = cfg.get("eval", "held_out")
    if protocol != "in_domain":
        if held_out not in {x.market_id for x in listings}:
            raise DataError(f"held-out market {held_out!r} is not in the corpus")
        train = [x for x in train if x.market_id != held_out]
    path = _ckpt_path(out, model_kind, protocol)
    if protocol == "fine_tune_analog":
        base = _load(_ckpt_path(out, model_kind, "zero_shot"))
        tuned = [x for x in listings if x.page_id in train_ids and x.market_id == held_out]
        trained = train_model(spec, tuned, base=base)
    else:
        types = entity_types_of(train)
        model = _new_model(cfg, spec, train, types)
        base = TrainedModel(model_kind, model, [], [], types)
        steps = spec.span.num_steps if model_kind == "span" else spec.seq.epochs
        trained = train_model(spec, train, base=base) if steps > 0 else \
            TrainedModel(model_kind, model, sorted(x.page_id for x in train),
                         sorted({x.market_id for x in train}), types)
    _save(trained, path, protocol)
    if trained.log is not None:
        _write(path.with_suffix(".log.json"), trained.log.to_json() + "\n")
    print(f"saved {path}")


def cmd_eval(cfg, out: Path, args) -> None:
    from .dataset import load_annotated
    from .evaluation import import_predictions, render_csv, render_markdown
    from .protocols import RobustnessConfig, canonical, evaluate, evaluation_pages

    model_kind = args.model or "span"
    protocol = canonical(args.protocol or "in_domain")
    listings, manifest = _load_inputs(out)
    rc = RobustnessConfig(novel_types=tuple(t.strip() for t in cfg.get("eval", "novel_types").split(",")
                                            if t.strip()))
    rob = None
    if protocol == "robustness":
        rob = load_annotated(_need(out / "annotated" / "robustness.jsonl"))
        if rob:
            rc.market_id = rob[0].market_id
    pages, split, scope = evaluation_pages(protocol, listings, manifest, cfg.get("eval", "held_out"),
                                           rob, rc)
    trained = _load(_ckpt_path(out, model_kind, protocol))
    predictions = None
    model_id = f"{model_kind}-ner"
    if args.predictions:
        lengths = {x.page_id: len(x.tokens) for x in pages}
        predictions = {k: [(s, e, t) for s, e, t in v]
                       for k, v in import_predictions(_need(Path(args.predictions)), lengths).items()}
        model_id = f"external:{Path(args.predictions).name}"
    reports = evaluate(protocol, trained, pages, split, scope, model_id,
                       _get(cfg, "eval", "threshold", float), rc, predictions)
    stem = out / "reports" / f"{model_kind}_{protocol}"
    _write(stem.with_suffix(".json"), json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    _write(stem.with_suffix(".csv"), render_csv(reports))
    _write(stem.with_suffix(".md"), render_markdown(reports))
    for r in reports:
        m = r.micro
        print(f"{r.model_id} {r.protocol} {r.scope}: P={m.precision:.3f} R={m.recall:.3f} F1={m.f1:.3f}")


def cmd_report(cfg, out: Path, args) -> None:
    from .evaluation import CSV_FIELDS, reference_table

    rdir = out / "reports"
    files = sorted(p for p in rdir.glob("*.json") if p.name != "summary.json") if rdir.exists() else []
    if not files:
        raise DataError(f"missing input: no evaluation reports in {rdir}")
    import csv
    import io

    rows = []
    for path in files:
        for rep in json.loads(path.read_text(encoding="utf-8")):
            for etype, m in [("micro", rep["micro"])] + sorted(rep["per_type"].items()):
                rows.append({"model_id": rep["model_id"], "protocol": rep["protocol"],
                             "split": rep["split"], "scope": rep["scope"], "entity_type": etype,
                             "tp": m["tp"], "fp": m["fp"], "fn": m["fn"],
                             "precision": f"{m['precision']:.3f}", "recall": f"{m['recall']:.3f}",
                             "f1": f"{m['f1']:.3f}", "flags": ";".join(m["flags"])})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(rdir / "summary.csv", buf.getvalue())
    lines = ["| model | protocol | scope | P | R | F1 | TP | FP | FN |", "|---|---|---|---|---|---|---|---|---|"]
    for r in rows:
        if r["entity_type"] == "micro":
            lines.append(f"| {r['model_id']} | {r['protocol']} | {r['scope']} | {r['precision']} | "
                         f"{r['recall']} | {r['f1']} | {r['tp']} | {r['fp']} | {r['fn']} |")
    lines += ["", "Published reference numbers (context only, not targets):", "",
              "| system | setting | P | R | F1 |", "|---|---|---|---|---|"]
    for ref in reference_table()["systems"]:
        cells = " | ".join("-" if ref.get(k) is None else str(ref[k]) for k in ("precision", "recall", "f1"))
        lines.append(f"| {ref['system']} | {ref['setting']} | {cells} |")
    _write(rdir / "summary.md", "\n".join(lines) + "\n")
    print(f"wrote {rdir / 'summary.csv'} and {rdir / 'summary.md'}")


HANDLERS = {"gen": cmd_gen, "serve": cmd_serve, "crawl": cmd_crawl, "extract": cmd_extract,
            "build": cmd_build, "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dnm-ie", description="Listing-page extraction pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI file; sections mirror the subcommands")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default $EXTRACT_HOME/extract-out)")
    p.add_argument("--market", help="gen: comma-separated markets; train/eval: held-out market")
    p.add_argument("--model", choices=("span", "seq"))
    p.add_argument("--protocol", choices=("in_domain", "zero_shot", "fine_tune", "robustness"))
    p.add_argument("--workers", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--epochs", type=int, help="seq-ner epochs")
    p.add_argument("--steps", type=int, help="span-ner training steps")
    p.add_argument("--predictions", help="eval: score an external prediction dump instead")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    from .crawler import CrawlError
    from .dataset import AlignmentError, DatasetConfigError
    from .evaluation import PredictionImportError, ProtocolError
    from .extract.labeling import LabelValidationError
    from .market_sim.generator import CorpusConfigError
    from .market_sim.service import MarketStartupError

    data_errors = (DataError, CrawlError, AlignmentError, DatasetConfigError, PredictionImportError,
                   ProtocolError, LabelValidationError, CorpusConfigError, MarketStartupError)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config)
        apply_flags(cfg, args)
        out = Path(cfg.get("run", "out"))
        out.mkdir(parents=True, exist_ok=True)
        write_snapshot(cfg, out, args.command)
        HANDLERS[args.command](cfg, out, args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except data_errors as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
