#!/usr/bin/env python3
"""Run the evaluation protocols for both models over several seeds.

Writes one JSON line per (model, protocol, seed, scope) and prints a summary
table of micro scores.  The seq-ner runs use the first ``--seq-pages`` pages
of each market to keep CPU time manageable.
"""
from __future__ import annotations

import argparse
import json
import logging
import time

from dnm_ie import protocols as P
from dnm_ie.experiments import (annotated_corpus, head_per_market, median, robustness_corpus,
                                seq_spec, span_spec, train_test)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seq-pages", type=int, default=25)
    ap.add_argument("--held-out", default="cocorico")
    ap.add_argument("--models", default="span,seq")
    ap.add_argument("--out", default="protocol_results.jsonl")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    full = annotated_corpus(100, seed=42, noise_rate=0.0)
    rob = robustness_corpus(50, seed=42)
    rows = []
    for kind in args.models.split(","):
        corpus = full if kind == "span" else head_per_market(full, args.seq_pages)
        manifest, _, _ = train_test(corpus)
        for seed in range(args.seeds):
            spec = span_spec(seed, args.steps) if kind == "span" else seq_spec(seed, args.epochs)
            t0 = time.perf_counter()
            in_domain = P.run_protocol("in_domain", spec, corpus, manifest)
            robust = P.run_protocol("robustness", spec, corpus, manifest, robustness_corpus=rob,
                                    trained=in_domain.trained)
            zero = P.run_protocol("zero_shot", spec, corpus, manifest, args.held_out)
            fine = P.run_protocol("fine_tune", spec, corpus, manifest, args.held_out, trained=zero.trained)
            for res in (in_domain, robust, zero, fine):
                for rep in res.reports:
                    rows.append({"seed": seed, **rep.to_dict()})
            logging.info("%s seed %d done in %.0fs", kind, seed, time.perf_counter() - t0)

    with open(args.out, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["model_id"], r["protocol"], r["scope"]), []).append(r)
    print(f"{'model':<10} {'protocol':<18} {'scope':<24} {'P':>6} {'R':>6} {'F1':>6}")
    for (model, protocol, scope), rs in sorted(groups.items()):
        m = [x["micro"] for x in rs]
        print(f"{model:<10} {protocol:<18} {scope:<24} {median([x['precision'] for x in m]):6.3f} "
              f"{median([x['recall'] for x in m]):6.3f} {median([x['f1'] for x in m]):6.3f}")


if __name__ == "__main__":
    main()
