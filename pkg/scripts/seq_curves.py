#!/usr/bin/env python3
"""Per-epoch loss and per-type F1 of the seq-ner model, median over seeds."""
from __future__ import annotations

import argparse
import json

from dnm_ie import seq_ner
from dnm_ie.experiments import annotated_corpus, fresh_seq_model, head_per_market, median, train_test


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--pages", type=int, default=25, help="pages per market")
    ap.add_argument("--json", help="also write the raw curves here")
    args = ap.parse_args()

    listings = head_per_market(annotated_corpus(100, seed=42, noise_rate=0.0), args.pages)
    _, train, test = train_test(listings)
    runs = []
    for seed in range(args.seeds):
        model = fresh_seq_model(train, seed)
        runs.append(seq_ner.train(train, seq_ner.SeqTrainConfig(epochs=args.epochs, seed=seed), model, test))
    types = sorted(runs[0].epochs[0].per_type)
    print("epoch  loss    " + " ".join(f"{t[:14]:>14}" for t in types))
    for e in range(args.epochs):
        loss = median([r.epochs[e].loss for r in runs])
        f1 = [median([r.epochs[e].per_type[t]["f1"] for r in runs]) for t in types]
        print(f"{e + 1:>5}  {loss:6.3f}  " + " ".join(f"{v:14.3f}" for v in f1))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump([json.loads(r.to_json()) for r in runs], fh, indent=1)


if __name__ == "__main__":
    main()
