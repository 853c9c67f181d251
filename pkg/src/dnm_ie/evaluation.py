"""Exact-match scoring, report rendering and prediction import."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

Triple = tuple[int, int, str]  # (start, end inclusive, type)


class PredictionImportError(ValueError):
    """Malformed prediction dump; ``line`` is 1-based."""

    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class ProtocolError(RuntimeError):
    pass


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other: "Counts") -> "Counts":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


@dataclass
class MatchCounts:
    per_type: dict[str, Counts] = field(default_factory=dict)

    def cell(self, etype: str) -> Counts:
        return self.per_type.setdefault(etype, Counts())

    @property
    def micro(self) -> Counts:
        total = Counts()
        for c in self.per_type.values():
            total += c
        return total


def match_page(pred: list[Triple], gold: list[Triple], counts: MatchCounts) -> None:
    """Greedy one-to-one matching on identical triples; duplicates beyond the gold multiplicity are FPs."""
    remaining = Counter(gold)
    for t in pred:
        if remaining[t] > 0:
            remaining[t] -= 1
            counts.cell(t[2]).tp += 1
        else:
            counts.cell(t[2]).fp += 1
    for t, n in remaining.items():
        if n:
            counts.cell(t[2]).fn += n


def exact_match(predictions: dict[str, list[Triple]], gold: dict[str, list[Triple]],
                types=None) -> MatchCounts:
    counts = MatchCounts()
    for t in types or ():
        counts.cell(t)
    for pid in sorted(set(predictions) | set(gold)):
        match_page(list(predictions.get(pid, [])), list(gold.get(pid, [])), counts)
    return counts


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    flags: tuple[str, ...] = ()


def prf(c: Counts) -> Metrics:
    flags = []
    if c.tp + c.fp == 0:
        flags.append("precision_undefined")
        p = 0.0
    else:
        p = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        flags.append("recall_undefined")
        r = 0.0
    else:
        r = c.tp / (c.tp + c.fn)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return Metrics(p, r, f, c.tp, c.fp, c.fn, tuple(flags))


@dataclass
class EvalReport:
    model_id: str
    protocol: str
    split: str
    scope: str
    counts: MatchCounts

    @property
    def micro(self) -> Metrics:
        return prf(self.counts.micro)

    def per_type(self) -> dict[str, Metrics]:
        return {t: prf(c) for t, c in sorted(self.counts.per_type.items())}

    def to_dict(self) -> dict:
        def m(x: Metrics):
            return {"precision": round(x.precision, 6), "recall": round(x.recall, 6),
                    "f1": round(x.f1, 6), "tp": x.tp, "fp": x.fp, "fn": x.fn, "flags": list(x.flags)}

        return {"model_id": self.model_id, "protocol": self.protocol, "split": self.split,
                "scope": self.scope, "micro": m(self.micro),
                "per_type": {t: m(x) for t, x in self.per_type().items()}}


# ---------------------------------------------------------------- reference numbers


def reference_table() -> dict:
    text = resources.files("dnm_ie").joinpath("data/reference.json").read_text(encoding="utf-8")
    return json.loads(text)


# ---------------------------------------------------------------- rendering

CSV_FIELDS = ["model_id", "protocol", "split", "scope", "entity_type", "tp", "fp", "fn",
              "precision", "recall", "f1", "flags"]


def report_rows(reports: list[EvalReport]) -> list[dict]:
    rows = []
    for rep in reports:
        items = [("micro", rep.micro)] + list(rep.per_type().items())
        for etype, m in items:
            rows.append({"model_id": rep.model_id, "protocol": rep.protocol, "split": rep.split,
                         "scope": rep.scope, "entity_type": etype, "tp": m.tp, "fp": m.fp,
                         "fn": m.fn, "precision": f"{m.precision:.3f}", "recall": f"{m.recall:.3f}",
                         "f1": f"{m.f1:.3f}", "flags": ";".join(m.flags)})
    return rows


def render_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(report_rows(reports))
    return buf.getvalue()


def _cell(value: float, flagged: bool) -> str:
    return f"{value:.3f}{'*' if flagged else ''}"


def render_markdown(reports: list[EvalReport], reference: dict | None = None) -> str:
    lines = ["| model | protocol | scope | type | P | R | F1 | TP | FP | FN |",
             "|---|---|---|---|---|---|---|---|---|---|"]
    for row_rep in reports:
        items = [("micro", row_rep.micro)] + list(row_rep.per_type().items())
        for etype, m in items:
            lines.append(
                f"| {row_rep.model_id} | {row_rep.protocol} | {row_rep.scope} | {etype} | "
                f"{_cell(m.precision, 'precision_undefined' in m.flags)} | "
                f"{_cell(m.recall, 'recall_undefined' in m.flags)} | {m.f1:.3f} | "
                f"{m.tp} | {m.fp} | {m.fn} |")
    lines.append("")
    lines.append("`*` marks a metric whose denominator was zero (reported as 0).")
    if reference:
        lines.append("")
        lines.append("Published reference numbers (context only, not targets):")
        lines.append("")
        lines.append("| system | setting | P | R | F1 |")
        lines.append("|---|---|---|---|---|")
        for r in reference["systems"]:
            cells = [r.get(k) for k in ("precision", "recall", "f1")]
            txt = " | ".join("-" if v is None else str(v) for v in cells)
            lines.append(f"| {r['system']} | {r['setting']} | {txt} |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- prediction import


def import_predictions(path, doc_lengths: dict[str, int] | None = None) -> dict[str, list[Triple]]:
    """Read a prediction dump ``{page_id, spans:[{start,end,type,score}]}`` per line."""
    out: dict[str, list[Triple]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PredictionImportError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("page_id"), str) \
                    or not isinstance(rec.get("spans"), list):
                raise PredictionImportError(lineno, "expected {page_id: str, spans: list}")
            pid = rec["page_id"]
            if doc_lengths is not None and pid not in doc_lengths:
                raise PredictionImportError(lineno, f"unknown page_id {pid!r}")
            spans = out.setdefault(pid, [])
            for sp in rec["spans"]:
                try:
                    s, e, t = sp["start"], sp["end"], sp["type"]
                except (KeyError, TypeError):
                    raise PredictionImportError(lineno, "span needs start, end, type") from None
                if not (isinstance(s, int) and isinstance(e, int) and isinstance(t, str)):
                    raise PredictionImportError(lineno, "start/end must be int, type str")
                if s < 0 or e < s:
                    raise PredictionImportError(lineno, f"bad span bounds ({s}, {e})")
                if doc_lengths is not None and e >= doc_lengths[pid]:
                    raise PredictionImportError(lineno, f"span end {e} >= document length {doc_lengths[pid]}")
                spans.append((s, e, t))
    return out


def write_predictions(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
