"""RegEx labeling of normalized pages and its accuracy check against ground truth."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .patterns import PatternSet
from .text import NormalizedDoc, normalize


class LabelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledEntity:
    page_id: str
    entity_type: str
    char_start: int
    char_end: int
    surface: str
    source: str = "regex"


def apply_patterns(doc: NormalizedDoc, patterns: PatternSet) -> list[LabeledEntity]:
    """First match per entity type; offsets index ``doc.text``."""
    specs = patterns.for_market(doc.market_id)
    out = []
    for etype, spec in specs.items():
        m = spec.regex.search(doc.text)
        if m is None:
            continue
        start, end = m.span(spec.group)
        if end <= start:
            continue
        out.append(LabeledEntity(doc.page_id, etype, start, end, doc.text[start:end]))
    return out


@dataclass
class AccuracyCell:
    attempted: int = 0
    matched: int = 0
    exact_correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.exact_correct / self.attempted if self.attempted else 0.0

    def add(self, other: "AccuracyCell") -> None:
        self.attempted += other.attempted
        self.matched += other.matched
        self.exact_correct += other.exact_correct


@dataclass
class LabelingReport:
    cells: dict[tuple[str, str], AccuracyCell] = field(default_factory=dict)  # (market, type)

    def _rollup(self, key_index: int) -> dict[str, AccuracyCell]:
        out: dict[str, AccuracyCell] = defaultdict(AccuracyCell)
        for key, cell in self.cells.items():
            out[key[key_index]].add(cell)
        return dict(sorted(out.items()))

    @property
    def per_market(self) -> dict[str, AccuracyCell]:
        return self._rollup(0)

    @property
    def per_type(self) -> dict[str, AccuracyCell]:
        return self._rollup(1)

    @property
    def overall(self) -> AccuracyCell:
        total = AccuracyCell()
        for cell in self.cells.values():
            total.add(cell)
        return total

    @property
    def accuracy(self) -> float:
        return self.overall.accuracy

    def rows(self) -> list[dict]:
        rows = []
        for (market, etype), c in sorted(self.cells.items()):
            rows.append({"market_id": market, "entity_type": etype, "attempted": c.attempted,
                         "matched": c.matched, "exact_correct": c.exact_correct,
                         "accuracy": round(c.accuracy, 6)})
        o = self.overall
        rows.append({"market_id": "ALL", "entity_type": "ALL", "attempted": o.attempted,
                     "matched": o.matched, "exact_correct": o.exact_correct,
                     "accuracy": round(o.accuracy, 6)})
        return rows

    def summary(self) -> str:
        lines = [f"overall labeling accuracy {self.accuracy:.3f} "
                 f"({self.overall.exact_correct}/{self.overall.attempted})"]
        for market, c in self.per_market.items():
            lines.append(f"  {market:<18} {c.accuracy:.3f} ({c.exact_correct}/{c.attempted})")
        for etype, c in self.per_type.items():
            lines.append(f"  {etype:<18} {c.accuracy:.3f} ({c.exact_correct}/{c.attempted})")
        return "\n".join(lines)


def verify_labels(labeled: dict[str, list[LabeledEntity]], ground_truth: dict[str, tuple[str, list]]) -> LabelingReport:
    """Compare labels with ground truth.

    ``labeled`` maps page_id to regex labels; ``ground_truth`` maps page_id to
    ``(market_id, entities)`` where each entity has ``entity_type`` and
    ``surface``.  A label is exactly correct when its surface equals the
    normalized ground-truth surface of the same type.
    """
    if set(labeled) != set(ground_truth):
        missing = sorted(set(ground_truth) ^ set(labeled))
        raise LabelValidationError(f"page ids differ between labels and ground truth: {missing[:5]}")
    report = LabelingReport()
    for page_id, (market_id, gold) in ground_truth.items():
        found = {}
        for lab in labeled[page_id]:
            found.setdefault(lab.entity_type, lab.surface)
        for ent in gold:
            cell = report.cells.setdefault((market_id, ent.entity_type), AccuracyCell())
            cell.attempted += 1
            if ent.entity_type in found:
                cell.matched += 1
                if found[ent.entity_type] == normalize(ent.surface):
                    cell.exact_correct += 1
    return report
