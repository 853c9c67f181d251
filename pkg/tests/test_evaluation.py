from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnm_ie.evaluation import (
    Counts, EvalReport, PredictionImportError, exact_match, import_predictions, prf, reference_table,
    render_csv, render_markdown, write_predictions,
)

triple = st.tuples(st.integers(0, 3), st.integers(0, 3), st.sampled_from("ab"))


def brute_force(pred, gold):
    """Maximum one-to-one matching by trying every assignment of predictions to gold."""
    small, large = sorted((pred, gold), key=len)
    best = 0
    for perm in itertools.permutations(range(len(large)), len(small)):
        best = max(best, sum(1 for s, k in zip(small, perm) if s == large[k]))
    return best


@given(st.lists(triple, max_size=5), st.lists(triple, max_size=5))
@settings(max_examples=200)
def test_exact_match_is_maximum_matching(pred, gold):
    c = exact_match({"p": pred}, {"p": gold}).micro
    tp = brute_force(pred, gold)
    assert (c.tp, c.fp, c.fn) == (tp, len(pred) - tp, len(gold) - tp)


def test_prf_reference_values():
    m = prf(Counts(3, 1, 2))
    assert m.precision == 0.75 and m.recall == 0.6
    assert abs(m.f1 - 2 / 3) < 1e-12


def test_prf_undefined_flags():
    m = prf(Counts(0, 0, 0))
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert set(m.flags) == {"precision_undefined", "recall_undefined"}


def test_pages_missing_on_one_side():
    c = exact_match({"a": [(0, 0, "x")]}, {"b": [(1, 1, "x")]}).micro
    assert (c.tp, c.fp, c.fn) == (0, 1, 1)


def test_requested_types_get_rows():
    counts = exact_match({}, {}, ["x", "y"])
    assert set(counts.per_type) == {"x", "y"}


def _report():
    counts = exact_match({"p": [(0, 1, "a"), (2, 2, "b")]}, {"p": [(0, 1, "a"), (3, 3, "b")]})
    return EvalReport("m", "in_domain", "test", "all_markets", counts)


def test_report_rendering():
    rep = _report()
    d = rep.to_dict()
    assert d["micro"]["tp"] == 1 and d["per_type"]["b"]["fp"] == 1
    csv_text = render_csv([rep])
    assert csv_text.splitlines()[0].startswith("model_id,protocol")
    assert len(csv_text.splitlines()) == 4
    md = render_markdown([rep], reference_table())
    assert "| m | in_domain | all_markets | micro |" in md and "reference" in md


def test_reference_table_shape():
    ref = reference_table()
    assert all({"system", "setting", "f1"} <= set(r) for r in ref["systems"])


def test_prediction_round_trip(tmp_path):
    path = tmp_path / "p.jsonl"
    write_predictions(path, [{"page_id": "a", "spans": [{"start": 1, "end": 2, "type": "x", "score": .9}]}])
    assert import_predictions(path, {"a": 5}) == {"a": [(1, 2, "x")]}


@pytest.mark.parametrize("line, fragment", [
    ("{not json", "invalid JSON"),
    (json.dumps({"page_id": "a"}), "expected"),
    (json.dumps({"page_id": "zz", "spans": []}), "unknown page_id"),
    (json.dumps({"page_id": "a", "spans": [{"start": 1}]}), "start, end, type"),
    (json.dumps({"page_id": "a", "spans": [{"start": 3, "end": 1, "type": "x"}]}), "bounds"),
    (json.dumps({"page_id": "a", "spans": [{"start": 1, "end": 9, "type": "x"}]}), "document length"),
])
def test_prediction_import_errors(tmp_path, line, fragment):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n" + line + "\n")
    with pytest.raises(PredictionImportError) as exc:
        import_predictions(path, {"a": 5})
    assert fragment in str(exc.value) and "2" in str(exc.value)
