from __future__ import annotations

import json
import subprocess
import sys

import pytest

from dnm_ie import cli, seq_ner
from dnm_ie.dataset import build_vocab, entity_types_of, load_annotated, SplitManifest

TINY = """
[gen]
pages_per_market = 3
robustness_pages = 3
[crawl]
delay_min_ms = 0
delay_max_ms = 0
failure_rate = 0.1
[span]
num_steps = 3
eval_every = 1
dim = 8
[seq]
epochs = 1
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ini = root / "tiny.ini"
    ini.write_text(TINY)
    out = root / "out"
    for cmd in ("gen", "crawl", "extract", "build"):
        assert cli.main([cmd, "--config", str(ini), "--out", str(out)]) == 0, cmd
    return ini, out


def run(ini, out, *args):
    return cli.main([*args, "--config", str(ini), "--out", str(out)])


def test_pipeline_outputs(workspace):
    ini, out = workspace
    for rel in ("corpus/manifest.jsonl", "corpus_robustness/manifest.jsonl", "crawl/crawl_report.json",
                "annotated/annotated.jsonl", "annotated/labeling_report.csv", "annotated/stats.csv",
                "annotated/robustness.jsonl", "datasets/split.json", "datasets/span_train.jsonl",
                "datasets/conversations_test.jsonl", "config/gen.ini", "config/build.ini"):
        assert (out / rel).exists(), rel
    assert len(load_annotated(out / "annotated/annotated.jsonl")) == 18


def test_train_eval_report(workspace, capsys):
    ini, out = workspace
    assert run(ini, out, "train", "--model", "span") == 0
    assert run(ini, out, "eval", "--model", "span") == 0
    assert run(ini, out, "eval", "--model", "span", "--protocol", "robustness") == 0
    reports = json.loads((out / "reports/span_robustness.json").read_text())
    assert [r["scope"] for r in reports] == ["palmetto", "palmetto:novel_types"]
    assert run(ini, out, "report") == 0
    assert "span-ner" in (out / "reports/summary.md").read_text()
    assert "F1=" in capsys.readouterr().out


def test_reports_are_deterministic(workspace):
    ini, out = workspace
    assert run(ini, out, "eval", "--model", "span") == 0
    first = (out / "reports/span_in_domain.json").read_bytes()
    assert run(ini, out, "train", "--model", "span") == 0
    assert run(ini, out, "eval", "--model", "span") == 0
    assert (out / "reports/span_in_domain.json").read_bytes() == first


def test_zero_epochs_write_the_initialization(workspace):
    ini, out = workspace
    assert run(ini, out, "train", "--model", "seq", "--epochs", "0") == 0
    listings = load_annotated(out / "annotated/annotated.jsonl")
    man = SplitManifest.from_json((out / "datasets/split.json").read_text())
    train = [x for x in listings if x.page_id in set(man.train)]
    types = entity_types_of(train)
    init = seq_ner.SeqNerModel(build_vocab(train), types, seed=42)
    ref = out / "init.ckpt"
    seq_ner.save_model(init, ref, {"protocol": "in_domain", "train_ids": sorted(x.page_id for x in train),
                                   "train_markets": sorted({x.market_id for x in train}),
                                   "entity_types": types})
    assert (out / "models/seq_in_domain.ckpt").read_bytes() == ref.read_bytes()


def test_missing_checkpoint_exits_2(workspace, capsys):
    ini, out = workspace
    assert run(ini, out, "eval", "--model", "seq", "--protocol", "fine_tune") == 2
    assert "seq_fine_tune.ckpt" in capsys.readouterr().err


def test_unknown_config_key_is_a_usage_error(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[span]\nlearning_rate = 1\n")
    assert cli.main(["gen", "--config", str(ini), "--out", str(tmp_path)]) == 1
    assert "learning_rate" in capsys.readouterr().err
    ini.write_text("[nonsense]\na = 1\n")
    assert cli.main(["gen", "--config", str(ini), "--out", str(tmp_path)]) == 1


def test_bad_values_and_flags(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[gen]\npages_per_market = many\n")
    assert cli.main(["gen", "--config", str(ini), "--out", str(tmp_path)]) == 1
    assert cli.main(["train", "--model", "crf"]) == 1
    assert cli.main(["fly"]) == 1


def test_missing_inputs_exit_2(tmp_path):
    assert cli.main(["build", "--out", str(tmp_path)]) == 2
    assert cli.main(["report", "--out", str(tmp_path)]) == 2
    assert cli.main(["gen", "--config", str(tmp_path / "none.ini")]) == 2


def test_unknown_market_is_a_data_error(tmp_path):
    assert cli.main(["gen", "--market", "atlantis", "--out", str(tmp_path)]) == 2


def test_extract_home_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("EXTRACT_HOME", str(tmp_path))
    ini = tmp_path / "g.ini"
    ini.write_text("[gen]\npages_per_market = 1\nrobustness_pages = 0\n")
    assert cli.main(["gen", "--config", str(ini)]) == 0
    assert (tmp_path / "extract-out/corpus/manifest.jsonl").exists()
    snap = (tmp_path / "extract-out/config/gen.ini").read_text()
    assert "pages_per_market = 1" in snap


def test_snapshot_replays(tmp_path):
    ini = tmp_path / "g.ini"
    ini.write_text("[gen]\npages_per_market = 2\nrobustness_pages = 0\n")
    assert cli.main(["gen", "--config", str(ini), "--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    snap = tmp_path / "a/config/gen.ini"
    assert cli.main(["gen", "--config", str(snap), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/corpus/ground_truth.jsonl").read_bytes() == \
        (tmp_path / "b/corpus/ground_truth.jsonl").read_bytes()


def test_external_predictions(workspace, tmp_path):
    ini, out = workspace
    listings = {x.page_id: x for x in load_annotated(out / "annotated/annotated.jsonl")}
    man = SplitManifest.from_json((out / "datasets/split.json").read_text())
    dump = tmp_path / "preds.jsonl"
    with open(dump, "w") as fh:
        for pid in man.test:
            spans = [{"start": s.start, "end": s.end, "type": s.entity_type} for s in listings[pid].spans]
            fh.write(json.dumps({"page_id": pid, "spans": spans}) + "\n")
    assert run(ini, out, "eval", "--model", "span", "--predictions", str(dump)) == 0
    rep = json.loads((out / "reports/span_in_domain.json").read_text())[0]
    assert rep["micro"]["f1"] == 1.0 and rep["model_id"] == "external:preds.jsonl"
    dump.write_text('{"page_id": "nope", "spans": []}\n')
    assert run(ini, out, "eval", "--model", "span", "--predictions", str(dump)) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dnm_ie", "eval", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "missing input" in proc.stderr
