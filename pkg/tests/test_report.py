import csv
import json
from dataclasses import replace

import pytest

from emotion_harness.report import ReportError, compare_artifacts, emit_report, render_markdown
from emotion_harness.runner import load_artifact, load_config, run_experiment, score_predictions
from emotion_harness.schema import load_dataset

from .helpers import write_config
from .oracles import brute_macro, brute_micro


@pytest.fixture
def artifact(tmp_path):
    return run_experiment(load_config(write_config(tmp_path)))


def test_markdown_has_one_confusion_table_per_label(artifact):
    paths = emit_report(artifact, "markdown")
    text = (artifact.run_dir / "report" / "report.md").read_text()
    assert text.count("### Confusion matrix:") == 5
    assert "| True 1 |" in text and "%)" in text
    figures = [p for p in paths if p.suffix == ".png"]
    assert len([p for p in figures if p.name.startswith("confusion_")]) == 5
    assert all(p.stat().st_size > 0 for p in figures)


def test_csv_report(artifact, tmp_path):
    out = tmp_path / "rep"
    emit_report(artifact, "csv", out, figures=False)
    assert sorted(p.name for p in (out / "confusion").iterdir()) == sorted(f"{l}.csv" for l in artifact.metrics.labels)
    with (out / "per_label.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["label"] for r in rows] == list(artifact.metrics.labels)
    assert set(rows[0]) == {"label", "tp", "fp", "fn", "tn", "tp_rate", "fn_rate", "tn_rate", "fp_rate",
                            "precision", "recall", "f1"}
    with (out / "summary.csv").open() as fh:
        [summary] = list(csv.DictReader(fh))
    assert summary["strategy"] == "few_shot" and summary["examples"] == "6"


def test_summary_matches_independent_recompute(artifact):
    # Recompute from the records file alone, with the test oracle.
    labels = list(artifact.metrics.labels)
    gold, pred = [], []
    for line in artifact.records_path.read_text().splitlines():
        rec = json.loads(line)
        gold.append([int(l in rec["gold"]) for l in labels])
        pred.append([int(l in rec["predicted"]) for l in labels])
    with (artifact.run_dir / "summary.csv").open() as fh:
        [summary] = list(csv.DictReader(fh))
    assert float(summary["f1_macro"]) == float(brute_macro(gold, pred))
    assert float(summary["f1_micro"]) == float(brute_micro(gold, pred))
    assert int(summary["n_examples"]) == len(gold)


def test_percentages_are_row_normalised(tmp_path):
    artifact = run_experiment(load_config(write_config(tmp_path)))
    text = render_markdown(artifact)
    c = artifact.metrics.per_label[0].confusion
    assert f"{c.tp} (100%)" in text
    assert f"{c.tn} (100%)" in text


def test_incomplete_artifact_is_rejected(artifact):
    artifact.records_path.write_text(artifact.records_path.read_text().splitlines()[0] + "\n")
    with pytest.raises(ReportError):
        emit_report(artifact, "markdown")
    with pytest.raises(ReportError):
        emit_report(artifact, "html")


def test_compare_self_has_zero_deltas(artifact, tmp_path):
    comparison, text = compare_artifacts(artifact, artifact, out_dir=tmp_path / "cmp")
    assert all(d == 0 for d in comparison.deltas)
    assert text.count("+0.0000") == 6
    assert (tmp_path / "cmp" / "comparison.png").stat().st_size > 0


def test_compare_prompting_run_with_imported_predictions(artifact, tmp_path):
    # Imported run: same predictions except every "joy" prediction is flipped off.
    preds = artifact.predictions_path.read_text().splitlines()
    header = preds[0].split(",")
    joy = header.index("joy")
    rows = [preds[0]] + [",".join("0" if i == joy else v for i, v in enumerate(r.split(","))) for r in preds[1:]]
    imported_dir = tmp_path / "runs" / "imported"
    imported_dir.mkdir()
    for name in ("config.yaml", "records.jsonl", "timing.json"):
        (imported_dir / name).write_text((artifact.run_dir / name).read_text())
    (imported_dir / "predictions.csv").write_text("\n".join(rows) + "\n")
    report = score_predictions(load_dataset(tmp_path / "dev.csv"), imported_dir / "predictions.csv")
    (imported_dir / "metrics.json").write_text(json.dumps(report.to_dict()))
    other = replace(load_artifact(imported_dir), config={"run_id": "imported"})

    comparison, text = compare_artifacts(artifact, other)
    assert len(comparison.rows()) == 5
    nonzero = [label for label, *_, d in comparison.rows() if d != 0]
    assert nonzero == ["joy"]
    assert comparison.deltas[list(comparison.labels).index("joy")] == 1.0
    assert text.count("\n| ") == 6 + 1  # header + 5 emotions + macro
