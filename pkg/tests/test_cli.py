import json

import pytest

from emotion_harness.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from emotion_harness.schema import save_dataset

from .conftest import lexicon_split
from .helpers import write_config


def test_ingest_with_stats(tmp_path, capsys):
    path = tmp_path / "train.csv"
    save_dataset(lexicon_split(12, name="train"), path)
    plot = tmp_path / "hist.png"
    assert main(["ingest", str(path), "--stats", "--bucket-width", "4", "--plot", str(plot)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "bucket_start,bucket_end,count"
    assert sum(int(line.split(",")[2]) for line in out[1:]) == 12
    assert plot.stat().st_size > 0


def test_ingest_expectation_mismatch_exits_1(tmp_path, capsys):
    path = tmp_path / "test.csv"
    save_dataset(lexicon_split(7, name="test"), path)
    assert main(["ingest", str(path), "--expect", "6"]) == EXIT_VALIDATION
    assert "expected 6 examples, found 7" in capsys.readouterr().err
    assert main(["ingest", str(path), "--expect", "7"]) == EXIT_OK


def test_ingest_bad_label_exits_1(tmp_path, capsys):
    path = tmp_path / "train.csv"
    path.write_text("id,text,anger\n1,x,2\n")
    assert main(["ingest", str(path)]) == EXIT_VALIDATION
    assert "row 2" in capsys.readouterr().err


def test_run_report_compare_score(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["run", str(config)]) == EXIT_OK
    run_dir = capsys.readouterr().out.strip()
    assert main(["run", str(config), "--run-id", "second"]) == EXIT_OK
    second = capsys.readouterr().out.strip()

    assert main(["report", run_dir, "--format", "csv"]) == EXIT_OK
    assert any(line.endswith("summary.csv") for line in capsys.readouterr().out.splitlines())
    assert main(["report", run_dir]) == EXIT_OK
    capsys.readouterr()

    assert main(["compare", run_dir, second, "--format", "csv"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1 + 5 + 1
    assert all(float(line.split(",")[3]) == 0.0 for line in lines[1:])

    assert main(["score", "--gold", str(tmp_path / "dev.csv"), "--pred", f"{run_dir}/predictions.csv"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "f1_macro,f1_micro,n_examples,parse_failures"
    assert out[1] == "1.0,1.0,30,0"


def test_run_validation_error_exits_1(tmp_path, capsys):
    config = write_config(tmp_path, strategy="zero_shot")
    assert main(["run", str(config)]) == EXIT_VALIDATION
    assert "selection" in capsys.readouterr().err


def test_run_provider_failure_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("ABSENT_KEY", raising=False)
    config = write_config(tmp_path, provider={"kind": "http_chat", "endpoint": "http://127.0.0.1:9/x",
                                              "model_name": "m", "auth_env_var": "ABSENT_KEY"})
    assert main(["run", str(config)]) == EXIT_RUNTIME
    assert "ABSENT_KEY" in capsys.readouterr().err


def test_report_on_missing_dir_exits_1(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nope")]) == EXIT_VALIDATION


def test_score_missing_id_exits_1(tmp_path, capsys):
    gold = tmp_path / "dev.csv"
    save_dataset(lexicon_split(3, name="dev"), gold)
    pred = tmp_path / "pred.csv"
    pred.write_text("id,anger,fear,joy,sadness,surprise\ndev-0000,0,0,0,0,0\ndev-0001,0,0,0,0,0\n")
    assert main(["score", "--gold", str(gold), "--pred", str(pred)]) == EXIT_VALIDATION
    assert "dev-0002" in capsys.readouterr().err
