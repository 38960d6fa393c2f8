from pathlib import Path

import yaml

from emotion_harness.schema import save_dataset

from .conftest import lexicon_split


def write_config(tmp_path: Path, **overrides) -> Path:
    """A mock-provider experiment over lexicon-built data, as a YAML file."""
    train, dev = tmp_path / "train.csv", tmp_path / "dev.csv"
    if not train.exists():
        save_dataset(lexicon_split(40, seed=11, name="train"), train)
    if not dev.exists():
        save_dataset(lexicon_split(30, seed=12, name="dev"), dev)
    config = {
        "run_id": "mock-fs6",
        "seed": 0,
        "data": {"train": "train.csv", "eval": "dev.csv"},
        "strategy": "few_shot",
        "selection": "per_emotion_coverage:6",
        "provider": {"kind": "mock_lexicon"},
        "parse_policy": "strict",
        "concurrency_limit": 4,
        "cache_dir": "cache",
        "output_dir": "runs",
    }
    config.update(overrides)
    path = tmp_path / f"{config['run_id'] or 'auto'}.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path
