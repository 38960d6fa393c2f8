from __future__ import annotations

import random
from pathlib import Path

import pytest

from emotion_harness.schema import DatasetSplit, LabeledExample, LabelSchema, LabelSet, load_dataset, save_dataset

FIXTURES = Path(__file__).parent / "fixtures"
EMOTIONS5 = ("anger", "fear", "joy", "sadness", "surprise")

# One trigger word per emotion, all present in the mock provider's lexicon.
TRIGGERS = {"anger": "furious", "fear": "terrified", "joy": "delighted", "sadness": "grieving", "surprise": "astonished"}
FILLER = ["the", "train", "left", "at", "noon", "and", "we", "walked", "home", "slowly", "after", "dinner"]


@pytest.fixture
def schema5() -> LabelSchema:
    return LabelSchema(EMOTIONS5)


@pytest.fixture
def appendix_split(schema5) -> DatasetSplit:
    return load_dataset(FIXTURES / "appendix_examples.csv", schema5, split_name="train")


def lexicon_split(n: int, seed: int = 0, name: str = "dev") -> DatasetSplit:
    """Sentences whose only emotion words are exactly their gold labels' triggers."""
    schema = LabelSchema(EMOTIONS5)
    rng = random.Random(seed)
    examples = []
    for i in range(n):
        bits = tuple(rng.randint(0, 1) for _ in EMOTIONS5)
        words = rng.sample(FILLER, 5) + [TRIGGERS[e] for e, b in zip(EMOTIONS5, bits) if b]
        rng.shuffle(words)
        text = " ".join(words).capitalize() + "."
        examples.append(LabeledExample(f"{name}-{i:04d}", text, LabelSet(schema, bits)))
    return DatasetSplit(name, schema, tuple(examples))


def write_split(split: DatasetSplit, path: Path) -> Path:
    save_dataset(split, path)
    return path


# Acceptance criteria: one PASS/FAIL/SKIP line per criterion in the terminal summary.
_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if hasattr(item, "callspec"):
        name = f"{name} [{item.callspec.id}]"
    if report.when == "call" or (report.when == "setup" and not report.passed):
        verdict = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _criteria.append((name, verdict))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _criteria:
        terminalreporter.write_line(f"{verdict:4}  {name}")
