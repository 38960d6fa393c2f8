"""Prompt templates and in-context example selection.

Templates live in ``templates/<strategy>.txt`` and are filled by plain
placeholder substitution (``{{LABELS}}``, ``{{EXAMPLES}}``, ``{{SENTENCE}}``),
so the rendered text is fully determined by the template bytes.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .schema import DatasetSplit, LabeledExample, LabelSchema, LabelSet

_PLACEHOLDER = re.compile(r"\{\{(LABELS|EXAMPLES|SENTENCE)\}\}")


class PromptStrategy(str, Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_COT = "zero_shot_cot"
    FEW_SHOT = "few_shot"
    FEW_SHOT_COT = "few_shot_cot"
    FEW_SHOT_TOT = "few_shot_tot"

    @property
    def is_few_shot(self) -> bool:
        return self.value.startswith("few_shot")


class SelectionMethod(str, Enum):
    PER_EMOTION_COVERAGE = "per_emotion_coverage"
    FIRST_K = "first_k"
    SEEDED_RANDOM = "seeded_random"


@dataclass(frozen=True)
class ExampleSelection:
    """How to pick demonstrations from the training split.

    ``seeded_random`` draws a PCG64 permutation of the split (numpy's
    ``Generator(PCG64(seed)).permutation``) and keeps the first ``count``
    indices, so a larger count always extends a smaller one.
    """

    method: SelectionMethod
    count: int
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", SelectionMethod(self.method))
        if isinstance(self.count, bool) or not isinstance(self.count, int) or self.count < 1:
            raise ValueError(f"selection count must be a positive integer, got {self.count!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValueError(f"selection seed must be an integer, got {self.seed!r}")

    @classmethod
    def parse(cls, spec: str, default_seed: int = 0) -> ExampleSelection:
        """Parse ``method:count[:seed]``, e.g. ``seeded_random:100:7``."""
        parts = spec.strip().split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"selection must look like method:count[:seed], got {spec!r}")
        try:
            count = int(parts[1])
            seed = int(parts[2]) if len(parts) == 3 else default_seed
        except ValueError:
            raise ValueError(f"selection count and seed must be integers, got {spec!r}") from None
        return cls(SelectionMethod(parts[0]), count, seed)

    def __str__(self) -> str:
        return f"{self.method.value}:{self.count}:{self.seed}"


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    strategy: PromptStrategy
    example_ids: tuple[str, ...]
    target_id: str | None
    content_hash: str


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@lru_cache(maxsize=None)
def load_template(strategy: PromptStrategy | str) -> str:
    strategy = PromptStrategy(strategy)
    raw = resources.files(__package__).joinpath("templates", f"{strategy.value}.txt").read_text("utf-8")
    return raw.rstrip("\n")


def select_examples(train: DatasetSplit, selection: ExampleSelection) -> list[LabeledExample]:
    """Pick demonstrations from ``train``; the result keeps training-set order."""
    n = len(train.examples)
    if n == 0:
        raise ValueError("cannot select examples from an empty split")
    if selection.count > n:
        raise ValueError(f"selection asks for {selection.count} examples but split {train.name!r} has {n}")

    if selection.method is SelectionMethod.FIRST_K:
        chosen = list(range(selection.count))
    elif selection.method is SelectionMethod.SEEDED_RANDOM:
        order = np.random.Generator(np.random.PCG64(selection.seed)).permutation(n)
        chosen = sorted(int(i) for i in order[: selection.count])
    else:
        chosen = _coverage_indices(train, selection.count)
    return [train.examples[i] for i in chosen]


def _coverage_indices(train: DatasetSplit, count: int) -> list[int]:
    # Greedy: for each label in schema order, the earliest unused example carrying it.
    picked: list[int] = []
    used: set[int] = set()
    for position, label in enumerate(train.schema.labels):
        hit = next(
            (i for i, ex in enumerate(train.examples) if ex.gold.bits[position] and i not in used),
            None,
        )
        if hit is None:
            if any(ex.gold.bits[position] for ex in train.examples):
                raise ValueError(f"not enough distinct examples to cover label {label!r}")
            raise ValueError(f"label {label!r} never occurs in split {train.name!r}; coverage is impossible")
        picked.append(hit)
        used.add(hit)
    if len(picked) > count:
        raise ValueError(
            f"per_emotion_coverage needs at least {len(picked)} examples for {len(train.schema)} labels, got {count}"
        )
    for i in range(len(train.examples)):
        if len(picked) == count:
            break
        if i not in used:
            picked.append(i)
            used.add(i)
    return sorted(picked)


def format_labels(labels: LabelSet) -> str:
    names = labels.names
    return ", ".join(name.title() for name in names) if names else "None"


def format_example(example: LabeledExample, schema: LabelSchema | None = None) -> str:
    """Two-line demonstration: quoted sentence, then its gold emotions.

    >>> print(format_example(LabeledExample("x", "How stupid of him.", LabelSet.from_names(LabelSchema(["anger", "joy"]), ["anger"]))))
    Sentence: "How stupid of him."
    Emotions: Anger
    """
    gold = example.gold
    if schema is not None and gold.schema != schema:
        gold = LabelSet.from_names(schema, [n for n in gold.names if n in schema])
    return f'Sentence: "{example.text}"\nEmotions: {format_labels(gold)}'


def format_examples_block(examples: Sequence[LabeledExample], schema: LabelSchema) -> str:
    lines = []
    for number, example in enumerate(examples, start=1):
        sentence_line, emotions_line = format_example(example, schema).split("\nEmotions: ", 1)
        lines.append(f"{number}. {sentence_line}")
        lines.append(f"    Emotions: {emotions_line}")
    return "\n".join(lines)


def label_list(schema: LabelSchema) -> str:
    return ", ".join(f'"{name}"' for name in schema.display_names())


def render_prompt(
    strategy: PromptStrategy | str,
    examples: Sequence[LabeledExample],
    sentence: str,
    schema: LabelSchema,
    *,
    target_id: str | None = None,
) -> RenderedPrompt:
    strategy = PromptStrategy(strategy)
    if not sentence or not sentence.strip():
        raise ValueError("sentence to classify is empty")
    if schema is None or len(schema) == 0:
        raise ValueError("schema is empty")
    if strategy.is_few_shot and not examples:
        raise ValueError(f"{strategy.value} needs at least one example")
    if not strategy.is_few_shot and examples:
        raise ValueError(f"{strategy.value} takes no examples, got {len(examples)}")

    values = {
        "LABELS": label_list(schema),
        "EXAMPLES": format_examples_block(examples, schema) if examples else "",
        "SENTENCE": sentence,
    }
    text = _PLACEHOLDER.sub(lambda m: values[m.group(1)], load_template(strategy))
    return RenderedPrompt(
        text=text,
        strategy=strategy,
        example_ids=tuple(ex.id for ex in examples),
        target_id=target_id,
        content_hash=content_hash(text),
    )
