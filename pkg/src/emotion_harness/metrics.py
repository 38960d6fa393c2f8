"""One-vs-rest confusions, F1 scores and run comparisons for multi-label output.

Conventions: any ratio with a zero denominator is reported as 0 for
precision/recall/F1, and macro F1 averages over every schema label, including
labels with no gold positives. Confusion rates are row shares (by true class)
and are ``None`` for an empty row.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

from .schema import LabelSchema, LabelSet


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class LabelConfusion:
    label: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class LabelRates:
    tp_rate: float | None
    fn_rate: float | None
    tn_rate: float | None
    fp_rate: float | None


@dataclass(frozen=True)
class LabelScores:
    confusion: LabelConfusion
    rates: LabelRates
    precision: float
    recall: float
    f1: float

    @property
    def label(self) -> str:
        return self.confusion.label


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple[str, ...]
    per_label: tuple[LabelScores, ...]
    f1_macro: float
    f1_micro: float
    n_examples: int
    parse_failure_count: int = 0

    def label_scores(self, label: str) -> LabelScores:
        for scores in self.per_label:
            if scores.label == label:
                return scores
        raise KeyError(label)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> MetricsReport:
        per_label = tuple(
            LabelScores(
                confusion=LabelConfusion(**row["confusion"]),
                rates=LabelRates(**row["rates"]),
                precision=row["precision"],
                recall=row["recall"],
                f1=row["f1"],
            )
            for row in data["per_label"]
        )
        return cls(
            labels=tuple(data["labels"]),
            per_label=per_label,
            f1_macro=data["f1_macro"],
            f1_micro=data["f1_micro"],
            n_examples=data["n_examples"],
            parse_failure_count=data.get("parse_failure_count", 0),
        )

    PER_LABEL_COLUMNS = (
        "label", "tp", "fp", "fn", "tn",
        "tp_rate", "fn_rate", "tn_rate", "fp_rate",
        "precision", "recall", "f1",
    )
    SUMMARY_COLUMNS = ("f1_macro", "f1_micro", "n_examples", "parse_failures")

    def per_label_rows(self) -> list[list]:
        rows = []
        for s in self.per_label:
            c, r = s.confusion, s.rates
            rows.append([
                c.label, c.tp, c.fp, c.fn, c.tn,
                _cell(r.tp_rate), _cell(r.fn_rate), _cell(r.tn_rate), _cell(r.fp_rate),
                _cell(s.precision), _cell(s.recall), _cell(s.f1),
            ])
        return rows

    def summary_row(self) -> list:
        return [_cell(self.f1_macro), _cell(self.f1_micro), self.n_examples, self.parse_failure_count]


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


@dataclass(frozen=True)
class RunComparison:
    labels: tuple[str, ...]
    f1_a: tuple[float, ...]
    f1_b: tuple[float, ...]
    deltas: tuple[float, ...]
    macro_a: float
    macro_b: float
    macro_delta: float

    def rows(self) -> list[tuple[str, float, float, float]]:
        return list(zip(self.labels, self.f1_a, self.f1_b, self.deltas))


def _check_aligned(gold: Sequence[LabelSet], pred: Sequence[LabelSet]) -> LabelSchema:
    if len(gold) != len(pred):
        raise MetricsError(f"gold has {len(gold)} label sets but pred has {len(pred)}")
    if not gold:
        raise MetricsError("cannot score an empty set of examples")
    schema = gold[0].schema
    for i, (g, p) in enumerate(zip(gold, pred)):
        if g.schema != schema or p.schema != schema:
            raise MetricsError(f"example {i} uses a different label schema")
    return schema


def confusion(gold: Sequence[LabelSet], pred: Sequence[LabelSet], label: str) -> LabelConfusion:
    if len(gold) != len(pred):
        raise MetricsError(f"gold has {len(gold)} label sets but pred has {len(pred)}")
    if not gold:
        return LabelConfusion(label, 0, 0, 0, 0)
    schema = _check_aligned(gold, pred)
    try:
        pos = schema.index(label)
    except KeyError as exc:
        raise MetricsError(str(exc)) from None
    tp = fp = fn = tn = 0
    for g, p in zip(gold, pred):
        truth, guess = g.bits[pos], p.bits[pos]
        if truth and guess:
            tp += 1
        elif guess:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return LabelConfusion(schema.labels[pos], tp, fp, fn, tn)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def label_rates(c: LabelConfusion) -> LabelRates:
    pos, neg = c.tp + c.fn, c.tn + c.fp
    return LabelRates(
        tp_rate=c.tp / pos if pos else None,
        fn_rate=c.fn / pos if pos else None,
        tn_rate=c.tn / neg if neg else None,
        fp_rate=c.fp / neg if neg else None,
    )


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    # 2tp / (2tp + fp + fn) equals the harmonic mean whenever it is defined.
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    return precision, recall, f1


def f1_per_label(c: LabelConfusion) -> tuple[float, float, float]:
    """Precision, recall and F1 for one label."""
    return _f1(c.tp, c.fp, c.fn)


def _confusions(gold: Sequence[LabelSet], pred: Sequence[LabelSet]) -> list[LabelConfusion]:
    schema = _check_aligned(gold, pred)
    return [confusion(gold, pred, label) for label in schema.labels]


def f1_macro(gold: Sequence[LabelSet], pred: Sequence[LabelSet]) -> float:
    scores = [f1_per_label(c)[2] for c in _confusions(gold, pred)]
    return sum(scores) / len(scores)


def f1_micro(gold: Sequence[LabelSet], pred: Sequence[LabelSet]) -> float:
    cs = _confusions(gold, pred)
    return _f1(sum(c.tp for c in cs), sum(c.fp for c in cs), sum(c.fn for c in cs))[2]


def evaluate(gold: Sequence[LabelSet], pred: Sequence[LabelSet], parse_failure_count: int = 0) -> MetricsReport:
    """Full report: per-label confusions, rates and scores plus both F1 averages."""
    schema = _check_aligned(gold, pred)
    per_label = []
    for c in _confusions(gold, pred):
        precision, recall, f1 = f1_per_label(c)
        per_label.append(LabelScores(c, label_rates(c), precision, recall, f1))
    return MetricsReport(
        labels=schema.labels,
        per_label=tuple(per_label),
        f1_macro=f1_macro(gold, pred),
        f1_micro=f1_micro(gold, pred),
        n_examples=len(gold),
        parse_failure_count=parse_failure_count,
    )


def compare_runs(a: MetricsReport, b: MetricsReport) -> RunComparison:
    """Per-label F1 differences ``a - b`` in schema order."""
    if a.labels != b.labels:
        raise MetricsError(f"cannot compare runs over different label schemas: {list(a.labels)} vs {list(b.labels)}")
    f1_a = tuple(s.f1 for s in a.per_label)
    f1_b = tuple(s.f1 for s in b.per_label)
    return RunComparison(
        labels=a.labels,
        f1_a=f1_a,
        f1_b=f1_b,
        deltas=tuple(x - y for x, y in zip(f1_a, f1_b)),
        macro_a=a.f1_macro,
        macro_b=b.f1_macro,
        macro_delta=a.f1_macro - b.f1_macro,
    )
