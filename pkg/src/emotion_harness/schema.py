"""Label space, dataset splits and descriptive statistics.

Datasets are CSV files with an ``id`` column, a ``text`` column and one
0/1 column per emotion, which is the layout of the BRIGHTER track A release.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

ID_COLUMN = "id"
TEXT_COLUMN = "text"
SPLIT_NAMES = ("train", "dev", "test")

# Published split sizes of the track A languages handled by the harness.
EXPECTED_SPLIT_SIZES: dict[tuple[str, str], int] = {
    ("eng", "train"): 2768,
    ("eng", "dev"): 116,
    ("eng", "test"): 2767,
    ("ptmz", "train"): 1546,
    ("ptmz", "dev"): 257,
    ("ptmz", "test"): 776,
    ("vmw", "train"): 1551,
    ("vmw", "dev"): 258,
    ("vmw", "test"): 777,
}


class DatasetError(ValueError):
    """Base class for dataset loading errors."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class MissingColumnError(DatasetError):
    pass


class InvalidLabelError(DatasetError):
    pass


class DuplicateIdError(DatasetError):
    pass


class EmptyTextError(DatasetError):
    pass


class EncodingError(DatasetError):
    pass


@dataclass(frozen=True)
class LabelSchema:
    """Ordered emotion names; position ``i`` is bit ``i`` of every label set."""

    labels: tuple[str, ...]

    def __init__(self, labels: Iterable[str]):
        folded = tuple(str(label).strip().casefold() for label in labels)
        if not folded:
            raise ValueError("label schema must contain at least one label")
        if any(not label for label in folded):
            raise ValueError("label names must be nonempty")
        seen: set[str] = set()
        for label in folded:
            if label in seen:
                raise ValueError(f"duplicate label {label!r} in schema")
            seen.add(label)
        object.__setattr__(self, "labels", folded)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: object) -> bool:
        return isinstance(label, str) and label.casefold() in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label.casefold())
        except ValueError:
            raise KeyError(f"label {label!r} not in schema {list(self.labels)}") from None

    def display_names(self) -> list[str]:
        return [label.title() for label in self.labels]


@dataclass(frozen=True)
class LabelSet:
    """Multi-hot vector aligned to a :class:`LabelSchema`. Empty means "None"."""

    schema: LabelSchema
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(self.bits)
        if len(bits) != len(self.schema):
            raise ValueError(f"label set has {len(bits)} bits, schema has {len(self.schema)} labels")
        if any(b not in (0, 1) or isinstance(b, bool) for b in bits):
            raise ValueError(f"label bits must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, schema: LabelSchema) -> LabelSet:
        return cls(schema, (0,) * len(schema))

    @classmethod
    def from_names(cls, schema: LabelSchema, names: Iterable[str]) -> LabelSet:
        bits = [0] * len(schema)
        for name in names:
            bits[schema.index(name)] = 1
        return cls(schema, tuple(bits))

    @property
    def names(self) -> list[str]:
        """Active labels in schema order."""
        return [label for label, bit in zip(self.schema.labels, self.bits) if bit]

    def __contains__(self, label: object) -> bool:
        return label in self.schema and bool(self.bits[self.schema.index(label)])  # type: ignore[arg-type]

    def __len__(self) -> int:
        return sum(self.bits)

    def is_empty(self) -> bool:
        return not any(self.bits)


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    gold: LabelSet


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    schema: LabelSchema
    examples: tuple[LabeledExample, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        seen: set[str] = set()
        for example in self.examples:
            if example.gold.schema != self.schema:
                raise ValueError(f"example {example.id!r} uses a different schema than split {self.name!r}")
            if example.id in seen:
                raise DuplicateIdError(f"duplicate id {example.id!r}")
            seen.add(example.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def ids(self) -> list[str]:
        return [example.id for example in self.examples]

    def by_id(self) -> dict[str, LabeledExample]:
        return {example.id: example for example in self.examples}


@dataclass(frozen=True)
class TokenLengthHistogram:
    bucket_width: int
    bucket_starts: tuple[int, ...]
    frequencies: tuple[int, ...]
    total: int

    def rows(self) -> list[tuple[int, int, int]]:
        """``(bucket_start, bucket_end, count)`` with ``bucket_end`` exclusive."""
        return [(s, s + self.bucket_width, c) for s, c in zip(self.bucket_starts, self.frequencies)]

    def write_csv(self, path_or_file) -> None:
        _write_rows(path_or_file, ["bucket_start", "bucket_end", "count"], self.rows())


@dataclass(frozen=True)
class ValidationReport:
    split_name: str
    expected: int
    actual: int

    @property
    def passed(self) -> bool:
        return self.expected == self.actual

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.split_name}: expected {self.expected} examples, found {self.actual}"


def infer_split_name(path: str | Path, default: str = "train") -> str:
    stem = Path(path).stem.casefold()
    for name in SPLIT_NAMES:
        if name in stem:
            return name
    return default


def _parse_bit(value: str, *, row: int, column: str) -> int:
    cell = value.strip()
    if cell == "0":
        return 0
    if cell == "1":
        return 1
    raise InvalidLabelError(f"label value {value!r} is not 0 or 1", row=row, column=column)


def load_dataset(
    path: str | Path,
    schema: LabelSchema | None = None,
    *,
    split_name: str | None = None,
) -> DatasetSplit:
    """Load a labelled CSV split.

    Args:
        path: CSV file with ``id``, ``text`` and one 0/1 column per label.
        schema: Label space to load. When omitted, every header column other
            than ``id``/``text`` is taken as a label, in file order.
        split_name: One of train/dev/test; guessed from the file name if omitted.

    Raises:
        DatasetError: one of its subclasses, naming the offending row/column.
    """
    path = Path(path)
    name = split_name or infer_split_name(path)
    if name not in SPLIT_NAMES:
        raise ValueError(f"split name must be one of {SPLIT_NAMES}, got {name!r}")

    try:
        with path.open("r", encoding="utf-8-sig", newline="") as fh:
            return _read_split(csv.reader(fh), name, schema)
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path} is not valid UTF-8 ({exc.reason} at byte {exc.start})") from None


def _read_split(reader, name: str, schema: LabelSchema | None) -> DatasetSplit:
    header = next(reader, None)
    if header is None:
        raise MissingColumnError("file is empty; a header row is required", row=1)
    columns = [column.strip().casefold() for column in header]
    for required in (ID_COLUMN, TEXT_COLUMN):
        if required not in columns:
            raise MissingColumnError(f"missing required column {required!r}", row=1, column=required)

    label_columns = [c for c in columns if c not in (ID_COLUMN, TEXT_COLUMN)]
    if schema is None:
        if not label_columns:
            raise MissingColumnError("header has no label columns", row=1)
        schema = LabelSchema(label_columns)
    else:
        for label in schema.labels:
            if label not in columns:
                raise MissingColumnError(f"missing label column {label!r}", row=1, column=label)
        extra = [c for c in label_columns if c not in schema]
        if extra:
            logger.info("ignoring columns outside the schema: %s", extra)

    id_pos = columns.index(ID_COLUMN)
    text_pos = columns.index(TEXT_COLUMN)
    label_pos = [columns.index(label) for label in schema.labels]

    examples: list[LabeledExample] = []
    seen: dict[str, int] = {}
    for cells in reader:
        row = reader.line_num
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(columns):
            raise DatasetError(f"expected {len(columns)} fields, found {len(cells)}", row=row)
        example_id = cells[id_pos].strip()
        if not example_id:
            raise DatasetError("empty id", row=row, column=ID_COLUMN)
        if example_id in seen:
            raise DuplicateIdError(
                f"duplicate id {example_id!r} (first seen at row {seen[example_id]})", row=row, column=ID_COLUMN
            )
        seen[example_id] = row
        text = cells[text_pos]
        if not text.strip():
            raise EmptyTextError("empty text", row=row, column=TEXT_COLUMN)
        bits = tuple(_parse_bit(cells[p], row=row, column=columns[p]) for p in label_pos)
        examples.append(LabeledExample(example_id, text, LabelSet(schema, bits)))
    return DatasetSplit(name, schema, tuple(examples))


def _write_rows(path_or_file, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    if hasattr(path_or_file, "write"):
        writer = csv.writer(path_or_file, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    with Path(path_or_file).open("w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, header, rows)


def save_dataset(split: DatasetSplit, path: str | Path) -> None:
    """Write a split back out in the same CSV layout :func:`load_dataset` reads."""
    rows = ([ex.id, ex.text, *ex.gold.bits] for ex in split.examples)
    _write_rows(path, [ID_COLUMN, TEXT_COLUMN, *split.schema.labels], rows)


def token_length(text: str) -> int:
    return len(text.split())


def dataset_stats(split: DatasetSplit, bucket_width: int) -> TokenLengthHistogram:
    """Histogram of whitespace token counts in fixed-width buckets starting at 0."""
    if bucket_width < 1:
        raise ValueError("bucket_width must be a positive integer")
    if not split.examples:
        raise ValueError(f"split {split.name!r} is empty")
    lengths = [token_length(ex.text) for ex in split.examples]
    n_buckets = max(lengths) // bucket_width + 1
    counts = [0] * n_buckets
    for length in lengths:
        counts[length // bucket_width] += 1
    starts = tuple(i * bucket_width for i in range(n_buckets))
    return TokenLengthHistogram(bucket_width, starts, tuple(counts), len(lengths))


def validate_against_expected(split: DatasetSplit, expected_count: int) -> ValidationReport:
    return ValidationReport(split.name, expected_count, len(split.examples))
