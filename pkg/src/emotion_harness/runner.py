"""Config-driven experiment runs and their on-disk artifacts.

A run directory ``<output_dir>/<run_id>/`` holds::

    config.yaml        resolved config snapshot (defaults filled in, no secrets)
    records.jsonl      one record per eval example, in eval order
    predictions.csv    id + per-label 0/1 columns (what score_predictions reads)
    metrics.json       full MetricsReport
    per_label.csv      per-label confusion/rates/scores
    summary.csv        f1_macro,f1_micro,n_examples,parse_failures
    timing.json        wall time, cache hits, provider calls

The directory is assembled under a temporary name and renamed into place
only once everything has been written.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import shutil
import tempfile
import threading
import time
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import yaml
from filelock import FileLock, Timeout

from .llm_client import (
    Backend,
    CompletionResult,
    ProviderConfig,
    ProviderError,
    ResponseCache,
    make_backend,
    cache_key,
    run_batch,
)
from .metrics import MetricsReport, evaluate
from .parsing import ParsePolicy, ParseStatus, parse_emotions
from .prompting import ExampleSelection, PromptStrategy, render_prompt, select_examples
from .schema import (
    DatasetError,
    DatasetSplit,
    LabelSchema,
    LabelSet,
    _write_rows,
    infer_split_name,
    load_dataset,
)

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
CONFIG_FILE = "config.yaml"
METRICS_FILE = "metrics.json"
PREDICTIONS_FILE = "predictions.csv"
TIMING_FILE = "timing.json"
# Record fields that describe how a response was obtained rather than what it was.
VOLATILE_RECORD_FIELDS = ("latency_ms", "from_cache")


class ConfigError(ValueError):
    pass


class PredictionFileError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    eval_path: Path
    strategy: PromptStrategy
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    train_path: Path | None = None
    labels: tuple[str, ...] | None = None
    selection: ExampleSelection | None = None
    parse_policy: ParsePolicy = ParsePolicy.LENIENT
    concurrency_limit: int = 4
    cache_dir: Path = Path(".cache/responses")
    output_dir: Path = Path("runs")
    run_id: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", PromptStrategy(self.strategy))
        object.__setattr__(self, "parse_policy", ParsePolicy(self.parse_policy))
        for name in ("eval_path", "train_path", "cache_dir", "output_dir"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, Path(value))

    def validate(self) -> None:
        if self.strategy.is_few_shot:
            if self.selection is None:
                raise ConfigError(f"strategy {self.strategy.value} requires a selection block")
            if self.train_path is None:
                raise ConfigError(f"strategy {self.strategy.value} requires data.train")
        elif self.selection is not None:
            raise ConfigError(f"strategy {self.strategy.value} is zero-shot and must not have a selection block")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.run_id is not None and (not self.run_id or "/" in self.run_id or self.run_id.startswith(".")):
            raise ConfigError(f"invalid run_id {self.run_id!r}")

    def to_dict(self) -> dict[str, Any]:
        """Resolved snapshot; secrets never appear (only the env var name)."""
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "data": {
                "train": str(self.train_path) if self.train_path else None,
                "eval": str(self.eval_path),
                "labels": list(self.labels) if self.labels else None,
            },
            "strategy": self.strategy.value,
            "selection": str(self.selection) if self.selection else None,
            "provider": self.provider.to_dict(),
            "parse_policy": self.parse_policy.value,
            "concurrency_limit": self.concurrency_limit,
            "cache_dir": str(self.cache_dir),
            "output_dir": str(self.output_dir),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
        base = Path(base_dir)

        def resolve(value: Any) -> Path | None:
            if value in (None, ""):
                return None
            path = Path(os.path.expanduser(str(value)))
            return (path if path.is_absolute() else base / path).resolve()

        data = dict(data or {})
        known = {"run_id", "seed", "data", "strategy", "selection", "provider", "parse_policy",
                 "concurrency_limit", "cache_dir", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            section = data.get("data") or {}
            if "eval" not in section:
                raise ConfigError("config needs data.eval")
            seed = int(data.get("seed", 0))
            selection = data.get("selection")
            if isinstance(selection, dict):
                selection = ExampleSelection(
                    selection["method"], int(selection["count"]), int(selection.get("seed", seed))
                )
            elif selection is not None:
                selection = ExampleSelection.parse(str(selection), default_seed=seed)
            provider_fields = {f.name for f in fields(ProviderConfig)}
            provider_data = data.get("provider") or {}
            bad = set(provider_data) - provider_fields
            if bad:
                raise ConfigError(f"unknown provider keys: {sorted(bad)}")
            labels = section.get("labels")
            config = cls(
                eval_path=resolve(section["eval"]),
                train_path=resolve(section.get("train")),
                labels=tuple(LabelSchema(labels).labels) if labels else None,
                strategy=PromptStrategy(data.get("strategy", "zero_shot")),
                selection=selection,
                provider=ProviderConfig(**provider_data),
                parse_policy=ParsePolicy(data.get("parse_policy", "lenient")),
                concurrency_limit=int(data.get("concurrency_limit", 4)),
                cache_dir=resolve(data.get("cache_dir")) or base / ".cache" / "responses",
                output_dir=resolve(data.get("output_dir")) or base / "runs",
                run_id=str(data["run_id"]) if data.get("run_id") not in (None, "") else None,
                seed=seed,
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        config.validate()
        return config


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path).resolve()
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


@dataclass(frozen=True)
class RunRecord:
    id: str
    prompt_hash: str
    raw_response: str | None
    parse_status: str
    unknown_tokens: tuple[str, ...]
    predicted: tuple[str, ...]
    gold: tuple[str, ...]
    latency_ms: float
    from_cache: bool
    error: str | None = None

    def to_json(self) -> str:
        payload = {
            "id": self.id,
            "prompt_hash": self.prompt_hash,
            "raw_response": self.raw_response,
            "parse_status": self.parse_status,
            "unknown_tokens": list(self.unknown_tokens),
            "predicted": list(self.predicted),
            "gold": list(self.gold),
            "error": self.error,
            "latency_ms": round(self.latency_ms, 3),
            "from_cache": self.from_cache,
        }
        return json.dumps(payload, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> RunRecord:
        d = json.loads(line)
        return cls(
            id=d["id"],
            prompt_hash=d["prompt_hash"],
            raw_response=d["raw_response"],
            parse_status=d["parse_status"],
            unknown_tokens=tuple(d.get("unknown_tokens", ())),
            predicted=tuple(d["predicted"]),
            gold=tuple(d["gold"]),
            latency_ms=d["latency_ms"],
            from_cache=d["from_cache"],
            error=d.get("error"),
        )


@dataclass(frozen=True)
class RunArtifact:
    run_dir: Path
    config: dict[str, Any]
    metrics: MetricsReport
    timing: dict[str, Any]

    @property
    def run_id(self) -> str:
        return self.config.get("run_id") or self.run_dir.name

    @property
    def records_path(self) -> Path:
        return self.run_dir / RECORDS_FILE

    @property
    def predictions_path(self) -> Path:
        return self.run_dir / PREDICTIONS_FILE

    @property
    def schema(self) -> LabelSchema:
        return LabelSchema(self.metrics.labels)

    def records(self) -> list[RunRecord]:
        with self.records_path.open(encoding="utf-8") as fh:
            return [RunRecord.from_json(line) for line in fh if line.strip()]


def load_artifact(run_dir: str | Path) -> RunArtifact:
    """Open a finished run directory; raises ``FileNotFoundError`` if it is incomplete."""
    run_dir = Path(run_dir)
    missing = [n for n in (CONFIG_FILE, RECORDS_FILE, METRICS_FILE, PREDICTIONS_FILE) if not (run_dir / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{run_dir} is not a complete run directory (missing {', '.join(missing)})")
    config = yaml.safe_load((run_dir / CONFIG_FILE).read_text(encoding="utf-8"))
    metrics = MetricsReport.from_dict(json.loads((run_dir / METRICS_FILE).read_text(encoding="utf-8")))
    timing_path = run_dir / TIMING_FILE
    timing = json.loads(timing_path.read_text(encoding="utf-8")) if timing_path.is_file() else {}
    return RunArtifact(run_dir, config, metrics, timing)


def _default_run_id(config: ExperimentConfig) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    return f"{config.strategy.value}-{stamp}"


def _write_metrics(report: MetricsReport, run_dir: Path) -> None:
    (run_dir / METRICS_FILE).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    _write_rows(run_dir / "per_label.csv", MetricsReport.PER_LABEL_COLUMNS, report.per_label_rows())
    _write_rows(run_dir / "summary.csv", MetricsReport.SUMMARY_COLUMNS, [report.summary_row()])


def export_predictions(ids: list[str], predictions: list[LabelSet], schema: LabelSchema, path: str | Path) -> None:
    rows = ([example_id, *labels.bits] for example_id, labels in zip(ids, predictions))
    _write_rows(path, ["id", *schema.labels], rows)


def _load_splits(config: ExperimentConfig) -> tuple[DatasetSplit | None, DatasetSplit]:
    schema = LabelSchema(config.labels) if config.labels else None
    eval_split = load_dataset(config.eval_path, schema, split_name=infer_split_name(config.eval_path, "dev"))
    train = None
    if config.strategy.is_few_shot:
        train = load_dataset(config.train_path, eval_split.schema, split_name="train")
    return train, eval_split


def run_experiment(config: ExperimentConfig, *, backend: Backend | None = None) -> RunArtifact:
    """Select, render, dispatch, parse, score and persist one experiment.

    Validation problems (bad config, unreadable data, impossible selection,
    missing credentials on a cold cache) raise before any request is sent.
    Per-example provider failures do not: those examples get the empty
    fallback prediction and are counted as parse failures.
    """
    config.validate()
    if config.run_id is None:
        config = replace(config, run_id=_default_run_id(config))
    train, eval_split = _load_splits(config)
    schema = eval_split.schema
    if not eval_split.examples:
        raise DatasetError(f"eval split {config.eval_path} has no examples")

    demos = select_examples(train, config.selection) if train is not None else []
    prompts = [
        render_prompt(config.strategy, demos, ex.text, schema, target_id=ex.id) for ex in eval_split.examples
    ]

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    final_dir = output_dir / config.run_id
    if final_dir.exists():
        raise ConfigError(f"run id {config.run_id!r} already exists in {output_dir}")

    cache = ResponseCache(config.cache_dir)
    provider = config.provider
    if backend is None:
        backend = _backend_if_needed(provider, cache, prompts, schema)

    lock = FileLock(str(output_dir / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(f"another run holds the lock on {output_dir}") from None
    try:
        if final_dir.exists():
            raise ConfigError(f"run id {config.run_id!r} already exists in {output_dir}")
        tmp_dir = Path(tempfile.mkdtemp(prefix=f".{config.run_id}.partial-", dir=output_dir))
        try:
            artifact = _execute(config, eval_split, prompts, cache, backend, tmp_dir, final_dir)
        except BaseException:
            shutil.rmtree(tmp_dir, ignore_errors=True)
            raise
    finally:
        lock.release()
    return artifact


def _backend_if_needed(provider: ProviderConfig, cache: ResponseCache, prompts, schema: LabelSchema) -> Backend | None:
    if provider.kind == "mock_lexicon":
        return make_backend(provider, schema.labels)
    cold = any(
        cache.get(provider, cache_key(provider.effective_model, p.content_hash, provider.temperature,
                                      provider.max_output_tokens)) is None
        for p in prompts
    )
    # Credentials are only needed when something has to be fetched.
    return make_backend(provider) if cold else None


def _execute(config, eval_split, prompts, cache, backend, tmp_dir: Path, final_dir: Path) -> RunArtifact:
    schema = eval_split.schema
    examples = eval_split.examples
    records: list[RunRecord | None] = [None] * len(examples)
    next_to_write = 0
    write_lock = threading.Lock()
    records_fh = (tmp_dir / RECORDS_FILE).open("w", encoding="utf-8")

    def to_record(index: int, outcome: CompletionResult | ProviderError) -> RunRecord:
        ex = examples[index]
        if isinstance(outcome, ProviderError):
            return RunRecord(ex.id, prompts[index].content_hash, None, ParseStatus.FAILED.value, (),
                             (), tuple(ex.gold.names), 0.0, False, str(outcome))
        parsed = parse_emotions(outcome.raw_text, schema, config.parse_policy)
        return RunRecord(ex.id, prompts[index].content_hash, outcome.raw_text, parsed.status.value,
                         parsed.unknown_tokens, tuple(parsed.labels.names), tuple(ex.gold.names),
                         outcome.latency, outcome.from_cache)

    def on_result(index: int, outcome: CompletionResult | ProviderError) -> None:
        nonlocal next_to_write
        record = to_record(index, outcome)
        with write_lock:
            records[index] = record
            # Flush the contiguous finished prefix so the file stays in eval order.
            while next_to_write < len(records) and records[next_to_write] is not None:
                records_fh.write(records[next_to_write].to_json() + "\n")
                next_to_write += 1
            records_fh.flush()

    started = time.perf_counter()
    try:
        outcomes = run_batch(prompts, config.provider, cache, config.concurrency_limit,
                             backend=backend, on_result=on_result)
    finally:
        records_fh.close()
    wall = time.perf_counter() - started

    final_records = [r for r in records if r is not None]
    if len(final_records) != len(examples):
        raise RuntimeError("internal error: missing run records")
    predictions = [LabelSet.from_names(schema, r.predicted) for r in final_records]
    gold = [ex.gold for ex in examples]
    failures = sum(r.parse_status == ParseStatus.FAILED.value for r in final_records)
    report = evaluate(gold, predictions, parse_failure_count=failures)

    (tmp_dir / CONFIG_FILE).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8")
    export_predictions([ex.id for ex in examples], predictions, schema, tmp_dir / PREDICTIONS_FILE)
    _write_metrics(report, tmp_dir)
    hits = sum(isinstance(o, CompletionResult) and o.from_cache for o in outcomes)
    timing = {
        "wall_seconds": round(wall, 6),
        "n_prompts": len(prompts),
        "cache_hits": hits,
        "provider_calls": sum(isinstance(o, CompletionResult) and not o.from_cache for o in outcomes),
        "provider_errors": sum(isinstance(o, ProviderError) for o in outcomes),
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    (tmp_dir / TIMING_FILE).write_text(json.dumps(timing, indent=2) + "\n", encoding="utf-8")
    if timing["provider_errors"]:
        logger.warning("%d of %d prompts failed at the provider", timing["provider_errors"], len(prompts))

    os.replace(tmp_dir, final_dir)
    return load_artifact(final_dir)


def score_predictions(gold: DatasetSplit, predictions_path: str | Path) -> MetricsReport:
    """Score an external prediction CSV (``id`` + one 0/1 column per label) against ``gold``."""
    path = Path(predictions_path)
    schema = gold.schema
    try:
        with path.open(encoding="utf-8-sig", newline="") as fh:
            reader = csv.reader(fh)
            header = [c.strip().casefold() for c in next(reader, [])]
            if "id" not in header:
                raise PredictionFileError(f"{path}: missing 'id' column")
            missing_cols = [label for label in schema.labels if label not in header]
            extra_cols = [c for c in header if c != "id" and c not in schema.labels]
            if missing_cols or extra_cols:
                raise PredictionFileError(
                    f"{path}: label columns do not match the schema "
                    f"(missing {missing_cols}, unexpected {extra_cols})"
                )
            id_pos = header.index("id")
            positions = [header.index(label) for label in schema.labels]
            preds: dict[str, LabelSet] = {}
            bad_values: list[str] = []
            duplicates: list[str] = []
            for cells in reader:
                if not cells or all(not c.strip() for c in cells):
                    continue
                row = reader.line_num
                if len(cells) != len(header):
                    bad_values.append(f"row {row}: expected {len(header)} fields, found {len(cells)}")
                    continue
                example_id = cells[id_pos].strip()
                bits = []
                for label, p in zip(schema.labels, positions):
                    value = cells[p].strip()
                    if value not in ("0", "1"):
                        bad_values.append(f"row {row} ({example_id}) {label}={cells[p]!r}")
                        value = "0"
                    bits.append(int(value))
                if example_id in preds:
                    duplicates.append(example_id)
                preds[example_id] = LabelSet(schema, tuple(bits))
    except UnicodeDecodeError as exc:
        raise PredictionFileError(f"{path} is not valid UTF-8") from exc

    gold_ids = gold.ids()
    missing = [i for i in gold_ids if i not in preds]
    extra = sorted(set(preds) - set(gold_ids))
    problems = []
    if bad_values:
        problems.append("non-binary values: " + "; ".join(bad_values))
    if duplicates:
        problems.append(f"duplicate ids: {duplicates}")
    if missing:
        problems.append(f"missing ids: {missing}")
    if extra:
        problems.append(f"unexpected ids: {extra}")
    if problems:
        raise PredictionFileError(f"{path}: " + " | ".join(problems))
    return evaluate([ex.gold for ex in gold.examples], [preds[i] for i in gold_ids])
