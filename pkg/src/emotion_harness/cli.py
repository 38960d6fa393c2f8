"""Command line entry point.

Exit codes: 0 success, 1 validation error (bad config/data/predictions),
2 runtime or provider failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .llm_client import ProviderError
from .metrics import MetricsError, MetricsReport
from .report import REPORT_FORMATS, ReportError, compare_artifacts, emit_report, plot_token_histogram
from .runner import (
    ConfigError,
    PredictionFileError,
    load_artifact,
    load_config,
    run_experiment,
    score_predictions,
)
from .schema import DatasetError, LabelSchema, dataset_stats, load_dataset, validate_against_expected

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

logger = logging.getLogger("emotion_harness")


def _schema_arg(value: str | None) -> LabelSchema | None:
    return LabelSchema(v for v in value.split(",") if v.strip()) if value else None


def cmd_ingest(args: argparse.Namespace) -> int:
    split = load_dataset(args.csv, _schema_arg(args.labels), split_name=args.split)
    counts = [sum(ex.gold.bits[i] for ex in split) for i in range(len(split.schema))]
    print(f"split={split.name} examples={len(split)} labels={','.join(split.schema.labels)}", file=sys.stderr)
    for label, count in zip(split.schema.labels, counts):
        print(f"  {label}: {count}", file=sys.stderr)
    status = EXIT_OK
    if args.expect is not None:
        check = validate_against_expected(split, args.expect)
        print(check, file=sys.stderr)
        if not check.passed:
            status = EXIT_VALIDATION
    if args.stats:
        hist = dataset_stats(split, args.bucket_width)
        hist.write_csv(sys.stdout)
        if args.plot:
            plot_token_histogram(hist, Path(args.plot))
    return status


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.run_id:
        config = replace(config, run_id=args.run_id)
    artifact = run_experiment(config)
    m = artifact.metrics
    print(artifact.run_dir)
    print(f"f1_macro={m.f1_macro:.4f} f1_micro={m.f1_micro:.4f} n={m.n_examples} "
          f"parse_failures={m.parse_failure_count}", file=sys.stderr)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    gold = load_dataset(args.gold, _schema_arg(args.labels), split_name="dev")
    report = score_predictions(gold, args.pred)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(MetricsReport.SUMMARY_COLUMNS)
    writer.writerow(report.summary_row())
    print()
    writer.writerow(MetricsReport.PER_LABEL_COLUMNS)
    writer.writerows(report.per_label_rows())
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    artifact = load_artifact(args.run_dir)
    for path in emit_report(artifact, args.format, args.out, figures=not args.no_figures):
        print(path)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    a, b = load_artifact(args.run_a), load_artifact(args.run_b)
    _, text = compare_artifacts(a, b, out_dir=args.out, fmt=args.format)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emotion-harness", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a dataset CSV")
    p.add_argument("csv")
    p.add_argument("--labels", help="comma-separated label schema (default: inferred from header)")
    p.add_argument("--split", choices=("train", "dev", "test"))
    p.add_argument("--expect", type=int, help="expected number of examples")
    p.add_argument("--stats", action="store_true", help="print a token-length histogram as CSV")
    p.add_argument("--bucket-width", type=int, default=10)
    p.add_argument("--plot", help="also save the histogram figure to this path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run an experiment from a YAML config")
    p.add_argument("config")
    p.add_argument("--run-id", help="override run_id from the config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score a prediction CSV against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="write tables and figures for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=REPORT_FORMATS, default="markdown")
    p.add_argument("--out", help="output directory (default: <run-dir>/report)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="per-emotion F1 comparison of two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--format", choices=REPORT_FORMATS, default="markdown")
    p.add_argument("--out", help="also write the table and a bar chart here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "bucket_width", 1) < 1:
        parser.error("--bucket-width must be positive")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, PredictionFileError, MetricsError, ReportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ProviderError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
