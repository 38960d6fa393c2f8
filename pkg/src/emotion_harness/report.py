"""Markdown/CSV reports and matplotlib figures for finished runs."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import LabelScores, MetricsReport, RunComparison, compare_runs  # noqa: E402
from .runner import RunArtifact  # noqa: E402
from .schema import TokenLengthHistogram, _write_rows  # noqa: E402

REPORT_FORMATS = ("markdown", "csv")
SUMMARY_HEADER = ("run_id", "model", "strategy", "examples", "f1_macro", "f1_micro", "n_examples", "parse_failures")


class ReportError(ValueError):
    pass


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{round(100 * value)}%"


def summary_row(artifact: RunArtifact) -> list:
    cfg = artifact.config
    provider = cfg.get("provider") or {}
    selection = cfg.get("selection")
    n_demos = int(str(selection).split(":")[1]) if selection else 0
    m = artifact.metrics
    return [
        artifact.run_id,
        provider.get("model_name") or provider.get("kind", ""),
        cfg.get("strategy", ""),
        n_demos,
        f"{m.f1_macro:.4f}",
        f"{m.f1_micro:.4f}",
        m.n_examples,
        m.parse_failure_count,
    ]


def confusion_cells(scores: LabelScores) -> list[list[str]]:
    """2x2 matrix (rows: true 0/1, cols: predicted 0/1) as ``count (pct%)`` strings."""
    c, r = scores.confusion, scores.rates
    return [
        [f"{c.tn} ({_pct(r.tn_rate)})", f"{c.fp} ({_pct(r.fp_rate)})"],
        [f"{c.fn} ({_pct(r.fn_rate)})", f"{c.tp} ({_pct(r.tp_rate)})"],
    ]


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = ["| " + " | ".join(map(str, header)) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(map(str, row)) + " |" for row in rows]
    return "\n".join(lines)


def render_markdown(artifact: RunArtifact) -> str:
    m = artifact.metrics
    parts = [f"# Run {artifact.run_id}", "", "## Summary", "", _markdown_table(SUMMARY_HEADER, [summary_row(artifact)])]
    parts += ["", "## Per-label scores", ""]
    parts.append(_markdown_table(
        ("label", "precision", "recall", "f1"),
        [(s.label.title(), f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}") for s in m.per_label],
    ))
    parts += ["", "## Confusion matrices", "", "Rows are true classes; percentages are shares of each row.", ""]
    for scores in m.per_label:
        cells = confusion_cells(scores)
        parts += [
            f"### Confusion matrix: {scores.label.title()}",
            "",
            _markdown_table(("", "Predicted 0", "Predicted 1"),
                            [("True 0", *cells[0]), ("True 1", *cells[1])]),
            "",
        ]
    return "\n".join(parts).rstrip() + "\n"


def render_comparison_markdown(comparison: RunComparison, name_a: str, name_b: str) -> str:
    rows = [(label.title(), f"{a:.4f}", f"{b:.4f}", f"{d:+.4f}") for label, a, b, d in comparison.rows()]
    rows.append(("**macro**", f"{comparison.macro_a:.4f}", f"{comparison.macro_b:.4f}", f"{comparison.macro_delta:+.4f}"))
    return (
        f"# F1 per emotion: {name_a} vs {name_b}\n\n"
        + _markdown_table(("emotion", f"f1 {name_a}", f"f1 {name_b}", "delta"), rows)
        + "\n"
    )


def comparison_rows(comparison: RunComparison) -> list[list]:
    rows = [[label, repr(a), repr(b), repr(d)] for label, a, b, d in comparison.rows()]
    rows.append(["macro", repr(comparison.macro_a), repr(comparison.macro_b), repr(comparison.macro_delta)])
    return rows


def plot_confusion(scores: LabelScores, path: Path) -> Path:
    c = scores.confusion
    counts = np.array([[c.tn, c.fp], [c.fn, c.tp]])
    cells = confusion_cells(scores)
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    row_totals = counts.sum(axis=1, keepdims=True)
    shares = np.divide(counts, row_totals, out=np.zeros(counts.shape), where=row_totals > 0)
    ax.imshow(shares, cmap="Blues", vmin=0, vmax=1)
    for i in range(2):
        for j in range(2):
            ax.text(j, i, cells[i][j].replace(" (", "\n("), ha="center", va="center",
                    color="white" if shares[i, j] > 0.5 else "black")
    ax.set_xticks([0, 1], ["0", "1"])
    ax.set_yticks([0, 1], ["0", "1"])
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    ax.set_title(f"Confusion matrix for {scores.label.title()}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_f1_per_label(report: MetricsReport, path: Path, title: str = "F1 per emotion") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    names = [label.title() for label in report.labels]
    ax.bar(names, [s.f1 for s in report.per_label], color="tab:blue")
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_comparison(comparison: RunComparison, name_a: str, name_b: str, path: Path) -> Path:
    x = np.arange(len(comparison.labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.bar(x - width / 2, comparison.f1_a, width, label=name_a)
    ax.bar(x + width / 2, comparison.f1_b, width, label=name_b)
    ax.set_xticks(x, [label.title() for label in comparison.labels])
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title("F1 per emotion")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_token_histogram(hist: TokenLengthHistogram, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(hist.bucket_starts, hist.frequencies, width=hist.bucket_width, align="edge", edgecolor="black")
    ax.set_xlabel("Tokens (whitespace)")
    ax.set_ylabel("Examples")
    ax.set_title("Distribution of token length")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def emit_report(
    artifact: RunArtifact,
    fmt: str = "markdown",
    out_dir: str | Path | None = None,
    *,
    figures: bool = True,
) -> list[Path]:
    """Write the summary, per-label confusion tables and figures for one run.

    Files go to ``out_dir`` (default ``<run_dir>/report``). Returns the paths written.
    """
    if fmt not in REPORT_FORMATS:
        raise ReportError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    if artifact.metrics is None or not artifact.records_path.is_file():
        raise ReportError(f"run {artifact.run_dir} is incomplete")
    if len(artifact.records()) != artifact.metrics.n_examples:
        raise ReportError(f"run {artifact.run_dir} has {len(artifact.records())} records "
                          f"but metrics cover {artifact.metrics.n_examples} examples")
    out = Path(out_dir) if out_dir is not None else artifact.run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    m = artifact.metrics

    if fmt == "markdown":
        path = out / "report.md"
        path.write_text(render_markdown(artifact), encoding="utf-8")
        written.append(path)
    else:
        _write_rows(out / "summary.csv", SUMMARY_HEADER, [summary_row(artifact)])
        _write_rows(out / "per_label.csv", MetricsReport.PER_LABEL_COLUMNS, m.per_label_rows())
        written += [out / "summary.csv", out / "per_label.csv"]
        conf_dir = out / "confusion"
        conf_dir.mkdir(exist_ok=True)
        for scores in m.per_label:
            cells = confusion_cells(scores)
            path = conf_dir / f"{scores.label}.csv"
            _write_rows(path, ("true", "pred_0", "pred_1"), [("0", *cells[0]), ("1", *cells[1])])
            written.append(path)

    if figures:
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        for scores in m.per_label:
            written.append(plot_confusion(scores, fig_dir / f"confusion_{scores.label}.png"))
        written.append(plot_f1_per_label(m, fig_dir / "f1_per_label.png", title=f"F1 per emotion ({artifact.run_id})"))
    return written


def compare_artifacts(
    a: RunArtifact,
    b: RunArtifact,
    out_dir: str | Path | None = None,
    fmt: str = "markdown",
) -> tuple[RunComparison, str]:
    """Per-emotion F1 comparison of two runs; optionally written to ``out_dir``.

    Returns the comparison and its rendered text (markdown table or CSV).
    """
    comparison = compare_runs(a.metrics, b.metrics)
    if fmt == "markdown":
        text = render_comparison_markdown(comparison, a.run_id, b.run_id)
    elif fmt == "csv":
        buf = io.StringIO()
        _write_rows(buf, ("label", f"f1_{a.run_id}", f"f1_{b.run_id}", "delta"), comparison_rows(comparison))
        text = buf.getvalue()
    else:
        raise ReportError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / ("comparison.md" if fmt == "markdown" else "comparison.csv")).write_text(text, encoding="utf-8")
        plot_comparison(comparison, a.run_id, b.run_id, out / "comparison.png")
    return comparison, text
