"""Prompting and evaluation harness for multi-label emotion detection."""

from .llm_client import CompletionResult, MockLexiconBackend, ProviderConfig, ResponseCache, complete, run_batch
from .metrics import MetricsReport, compare_runs, confusion, evaluate, f1_macro, f1_micro, f1_per_label
from .parsing import ParsedResponse, ParsePolicy, ParseStatus, parse_emotions
from .prompting import ExampleSelection, PromptStrategy, RenderedPrompt, format_example, render_prompt, select_examples
from .runner import ExperimentConfig, RunArtifact, load_artifact, load_config, run_experiment, score_predictions
from .schema import (
    DatasetSplit,
    LabeledExample,
    LabelSchema,
    LabelSet,
    dataset_stats,
    load_dataset,
    validate_against_expected,
)

__version__ = "0.1.0"

__all__ = [
    "CompletionResult", "DatasetSplit", "ExampleSelection", "ExperimentConfig", "LabelSchema", "LabelSet",
    "LabeledExample", "MetricsReport", "MockLexiconBackend", "ParsePolicy", "ParseStatus", "ParsedResponse",
    "PromptStrategy", "ProviderConfig", "RenderedPrompt", "ResponseCache", "RunArtifact", "compare_runs",
    "complete", "confusion", "dataset_stats", "evaluate", "f1_macro", "f1_micro", "f1_per_label",
    "format_example", "load_artifact", "load_config", "load_dataset", "parse_emotions", "render_prompt",
    "run_batch", "run_experiment", "score_predictions", "select_examples", "validate_against_expected",
]
