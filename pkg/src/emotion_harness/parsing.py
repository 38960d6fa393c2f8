"""Turn free-text model answers into label sets."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .schema import LabelSchema, LabelSet

_FINAL_PREFIX = re.compile(r"^\W*final\s+emotions\s*:", re.IGNORECASE)
_EMOTIONS_PREFIX = re.compile(r"^\W*emotions\s*:", re.IGNORECASE)
_TRIM = " \t\"'`.*“”‘’[](){}"


class ParsePolicy(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class ParseStatus(str, Enum):
    CLEAN = "clean"
    RECOVERED = "recovered"
    FAILED = "failed"


@dataclass(frozen=True)
class ParsedResponse:
    labels: LabelSet
    status: ParseStatus
    unknown_tokens: tuple[str, ...] = field(default_factory=tuple)
    source_line: str | None = None


def _candidate_line(lines: list[str]) -> str | None:
    for prefix in (_FINAL_PREFIX, _EMOTIONS_PREFIX):
        for pos in range(len(lines) - 1, -1, -1):
            match = prefix.match(lines[pos])
            if not match:
                continue
            rest = lines[pos][match.end():].strip()
            if rest:
                return rest
            # Answer placed on the line after a bare "Emotions:" cue.
            following = next((ln.strip() for ln in lines[pos + 1:] if ln.strip()), None)
            if following is not None and not _FINAL_PREFIX.match(following):
                return following
    last = next((ln.strip() for ln in reversed(lines) if ln.strip()), None)
    if last is not None and (_FINAL_PREFIX.match(last) or _EMOTIONS_PREFIX.match(last)):
        return None  # an empty answer cue is not an answer
    return last


def parse_emotions(raw: str, schema: LabelSchema, policy: ParsePolicy | str = ParsePolicy.LENIENT) -> ParsedResponse:
    """Read the answer line of a model response against ``schema``.

    The last ``Final Emotions:`` line wins, then the last ``Emotions:`` line,
    then the last nonblank line. A lone ``None`` means the empty set. Nothing
    is raised: unusable output comes back as ``FAILED`` with the empty set.
    """
    policy = ParsePolicy(policy)
    failed = ParsedResponse(LabelSet.empty(schema), ParseStatus.FAILED)
    line = _candidate_line((raw or "").splitlines())
    if line is None:
        return failed

    tokens = [tok.strip(_TRIM).casefold() for tok in line.split(",")]
    tokens = [tok for tok in tokens if tok]
    if not tokens:
        return failed
    if tokens == ["none"]:
        return ParsedResponse(LabelSet.empty(schema), ParseStatus.CLEAN, (), line)

    known = [tok for tok in tokens if tok in schema.labels]
    unknown = tuple(tok for tok in tokens if tok not in schema.labels)
    if not unknown:
        return ParsedResponse(LabelSet.from_names(schema, known), ParseStatus.CLEAN, (), line)
    if policy is ParsePolicy.STRICT or not known:
        return ParsedResponse(failed.labels, ParseStatus.FAILED, unknown, None)
    return ParsedResponse(LabelSet.from_names(schema, known), ParseStatus.RECOVERED, unknown, line)
