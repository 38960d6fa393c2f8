"""Chat-completion dispatch with retries, bounded concurrency and a JSONL cache.

Two provider kinds exist: ``http_chat`` posts an OpenAI-style chat request to
a configured endpoint, and ``mock_lexicon`` answers offline from a fixed
trigger-word table. Both sit behind the same cache, so a warm cache replays
a run without touching the provider at all.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import httpx

from .prompting import RenderedPrompt

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("http_chat", "mock_lexicon")
MOCK_MODEL_NAME = "mock-lexicon"

# Trigger word -> emotion. The mock answers with every emotion whose trigger
# appears as a whole word in the target sentence.
MOCK_LEXICON: dict[str, str] = {
    "furious": "anger", "angry": "anger", "enraged": "anger", "outraged": "anger",
    "disgusted": "disgust", "revolted": "disgust", "repulsed": "disgust",
    "terrified": "fear", "afraid": "fear", "scared": "fear", "frightened": "fear",
    "delighted": "joy", "happy": "joy", "thrilled": "joy", "overjoyed": "joy",
    "grieving": "sadness", "sad": "sadness", "heartbroken": "sadness", "miserable": "sadness",
    "astonished": "surprise", "shocked": "surprise", "stunned": "surprise", "amazed": "surprise",
}
_MOCK_ORDER = ("anger", "disgust", "fear", "joy", "sadness", "surprise")
_WORD = re.compile(r"[a-z']+")
_TARGET = re.compile(r"Sentence:[ \t]*(.*?)(?:\n[ \t]*\n|\Z)", re.DOTALL)


class ProviderError(RuntimeError):
    """A prompt could not be completed."""

    def __init__(self, message: str, *, status: int | None = None, attempts: Sequence[str] = ()):
        super().__init__(message)
        self.status = status
        self.attempts = list(attempts)


class TransientProviderError(ProviderError):
    """Retryable failure: HTTP 429, 5xx, timeouts and connection errors."""


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock_lexicon"
    endpoint: str | None = None
    model_name: str | None = None
    auth_env_var: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 256
    request_timeout: float = 60.0
    max_retries: int = 3
    base_backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ValueError(f"provider kind must be one of {PROVIDER_KINDS}, got {self.kind!r}")
        if self.kind == "http_chat" and not (self.endpoint and self.model_name):
            raise ValueError("http_chat providers need both endpoint and model_name")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.base_backoff < 0:
            raise ValueError("base_backoff must be >= 0")

    @property
    def effective_model(self) -> str:
        return self.model_name or MOCK_MODEL_NAME

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    latency: float
    attempt_count: int
    from_cache: bool
    provider_meta: dict[str, Any] = field(default_factory=dict)


class Backend(Protocol):
    def send(self, prompt_text: str) -> tuple[str, dict[str, Any]]:
        """Return ``(raw_text, meta)`` or raise :class:`ProviderError`."""


def extract_target_sentence(prompt_text: str) -> str:
    """The last ``Sentence:`` block of a rendered prompt (the sentence being classified)."""
    matches = _TARGET.findall(prompt_text)
    if not matches:
        return ""
    return matches[-1].strip()


def mock_lexicon_answer(sentence: str, labels: Sequence[str] | None = None) -> str:
    words = set(_WORD.findall(sentence.casefold()))
    found = {MOCK_LEXICON[w] for w in words if w in MOCK_LEXICON}
    if labels is not None:
        found &= {label.casefold() for label in labels}
    names = [emotion.title() for emotion in _MOCK_ORDER if emotion in found]
    return f"Emotions: {', '.join(names) if names else 'None'}"


class MockLexiconBackend:
    """Deterministic offline provider; counts how often it is invoked."""

    def __init__(self, labels: Sequence[str] | None = None):
        self.labels = tuple(labels) if labels is not None else None
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, prompt_text: str) -> tuple[str, dict[str, Any]]:
        with self._lock:
            self.calls += 1
        sentence = extract_target_sentence(prompt_text)
        return mock_lexicon_answer(sentence, self.labels), {"provider": "mock_lexicon"}


class HttpChatBackend:
    """Minimal chat-completion client: one user message, first candidate back."""

    def __init__(self, provider: ProviderConfig, client: httpx.Client | None = None):
        if provider.kind != "http_chat":
            raise ValueError("HttpChatBackend needs an http_chat provider")
        self.provider = provider
        self._client = client or httpx.Client(timeout=provider.request_timeout)
        self._api_key = _read_api_key(provider)

    def send(self, prompt_text: str) -> tuple[str, dict[str, Any]]:
        p = self.provider
        body = {
            "model": p.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": p.temperature,
            "max_tokens": p.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        try:
            response = self._client.post(p.endpoint, json=body, headers=headers, timeout=p.request_timeout)
        except httpx.TimeoutException as exc:
            raise TransientProviderError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc

        status = response.status_code
        if status == 429 or status >= 500:
            raise TransientProviderError(f"HTTP {status}: {response.text[:200]}", status=status)
        if status >= 400:
            raise ProviderError(f"HTTP {status}: {response.text[:500]}", status=status)
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProviderError(f"response is not JSON: {response.text[:200]}", status=status) from exc
        return _first_candidate(payload), _response_meta(payload)


def _read_api_key(provider: ProviderConfig) -> str | None:
    if not provider.auth_env_var:
        return None
    key = os.environ.get(provider.auth_env_var)
    if not key:
        raise ProviderError(f"environment variable {provider.auth_env_var!r} is not set")
    return key


def _first_candidate(payload: dict[str, Any]) -> str:
    try:
        if "choices" in payload:
            choice = payload["choices"][0]
            if "message" in choice:
                return choice["message"]["content"] or ""
            return choice["text"]
        if "candidates" in payload:
            return "".join(part.get("text", "") for part in payload["candidates"][0]["content"]["parts"])
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"unexpected response shape: {json.dumps(payload)[:200]}") from exc
    raise ProviderError(f"response has no candidates: {json.dumps(payload)[:200]}")


def _response_meta(payload: dict[str, Any]) -> dict[str, Any]:
    meta = {k: payload[k] for k in ("id", "model") if k in payload}
    if "usage" in payload:
        meta["usage"] = payload["usage"]
    choices = payload.get("choices") or payload.get("candidates") or []
    if choices and isinstance(choices[0], dict):
        reason = choices[0].get("finish_reason") or choices[0].get("finishReason")
        if reason:
            meta["finish_reason"] = reason
    return meta


def make_backend(provider: ProviderConfig, labels: Sequence[str] | None = None) -> Backend:
    if provider.kind == "mock_lexicon":
        return MockLexiconBackend(labels)
    return HttpChatBackend(provider)


class _LazyBackend:
    # Builds the real backend on the first cache miss, so a fully warm cache
    # never needs credentials.
    def __init__(self, provider: ProviderConfig):
        self.provider = provider
        self._backend: Backend | None = None
        self._lock = threading.Lock()

    def send(self, prompt_text: str) -> tuple[str, dict[str, Any]]:
        with self._lock:
            if self._backend is None:
                self._backend = make_backend(self.provider)
        return self._backend.send(prompt_text)


def cache_key(model_name: str, prompt_hash: str, temperature: float, max_output_tokens: int) -> str:
    material = json.dumps([model_name, prompt_hash, float(temperature), int(max_output_tokens)])
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL files, one per (provider kind, model), indexed in memory.

    Lookups are lock-free reads of the index; appends are serialized. A
    truncated final line (from a crash mid-write) is ignored on load.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._index: dict[str, dict[str, dict[str, Any]]] = {}
        self._lock = threading.Lock()

    def path_for(self, provider: ProviderConfig) -> Path:
        slug = re.sub(r"[^A-Za-z0-9._-]+", "_", provider.effective_model)
        return self.directory / f"{provider.kind}__{slug}.jsonl"

    def _entries(self, provider: ProviderConfig) -> dict[str, dict[str, Any]]:
        path = self.path_for(provider)
        key = str(path)
        if key not in self._index:
            with self._lock:
                if key not in self._index:
                    self._index[key] = self._load(path)
        return self._index[key]

    @staticmethod
    def _load(path: Path) -> dict[str, dict[str, Any]]:
        entries: dict[str, dict[str, Any]] = {}
        if not path.exists():
            return entries
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("%s:%d: discarding unreadable cache line", path, lineno)
                    continue
                entries[entry["key"]] = entry
        return entries

    def get(self, provider: ProviderConfig, key: str) -> dict[str, Any] | None:
        return self._entries(provider).get(key)

    def put(self, provider: ProviderConfig, key: str, raw_text: str, meta: dict[str, Any]) -> None:
        entries = self._entries(provider)
        entry = {
            "key": key,
            "raw_text": raw_text,
            "meta": meta,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        path = self.path_for(provider)
        with self._lock:
            needs_newline = path.exists() and path.stat().st_size > 0 and not _ends_with_newline(path)
            with path.open("a", encoding="utf-8") as fh:
                if needs_newline:
                    fh.write("\n")
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            entries[key] = entry

    def __len__(self) -> int:
        return sum(len(v) for v in self._index.values())


def _ends_with_newline(path: Path) -> bool:
    with path.open("rb") as fh:
        fh.seek(-1, os.SEEK_END)
        return fh.read(1) == b"\n"


def complete(
    prompt: RenderedPrompt,
    provider: ProviderConfig,
    cache: ResponseCache | None,
    *,
    backend: Backend | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> CompletionResult:
    """Complete one prompt: cache first, then the provider with exponential backoff.

    Transient failures are retried up to ``provider.max_retries`` times, waiting
    ``base_backoff * 2**i`` seconds before retry ``i``. Anything else fails at once.
    """
    key = cache_key(provider.effective_model, prompt.content_hash, provider.temperature, provider.max_output_tokens)
    if cache is not None:
        hit = cache.get(provider, key)
        if hit is not None:
            return CompletionResult(hit["raw_text"], 0.0, 0, True, dict(hit.get("meta") or {}))

    if backend is None:
        backend = make_backend(provider)
    history: list[str] = []
    start = time.perf_counter()
    for attempt in range(provider.max_retries + 1):
        try:
            raw_text, meta = backend.send(prompt.text)
        except TransientProviderError as exc:
            history.append(str(exc))
            if attempt == provider.max_retries:
                raise ProviderError(
                    f"gave up after {attempt + 1} attempts: {'; '.join(history)}", status=exc.status, attempts=history
                ) from exc
            delay = provider.base_backoff * (2**attempt)
            logger.warning("transient provider failure (%s); retrying in %.2fs", exc, delay)
            sleep(delay)
            continue
        latency = (time.perf_counter() - start) * 1000.0
        if cache is not None:
            cache.put(provider, key, raw_text, meta)
        return CompletionResult(raw_text, latency, attempt + 1, False, meta)
    raise AssertionError("unreachable")


def run_batch(
    prompts: Sequence[RenderedPrompt],
    provider: ProviderConfig,
    cache: ResponseCache | None,
    concurrency_limit: int,
    *,
    backend: Backend | None = None,
    sleep: Callable[[float], None] = time.sleep,
    on_result: Callable[[int, CompletionResult | ProviderError], None] | None = None,
) -> list[CompletionResult | ProviderError]:
    """Complete prompts with at most ``concurrency_limit`` requests in flight.

    Results come back in input order. A failed prompt leaves its
    :class:`ProviderError` in its slot instead of aborting the batch.
    ``on_result`` is called from worker threads as each slot finishes.
    """
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    if backend is None:
        backend = _LazyBackend(provider)

    def work(index: int) -> CompletionResult | ProviderError:
        try:
            outcome: CompletionResult | ProviderError = complete(
                prompts[index], provider, cache, backend=backend, sleep=sleep
            )
        except ProviderError as exc:
            outcome = exc
        if on_result is not None:
            on_result(index, outcome)
        return outcome

    with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
        return list(pool.map(work, range(len(prompts))))
