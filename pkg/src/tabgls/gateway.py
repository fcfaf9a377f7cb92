"""Uniform client over multimodal chat-model backends.

Three backends share one request/response shape: a remote HTTP backend
speaking the common chat-completion JSON schema, a scripted mock that replays
queued responses, and a perfect-oracle mock that answers every stage from
registered gold derivations. A content-addressed on-disk cache makes batch
runs resumable.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import requests

from .errors import (
    BackendError,
    ConfigurationError,
    InputError,
    RateLimitError,
    TransportError,
)

log = logging.getLogger(__name__)

STAGES = ("gse", "sse", "egr", "answer")

_GSE_MARK = "analyze the layout and headers"
_SSE_MARK = "a reasoning plan with target rows"
_EGR_MARK = "a question and a sub-table"


def classify_stage(prompt: str) -> str:
    """Map a rendered prompt to its pipeline stage by its fixed header text."""
    head = prompt[:200]
    if _SSE_MARK in head:
        return "sse"
    if _EGR_MARK in head:
        return "egr"
    if _GSE_MARK in head:
        return "gse"
    return "answer"


class Usage(NamedTuple):
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    ref: str  # local path or http(s) URL

    @property
    def is_url(self) -> bool:
        return self.ref.startswith("http://") or self.ref.startswith("https://")


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: text plus at most one image reference."""

    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        images = 0
        for msg in self.messages:
            for part in msg.parts:
                if isinstance(part, ImagePart):
                    images += 1
                elif isinstance(part, TextPart) and not part.text:
                    raise ValueError("text parts must be non-empty")
        if images > 1:
            raise ValueError("a request carries at most one image")

    @property
    def prompt_text(self) -> str:
        return "\n".join(
            p.text for m in self.messages for p in m.parts if isinstance(p, TextPart)
        )

    @property
    def image(self) -> ImagePart | None:
        for msg in self.messages:
            for part in msg.parts:
                if isinstance(part, ImagePart):
                    return part
        return None


def user_request(
    prompt: str,
    image_ref: str | None,
    model_id: str,
    temperature: float = 0.0,
    max_tokens: int = 1024,
) -> ChatRequest:
    """Single-user-message request, the shape every pipeline stage uses."""
    parts: list = [TextPart(prompt)]
    if image_ref:
        parts.append(ImagePart(image_ref))
    return ChatRequest(
        model_id=model_id,
        messages=(Message("user", tuple(parts)),),
        temperature=temperature,
        max_tokens=max_tokens,
    )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Usage | None = None
    backend: str = "scripted"
    cache_hit: bool = False

    def __post_init__(self) -> None:
        if self.usage is not None and self.usage.completion_tokens < 0:
            raise ValueError("completion_tokens must be >= 0")


def image_digest(part: ImagePart) -> str:
    """Stable digest of image content: file bytes for paths, string for URLs."""
    if part.is_url:
        return hashlib.sha256(("url:" + part.ref).encode()).hexdigest()
    try:
        data = Path(part.ref).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read image file {part.ref}: {exc}")
    return hashlib.sha256(data).hexdigest()


def cache_key(request: ChatRequest) -> str:
    """Cryptographic digest of everything that determines a response."""
    canon = {
        "model_id": request.model_id,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [
            {
                "role": m.role,
                "parts": [
                    {"text": p.text} if isinstance(p, TextPart) else {"image": image_digest(p)}
                    for p in m.parts
                ],
            }
            for m in request.messages
        ],
    }
    blob = json.dumps(canon, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class ScriptedBackend:
    """Replays queued responses; optionally segregated per stage.

    Queue items are strings or ``(text, (prompt_tokens, completion_tokens))``
    pairs. With per-stage queues, each request pops from the queue matching
    its classified stage.
    """

    name = "scripted"

    def __init__(self, responses=None, by_stage: dict | None = None):
        self._queues: dict[str, list] = {}
        if by_stage:
            for stage, items in by_stage.items():
                self._queues[stage] = list(items)
        self._default: list = list(responses or [])
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        stage = classify_stage(request.prompt_text)
        with self._lock:
            queue = self._queues.get(stage, self._default)
            if not queue:
                raise BackendError(f"scripted backend has no queued response for stage {stage!r}")
            item = queue.pop(0)
        if isinstance(item, tuple):
            text, usage = item
            usage = Usage(*usage)
        else:
            text, usage = item, None
        return ChatResponse(text=text, usage=usage, backend=self.name)


@dataclass(frozen=True)
class GoldDerivation:
    """Everything the oracle needs to walk one question through the stages."""

    question: str
    answer: str
    target_columns: tuple[str, ...] = ()
    target_rows: tuple[str, ...] | str = ()
    evidence: tuple[tuple[int, int, str], ...] = ()

    @classmethod
    def from_record(cls, record: dict) -> "GoldDerivation":
        rows = record.get("target_rows", [])
        return cls(
            question=record["question"],
            answer=str(record["answer"]),
            target_columns=tuple(record.get("target_columns", [])),
            target_rows=rows if isinstance(rows, str) else tuple(rows),
            evidence=tuple(
                (int(e["row"]), int(e["col"]), str(e["content"]))
                for e in record.get("evidence", [])
            ),
        )


class OracleBackend:
    """Answers every stage from registered gold derivations.

    The question is located by substring match against the rendered prompt
    (every stage prompt embeds the question verbatim); the longest matching
    registered question wins.
    """

    name = "oracle"

    def __init__(self, derivations):
        self._derivations = list(derivations)

    def _lookup(self, prompt: str) -> GoldDerivation:
        matches = [d for d in self._derivations if d.question and d.question in prompt]
        if not matches:
            raise BackendError("oracle has no gold derivation for this prompt")
        return max(matches, key=lambda d: len(d.question))

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = request.prompt_text
        stage = classify_stage(prompt)
        gold = self._lookup(prompt)
        if stage == "gse":
            rows = gold.target_rows if isinstance(gold.target_rows, str) else list(gold.target_rows)
            text = json.dumps(
                {
                    "thought": "Locate the rows and columns that answer the question.",
                    "target_columns": list(gold.target_columns),
                    "target_rows": rows,
                },
                ensure_ascii=False,
            )
        elif stage == "sse":
            lines = ['Plan Evaluation: "The plan is correct and sufficient."', "Sub-table:"]
            lines += [f"Row {r} Column {c}: {content}" for r, c, content in gold.evidence]
            text = "\n".join(lines)
        else:  # egr or a single-call answer prompt
            text = (
                'Reasoning: "The extracted evidence determines the answer."\n'
                + json.dumps({"answer": gold.answer}, ensure_ascii=False)
            )
        return ChatResponse(text=text, backend=self.name)


class RemoteBackend:
    """HTTP chat-completion backend in the common role/content-parts schema."""

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        api_key_env: str = "TABGLS_API_KEY",
        timeout: float = 120.0,
        session=None,
    ):
        self.endpoint = endpoint
        self._api_key = api_key
        self._api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()

    def _key(self) -> str:
        key = self._api_key or os.environ.get(self._api_key_env, "")
        if not key:
            raise ConfigurationError(
                f"no API key: set ${self._api_key_env} or configure api_key"
            )
        return key

    def _image_payload(self, part: ImagePart) -> dict:
        if part.is_url:
            url = part.ref
        else:
            try:
                data = Path(part.ref).read_bytes()
            except OSError as exc:
                raise InputError(f"cannot read image file {part.ref}: {exc}")
            url = "data:image/png;base64," + base64.b64encode(data).decode("ascii")
        return {"type": "image_url", "image_url": {"url": url}}

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        for msg in request.messages:
            content = []
            for part in msg.parts:
                if isinstance(part, TextPart):
                    content.append({"type": "text", "text": part.text})
                else:
                    content.append(self._image_payload(part))
            messages.append({"role": msg.role, "content": content})
        return {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Authorization": f"Bearer {self._key()}"}
        try:
            resp = self._session.post(
                self.endpoint,
                json=self._payload(request),
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {self.endpoint} failed: {exc}")
        if resp.status_code == 429:
            retry_after = None
            header = resp.headers.get("Retry-After")
            if header:
                try:
                    retry_after = float(header)
                except ValueError:
                    retry_after = None
            raise RateLimitError("rate limited by backend", retry_after=retry_after)
        if 400 <= resp.status_code < 500:
            raise ConfigurationError(
                f"backend rejected request ({resp.status_code}): {resp.text[:500]}"
            )
        if resp.status_code >= 500:
            raise TransportError(f"backend error {resp.status_code}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}")
        usage = None
        raw_usage = data.get("usage") or {}
        if "completion_tokens" in raw_usage:
            usage = Usage(
                prompt_tokens=int(raw_usage.get("prompt_tokens", 0)),
                completion_tokens=int(raw_usage["completion_tokens"]),
            )
        return ChatResponse(text=text, usage=usage, backend=self.name)


# ---------------------------------------------------------------------------
# Gateway: cache + retry + concurrency bound + call log
# ---------------------------------------------------------------------------


@dataclass
class CallRecord:
    stage: str
    prompt: str
    cache_hit: bool


class Gateway:
    """Shared entry point the pipeline talks to.

    Adds response caching, a bounded retry policy for transport failures,
    an in-flight concurrency bound, and a call log used by tests and
    ablation assertions. Thread-safe.
    """

    def __init__(
        self,
        backend,
        model_id: str = "default-model",
        temperature: float = 0.0,
        max_tokens: int = 1024,
        cache_dir: str | Path | None = None,
        concurrency: int = 8,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        sleep=time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.model_id = model_id
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._semaphore = threading.BoundedSemaphore(max(1, concurrency))
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._log_lock = threading.Lock()
        self.call_log: list[CallRecord] = []

    def request(self, prompt: str, image_ref: str | None) -> ChatRequest:
        return user_request(prompt, image_ref, self.model_id, self.temperature, self.max_tokens)

    def complete_text(self, prompt: str, image_ref: str | None) -> ChatResponse:
        return self.complete(self.request(prompt, image_ref))

    def complete(self, request: ChatRequest) -> ChatResponse:
        stage = classify_stage(request.prompt_text)
        with self._semaphore:
            cached = self._cache_read(request)
            if cached is not None:
                response = cached
            else:
                response = self._complete_with_retry(request)
                self._cache_write(request, response)
        with self._log_lock:
            self.call_log.append(CallRecord(stage, request.prompt_text, response.cache_hit))
        return response

    def stage_calls(self) -> list[str]:
        with self._log_lock:
            return [rec.stage for rec in self.call_log]

    def _complete_with_retry(self, request: ChatRequest) -> ChatResponse:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                return self.backend.complete(request)
            except RateLimitError as exc:
                last = exc
                delay = exc.retry_after if exc.retry_after is not None else self._backoff(attempt)
                log.warning("rate limited (attempt %d), sleeping %.2fs", attempt + 1, delay)
            except TransportError as exc:
                last = exc
                delay = self._backoff(attempt)
                log.warning("transport failure (attempt %d): %s", attempt + 1, exc)
            if attempt + 1 < self.max_attempts:
                self._sleep(delay)
        raise BackendError(f"backend failed after {self.max_attempts} attempts: {last}")

    def _backoff(self, attempt: int) -> float:
        return self.backoff_base * (2**attempt) + self._rng.uniform(0, 0.25)

    def _cache_path(self, request: ChatRequest) -> Path | None:
        if not self.cache_dir:
            return None
        return self.cache_dir / (cache_key(request) + ".json")

    def _cache_read(self, request: ChatRequest) -> ChatResponse | None:
        path = self._cache_path(request)
        if not path or not path.exists():
            return None
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        usage = Usage(*record["usage"]) if record.get("usage") else None
        return ChatResponse(
            text=record["text"], usage=usage, backend=record.get("backend", "remote"),
            cache_hit=True,
        )

    def _cache_write(self, request: ChatRequest, response: ChatResponse) -> None:
        path = self._cache_path(request)
        if not path:
            return
        record = {
            "text": response.text,
            "usage": list(response.usage) if response.usage else None,
            "backend": response.backend,
        }
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, ensure_ascii=False)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
