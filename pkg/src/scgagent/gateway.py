"""Chat-completion gateway with live HTTP, record and replay backends.

Every model call in the workflow goes through :class:`Gateway`.  Backends
implement ``send(request) -> ChatResponse``; the gateway adds the retry
budget for truncated/refused/unparseable replies and an optional rate limit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Protocol, TypeVar

import httpx

from .prompts import GENERATIVE_STAGES, ParseError, Stage

log = logging.getLogger(__name__)

API_KEY_ENV = "SCG_API_KEY"

T = TypeVar("T")


class GatewayError(RuntimeError):
    """The backend could not produce a usable response."""


class CassetteError(GatewayError):
    """Cassette file is malformed, exhausted, or does not match the request."""


class FinishState(str, Enum):
    COMPLETE = "complete"
    TRUNCATED = "truncated"
    REFUSED = "refused"


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    stage: Stage
    prompt_text: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    model_id: str = ""
    # earlier turns of the same conversation; not part of the digest
    history: tuple[Message, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage", Stage(self.stage))
        if not self.prompt_text:
            raise ValueError("prompt_text is empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    @property
    def digest(self) -> str:
        return request_digest(self.stage, self.prompt_text)

    def messages(self) -> list[dict[str, str]]:
        turns = [{"role": m.role, "content": m.content} for m in self.history]
        turns.append({"role": "user", "content": self.prompt_text})
        return turns


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_state: FinishState = FinishState.COMPLETE
    usage: dict[str, int] = field(default_factory=dict)


def request_digest(stage: Stage | str, prompt_text: str) -> str:
    h = hashlib.sha256()
    h.update(str(Stage(stage)).encode())
    h.update(b"\x00")
    h.update(prompt_text.encode("utf-8"))
    return h.hexdigest()


@dataclass
class LLMSettings:
    """Per-stage sampling parameters shared by every call of one run."""

    model_id: str = ""
    generation_temperature: float = 0.7
    decision_temperature: float = 0.0
    max_output_tokens: int = 4096
    overrides: dict[str, float] = field(default_factory=dict)

    def temperature(self, stage: Stage) -> float:
        if stage.value in self.overrides:
            return self.overrides[stage.value]
        return self.generation_temperature if stage in GENERATIVE_STAGES else self.decision_temperature

    def request(self, stage: Stage, prompt_text: str, history: tuple[Message, ...] = ()) -> ChatRequest:
        return ChatRequest(
            stage=stage,
            prompt_text=prompt_text,
            temperature=self.temperature(stage),
            max_output_tokens=self.max_output_tokens,
            model_id=self.model_id,
            history=history,
        )


class Backend(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse: ...


class RateLimiter:
    """Spaces dispatches at least ``60 / requests_per_minute`` seconds apart."""

    def __init__(self, requests_per_minute: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self.interval = 60.0 / requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            self._sleep(wait)


# ---------------------------------------------------------------- cassettes

@dataclass(frozen=True)
class CassetteEntry:
    seq: int
    stage: Stage
    prompt_digest: str
    prompt_text: str
    response_text: str
    finish_state: FinishState = FinishState.COMPLETE

    def to_record(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "stage": self.stage.value,
            "prompt_digest": self.prompt_digest,
            "prompt_text": self.prompt_text,
            "response_text": self.response_text,
            "finish_state": self.finish_state.value,
        }

    @property
    def response(self) -> ChatResponse:
        return ChatResponse(self.response_text, self.finish_state)


STRICT_SEQUENCE = "strict_sequence"
DIGEST_LOOKUP = "digest_lookup"


class Cassette:
    """Recorded exchanges served back in order (or by digest)."""

    def __init__(self, entries: list[CassetteEntry] | None = None, mode: str = STRICT_SEQUENCE,
                 source: str | None = None):
        if mode not in (STRICT_SEQUENCE, DIGEST_LOOKUP):
            raise ValueError(f"unknown cassette mode {mode!r}")
        self.entries = list(entries or [])
        self.mode = mode
        self.source = source
        self._cursor = 0
        self._used: set[int] = set()
        self._lock = threading.Lock()
        self._by_digest: dict[str, int] = {}
        if mode == DIGEST_LOOKUP:
            for i, entry in enumerate(self.entries):
                if entry.prompt_digest in self._by_digest:
                    raise CassetteError(
                        f"{self._where()}duplicate digest in records {self._by_digest[entry.prompt_digest] + 1} and {i + 1}"
                    )
                self._by_digest[entry.prompt_digest] = i

    def __len__(self) -> int:
        return len(self.entries)

    def _where(self) -> str:
        return f"{self.source}: " if self.source else ""

    @property
    def remaining(self) -> int:
        return len(self.entries) - len(self._used)

    def serve(self, request: ChatRequest) -> ChatResponse:
        digest = request.digest
        with self._lock:
            if self.mode == STRICT_SEQUENCE:
                if self._cursor >= len(self.entries):
                    raise CassetteError(
                        f"{self._where()}cassette exhausted after {len(self.entries)} entries "
                        f"(unexpected {request.stage.value} request)"
                    )
                index = self._cursor
                entry = self.entries[index]
                if entry.prompt_digest != digest or entry.stage != request.stage:
                    raise CassetteError(
                        f"{self._where()}record {index + 1} is a {entry.stage.value} exchange with digest "
                        f"{entry.prompt_digest[:12]}, request is {request.stage.value} with digest {digest[:12]}"
                    )
                self._cursor += 1
            else:
                index = self._by_digest.get(digest, -1)
                if index < 0:
                    raise CassetteError(f"{self._where()}no recorded exchange for digest {digest[:12]}")
                if index in self._used:
                    raise CassetteError(f"{self._where()}record {index + 1} already served")
                entry = self.entries[index]
            self._used.add(index)
        return entry.response


def _entry_from_record(record: Any, position: int) -> CassetteEntry:
    if not isinstance(record, dict):
        raise ValueError("expected a JSON object")
    try:
        stage = Stage(record["stage"])
        prompt_text = record["prompt_text"]
        response_text = record["response_text"]
        digest = record["prompt_digest"]
        seq = record["seq"]
        finish = FinishState(record.get("finish_state", FinishState.COMPLETE.value))
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from None
    if not isinstance(prompt_text, str) or not isinstance(response_text, str):
        raise ValueError("prompt_text and response_text must be strings")
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise ValueError("seq must be an integer")
    if digest != request_digest(stage, prompt_text):
        raise ValueError("prompt_digest does not match stage and prompt_text")
    return CassetteEntry(seq, stage, digest, prompt_text, response_text, finish)


def load_cassette(path: str | Path, mode: str = STRICT_SEQUENCE) -> Cassette:
    """Read a JSONL cassette; records keep file order."""
    path = Path(path)
    entries = []
    with path.open(encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    for position, line in enumerate(lines, start=1):
        try:
            entries.append(_entry_from_record(json.loads(line), position))
        except (ValueError, json.JSONDecodeError) as exc:
            raise CassetteError(f"{path}: malformed record index {position}: {exc}") from None
    return Cassette(entries, mode=mode, source=str(path))


class ReplayBackend:
    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def send(self, request: ChatRequest) -> ChatResponse:
        return self.cassette.serve(request)


class RecordingBackend:
    """Forwards to ``inner`` and appends every exchange to a JSONL cassette."""

    def __init__(self, inner: Backend, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")
        self._seq = 0
        self._lock = threading.Lock()

    def send(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.send(request)
        with self._lock:
            self._seq += 1
            entry = CassetteEntry(self._seq, request.stage, request.digest, request.prompt_text,
                                  response.text, response.finish_state)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")
        return response


class ScriptedBackend:
    """Answers from a Python callable; used for tests and for authoring fixture cassettes."""

    def __init__(self, responder: Callable[[ChatRequest], str | ChatResponse]):
        self.responder = responder
        self.requests: list[ChatRequest] = []

    def send(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        reply = self.responder(request)
        return reply if isinstance(reply, ChatResponse) else ChatResponse(reply)


class HttpBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    The credential comes from ``SCG_API_KEY`` only.
    """

    def __init__(self, base_url: str, model_id: str, api_key: str | None = None, timeout_s: float = 300.0,
                 client: httpx.Client | None = None):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise GatewayError(f"live backend needs the {API_KEY_ENV} environment variable")
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self._client = client or httpx.Client(timeout=timeout_s)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def send(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id or self.model_id,
            "messages": request.messages(),
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            reply = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=self._headers)
        except httpx.HTTPError as exc:
            raise GatewayError(f"request to {self.base_url} failed: {exc}") from exc
        if reply.status_code in (401, 403):
            raise GatewayError(f"authentication rejected by {self.base_url} (HTTP {reply.status_code})")
        if reply.status_code >= 400:
            raise GatewayError(f"HTTP {reply.status_code} from {self.base_url}: {reply.text[:500]}")
        try:
            body = reply.json()
            choice = body["choices"][0]
            message = choice.get("message") or {}
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"unexpected response body from {self.base_url}: {exc}") from None
        text = message.get("content") or ""
        reason = choice.get("finish_reason")
        if message.get("refusal") or reason == "content_filter":
            state = FinishState.REFUSED
        elif reason == "length":
            state = FinishState.TRUNCATED
        else:
            state = FinishState.COMPLETE
        usage = {k: v for k, v in (body.get("usage") or {}).items() if isinstance(v, int)}
        return ChatResponse(text, state, usage)


Listener = Callable[[ChatRequest, ChatResponse, int], None]


class Gateway:
    """Entry point for all model calls.

    ``complete`` retries truncated and refused responses; ``ask`` also
    retries replies the caller's parser rejects.  Both stop after
    ``max_retries`` extra attempts.
    """

    def __init__(self, backend: Backend, max_retries: int = 2, rate_limiter: RateLimiter | None = None):
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self.backend = backend
        self.max_retries = max_retries
        self.rate_limiter = rate_limiter

    def _send(self, request: ChatRequest) -> ChatResponse:
        if self.rate_limiter is not None:
            self.rate_limiter.acquire()
        return self.backend.send(request)

    def complete(self, request: ChatRequest, listener: Listener | None = None) -> ChatResponse:
        last = None
        for attempt in range(1, self.max_retries + 2):
            response = self._send(request)
            if listener is not None:
                listener(request, response, attempt)
            if response.finish_state == FinishState.COMPLETE:
                return response
            last = response.finish_state
            log.warning("%s response %s (attempt %d)", request.stage.value, last.value, attempt)
        raise GatewayError(f"{request.stage.value}: response {last.value} after {self.max_retries + 1} attempts")

    def ask(self, request: ChatRequest, parse: Callable[[str], T], listener: Listener | None = None,
            on_parse_error: Callable[[ParseError], None] | None = None) -> T:
        """Complete ``request`` and parse the reply, retrying unparseable replies.

        Raises the last :class:`ParseError` once the budget is spent.
        """
        error: ParseError | None = None
        for _ in range(self.max_retries + 1):
            response = self.complete(request, listener)
            try:
                return parse(response.text)
            except ParseError as exc:
                error = exc
                if on_parse_error is not None:
                    on_parse_error(exc)
        assert error is not None
        raise error
