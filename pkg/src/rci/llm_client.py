"""Chat-completion clients: a generic HTTP endpoint wrapper and deterministic
scripted mocks for tests and offline runs."""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import requests

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")
FINISH_REASONS = ("stop", "length", "stop_sequence")


class ClientError(Exception):
    pass


class TransportError(ClientError):
    """Endpoint unreachable or persistently failing; carries the raw payload."""

    def __init__(self, message: str, attempts: int, payload: Any = None):
        super().__init__(message)
        self.attempts = attempts
        self.payload = payload


class ProtocolError(ClientError):
    """Endpoint answered with something we cannot interpret."""

    def __init__(self, message: str, payload: Any = None):
        super().__init__(message)
        self.payload = payload


class MockExhaustedError(ClientError):
    """The scripted mock ran out of replies: a test harness bug."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not isinstance(self.content, str):
            raise ValueError("content must be text")


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 1.0
    max_tokens: int = 2048
    stop_sequences: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != "system":
            raise ValueError("first message must have role 'system'")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    finish_reason: str = "stop"
    token_logprobs: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self):
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"finish_reason must be one of {FINISH_REASONS}")
        if self.token_logprobs is not None:
            object.__setattr__(self, "token_logprobs", tuple(self.token_logprobs))
            for token, logprob in self.token_logprobs:
                if logprob > 0.0:
                    raise ValueError(f"logprob for {token!r} is positive: {logprob}")


def _apply_stop_sequences(text: str, stop_sequences: tuple[str, ...]) -> tuple[str, bool]:
    """Truncate at the first occurrence of any stop sequence (kept as suffix)."""
    cut = None
    for stop in stop_sequences:
        idx = text.find(stop)
        if idx != -1:
            end = idx + len(stop)
            if cut is None or end < cut:
                cut = end
    if cut is None:
        return text, False
    return text[:cut], True


class HttpChatClient:
    """POSTs chat-completions JSON to a configurable URL.

    Retries transport failures and HTTP 429/5xx with exponential backoff
    (base 0.5 s, factor 2, 3 attempts total by default). The bearer token is
    read from the RCI_API_KEY environment variable when present.
    """

    def __init__(
        self,
        url: str,
        model: str,
        *,
        api_key_env: str = "RCI_API_KEY",
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        backoff_factor: float = 2.0,
        request_timeout: float = 300.0,
        want_logprobs: bool = False,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self.request_timeout = request_timeout
        self.want_logprobs = want_logprobs
        self._session = session or requests.Session()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, req: GenerationRequest) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.stop_sequences:
            payload["stop"] = list(req.stop_sequences)
        if req.seed is not None:
            payload["seed"] = req.seed
        if self.want_logprobs:
            payload["logprobs"] = True
        return payload

    def generate(self, req: GenerationRequest) -> GenerationResult:
        payload = self._payload(req)
        last_detail: Any = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._session.post(
                    self.url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.request_timeout,
                )
            except requests.RequestException as exc:
                last_detail = repr(exc)
                log.warning("transport failure on attempt %d/%d: %s", attempt, self.max_attempts, exc)
            else:
                if response.status_code == 429 or response.status_code >= 500:
                    last_detail = response.text
                    log.warning(
                        "retryable HTTP %d on attempt %d/%d",
                        response.status_code,
                        attempt,
                        self.max_attempts,
                    )
                elif response.status_code != 200:
                    raise ProtocolError(
                        f"endpoint returned HTTP {response.status_code}", payload=response.text
                    )
                else:
                    return self._parse(response.text, req)
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base * self.backoff_factor ** (attempt - 1))
        raise TransportError(
            f"endpoint failed after {self.max_attempts} attempts",
            attempts=self.max_attempts,
            payload=last_detail,
        )

    def _parse(self, body: str, req: GenerationRequest) -> GenerationResult:
        try:
            obj = json.loads(body)
            choice = obj["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed endpoint response: {exc}", payload=body) from exc
        if not isinstance(text, str):
            raise ProtocolError("response content is not text", payload=body)
        token_logprobs = None
        logprob_content = (choice.get("logprobs") or {}).get("content")
        if logprob_content is not None:
            try:
                token_logprobs = tuple(
                    (entry["token"], min(float(entry["logprob"]), 0.0))
                    for entry in logprob_content
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed logprobs: {exc}", payload=body) from exc
        finish_reason = finish if finish in ("stop", "length") else "stop"
        text, truncated = _apply_stop_sequences(text, req.stop_sequences)
        if truncated:
            finish_reason = "stop_sequence"
            token_logprobs = None  # token alignment is lost after truncation
        return GenerationResult(text=text, finish_reason=finish_reason, token_logprobs=token_logprobs)


class MockChatClient:
    """Replays a fixed list of segments, one per generate() call."""

    def __init__(self, segments: list[str]):
        if not segments:
            raise ValueError("mock script must contain at least one segment")
        self._segments = list(segments)
        self._index = 0
        self._lock = threading.Lock()

    def generate(self, req: GenerationRequest) -> GenerationResult:
        with self._lock:
            if self._index >= len(self._segments):
                raise MockExhaustedError(
                    f"mock script exhausted after {len(self._segments)} calls"
                )
            text = self._segments[self._index]
            self._index += 1
        text, truncated = _apply_stop_sequences(text, req.stop_sequences)
        return GenerationResult(text=text, finish_reason="stop_sequence" if truncated else "stop")


class RuleMockClient:
    """Stateless content-conditional mock: the first rule whose ``match`` is a
    substring of the conversation text supplies the reply."""

    def __init__(self, rules: list[dict[str, str]]):
        if not rules:
            raise ValueError("rule mock needs at least one rule")
        for rule in rules:
            if "match" not in rule or "reply" not in rule:
                raise ValueError(f"rule must have 'match' and 'reply' keys: {rule!r}")
        self._rules = [dict(r) for r in rules]

    def generate(self, req: GenerationRequest) -> GenerationResult:
        conversation = "\n".join(m.content for m in req.messages)
        for rule in self._rules:
            if rule["match"] in conversation:
                text, truncated = _apply_stop_sequences(rule["reply"], req.stop_sequences)
                return GenerationResult(
                    text=text, finish_reason="stop_sequence" if truncated else "stop"
                )
        raise MockExhaustedError("no mock rule matched the conversation")


def mock_from_script(segments: list[str]) -> MockChatClient:
    return MockChatClient(segments)


@dataclass
class MockScript:
    """Parsed mock script file; builds fresh clients so concurrent rollouts
    never share a playback position."""

    segments: list[str] | None = None
    rules: list[dict[str, str]] | None = None
    path: str | None = None

    def make_client(self) -> MockChatClient | RuleMockClient:
        if self.rules is not None:
            return RuleMockClient(self.rules)
        return MockChatClient(self.segments or [])

    @property
    def stateless(self) -> bool:
        return self.rules is not None


def load_mock_script(path: str | Path) -> MockScript:
    """Load a mock script file: a JSON array of strings, or of
    {"match": ..., "reply": ...} rule objects."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not raw:
        raise ValueError(f"mock script {path} must be a non-empty JSON array")
    if all(isinstance(item, str) for item in raw):
        return MockScript(segments=list(raw), path=str(path))
    if all(isinstance(item, dict) for item in raw):
        return MockScript(rules=[dict(item) for item in raw], path=str(path))
    raise ValueError(f"mock script {path} mixes strings and rule objects")
