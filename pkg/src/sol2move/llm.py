"""Chat-completion backends: a live HTTP client and a scripted replay backend."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import requests

from .errors import ScriptExhausted, Sol2MoveError

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM_PROMPT = "You are an expert Move smart contract engineer."
MAX_EXEMPLARS = 5


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if not self.content:
            raise ValueError("chat message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    backoff: float = 1.0  # seconds, doubled after every retry


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-3.5-turbo-1106"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    timeout: float = 120.0
    retry_policy: RetryPolicy = field(default_factory=RetryPolicy)
    api_key_env: str = "OPENAI_API_KEY"
    max_in_flight: int = 4

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class LlmResponse:
    content: str
    usage: dict = field(default_factory=dict)
    latency: float = 0.0


class LlmError(Sol2MoveError):
    kind = "llm"


class TransportError(LlmError):
    kind = "transport"


class RateLimitedError(LlmError):
    kind = "rate_limited"

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class BadResponseError(LlmError):
    kind = "bad_response"


class LlmTimeoutError(LlmError):
    kind = "timeout"


class LlmBackend(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> LlmResponse: ...


def _retry_after(resp: requests.Response) -> float | None:
    value = resp.headers.get("Retry-After")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


def _request_once(cfg: LlmConfig, body: dict, headers: dict, session) -> LlmResponse:
    start = time.monotonic()
    try:
        resp = session.post(cfg.endpoint_url, json=body, headers=headers, timeout=cfg.timeout)
    except requests.Timeout as exc:
        raise LlmTimeoutError(f"request timed out after {cfg.timeout}s") from exc
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if resp.status_code == 429:
        raise RateLimitedError("rate limited (HTTP 429)", _retry_after(resp))
    if resp.status_code >= 500:
        raise TransportError(f"server error HTTP {resp.status_code}: {resp.text[:300]}")
    if resp.status_code >= 400:
        raise BadResponseError(f"HTTP {resp.status_code}: {resp.text[:1000]}")
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BadResponseError(f"malformed completion body: {resp.text[:300]!r}") from exc
    if not isinstance(content, str):
        raise BadResponseError("completion content is not a string")
    return LlmResponse(content, data.get("usage") or {}, time.monotonic() - start)


def complete(
    cfg: LlmConfig,
    messages: Sequence[ChatMessage],
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> LlmResponse:
    """POST one chat completion, retrying transport failures, timeouts and 429s."""
    if not messages:
        raise ValueError("messages must be non-empty")
    session = session or requests.Session()
    body = {
        "model": cfg.model_name,
        "messages": [m.to_dict() for m in messages],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(cfg.api_key_env) if cfg.api_key_env else None
    if token:
        headers["Authorization"] = f"Bearer {token}"

    policy = cfg.retry_policy
    for attempt in range(policy.max_retries + 1):
        try:
            return _request_once(cfg, body, headers, session)
        except (TransportError, LlmTimeoutError, RateLimitedError) as exc:
            if attempt == policy.max_retries:
                raise
            wait = policy.backoff * (2**attempt)
            if isinstance(exc, RateLimitedError) and exc.retry_after:
                wait = max(wait, exc.retry_after)
            logger.warning("LLM request failed (%s), retry %d/%d in %.1fs", exc, attempt + 1, policy.max_retries, wait)
            sleep(wait)
    raise AssertionError("unreachable")


class ChatClient:
    """Live backend bound to one config; caps concurrent in-flight requests."""

    def __init__(self, cfg: LlmConfig, session: requests.Session | None = None, sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._session = session or requests.Session()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    @property
    def model_name(self) -> str:
        return self.cfg.model_name

    def complete(self, messages: Sequence[ChatMessage]) -> LlmResponse:
        with self._slots:
            return complete(self.cfg, messages, self._session, self._sleep)


class ReplayBackend:
    """Returns scripted responses in order and records every prompt it receives."""

    def __init__(self, responses: Iterable[str], model_name: str = "replay"):
        self._responses = list(responses)
        self._next = 0
        self.model_name = model_name
        self.calls: list[list[ChatMessage]] = []

    @property
    def remaining(self) -> int:
        return len(self._responses) - self._next

    def complete(self, messages: Sequence[ChatMessage]) -> LlmResponse:
        self.calls.append(list(messages))
        if self._next >= len(self._responses):
            raise ScriptExhausted(f"replay script of {len(self._responses)} responses exhausted")
        content = self._responses[self._next]
        self._next += 1
        return LlmResponse(content)

    @property
    def prompts(self) -> list[str]:
        """Content of the last user message of each captured call."""
        return [next((m.content for m in reversed(c) if m.role is Role.USER), "") for c in self.calls]


def replay_complete(backend: ReplayBackend, messages: Sequence[ChatMessage]) -> LlmResponse:
    return backend.complete(messages)


# --------------------------------------------------------------------------
# prompting modes


@dataclass(frozen=True)
class FewShotExemplar:
    input: str
    output: str

    def __post_init__(self):
        if not self.input or not self.output:
            raise ValueError("exemplar input and output must be non-empty")


def build_fewshot_messages(
    exemplars: Sequence[FewShotExemplar],
    input: str,
    system: str = DEFAULT_SYSTEM_PROMPT,
) -> list[ChatMessage]:
    """System message, then (user, assistant) per exemplar, then the real input.

    No exemplars gives the zero-shot shape.
    """
    if len(exemplars) > MAX_EXEMPLARS:
        raise ValueError(f"at most {MAX_EXEMPLARS} exemplars are supported, got {len(exemplars)}")
    messages = [ChatMessage(Role.SYSTEM, system)]
    for ex in exemplars:
        messages.append(ChatMessage(Role.USER, ex.input))
        messages.append(ChatMessage(Role.ASSISTANT, ex.output))
    messages.append(ChatMessage(Role.USER, input))
    return messages


def load_exemplars(path: str | Path) -> list[FewShotExemplar]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    return [FewShotExemplar(r["input"], r["output"]) for r in records]
