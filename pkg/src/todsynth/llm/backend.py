"""Chat-completion backends: a scripted mock and an HTTP client.

Both expose ``complete(request) -> str``.  The remote client speaks the
common ``/chat/completions`` JSON shape.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from todsynth.errors import (
    AuthError,
    BackendError,
    MalformedResponse,
    RateLimited,
    Timeout,
)
from todsynth.llm.prompts import PLACEHOLDER

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
SIMULATION_TEMPERATURE = 0.7
JUDGE_TEMPERATURE = 0.0


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = SIMULATION_TEMPERATURE
    max_tokens: int = 512
    model_id: str = "mock"

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a completion request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def from_prompt(cls, prompt: str, system: str | None = None, **kw: Any) -> "CompletionRequest":
        msgs = [ChatMessage("system", system)] if system else []
        msgs.append(ChatMessage("user", prompt))
        return cls(tuple(msgs), **kw)

    def to_payload(self) -> dict[str, Any]:
        return {
            "model": self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


class Backend(Protocol):
    model_id: str

    def complete(self, request: CompletionRequest) -> str: ...


def complete(backend: Backend, request: CompletionRequest) -> str:
    return backend.complete(request)


# -- mock -------------------------------------------------------------------------


@dataclass(frozen=True)
class MockRule:
    """First-match rule.  ``match`` is a substring or ``"*"``; ``regex`` may be
    used instead, in which case named groups fill ``{name}`` slots in ``reply``.
    A rule with ``error`` raises :class:`BackendError` instead of replying."""

    reply: str = ""
    match: str | None = None
    regex: str | None = None
    error: str | None = None

    def apply(self, text: str) -> str | None:
        if self.regex is not None:
            m = re.search(self.regex, text, flags=re.MULTILINE)
            if m is None:
                return None
            groups = m.groupdict()
            out = PLACEHOLDER.sub(lambda g: groups.get(g.group(1)) or g.group(0), self.reply)
        elif self.match == "*" or (self.match is not None and self.match in text):
            out = self.reply
        else:
            return None
        if self.error is not None:
            raise BackendError(self.error)
        return out


def _echo_last_line(request: CompletionRequest) -> str:
    lines = [ln.strip() for ln in request.messages[-1].content.splitlines() if ln.strip()]
    return lines[-1] if lines else "ok"


class MockBackend:
    """Deterministic scripted backend; the reply depends only on the request.

    When no rule matches, ``fallback`` decides: ``"echo"`` returns the last
    non-empty line of the final message, ``"error"`` raises.
    """

    def __init__(self, rules: Sequence[MockRule] = (), fallback: str = "echo",
                 responder: Callable[[CompletionRequest], str | None] | None = None,
                 model_id: str = "mock"):
        if fallback not in ("echo", "error"):
            raise ValueError("fallback must be 'echo' or 'error'")
        self.rules = list(rules)
        self.fallback = fallback
        self.responder = responder
        self.model_id = model_id
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str | Path, **kw: Any) -> "MockBackend":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: bad mock rule: {exc.msg}") from exc
                rules.append(MockRule(reply=raw.get("reply", ""), match=raw.get("match"),
                                      regex=raw.get("regex"), error=raw.get("error")))
        return cls(rules, **kw)

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(request)
        if self.responder is not None:
            out = self.responder(request)
            if out is not None:
                return out
        text = "\n".join(m.content for m in request.messages)
        for rule in self.rules:
            out = rule.apply(text)
            if out is not None:
                return out
        if self.fallback == "error":
            raise BackendError("no mock rule matched the request")
        return _echo_last_line(request)


# -- remote -----------------------------------------------------------------------


@dataclass
class BackendConfig:
    kind: str = "mock"
    endpoint: str | None = None
    api_key_env: str | None = "OPENAI_API_KEY"
    model: str = "mock"
    max_concurrency: int = 4
    timeout: float = 60.0
    attempts: int = 3
    backoff_base: float = 1.0
    backoff_cap: float = 16.0
    script: str | None = None
    fallback: str = "echo"
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: Path | None = None) -> "BackendConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        cfg = cls(**{k: v for k, v in raw.items() if k in known},
                  extra={k: v for k, v in raw.items() if k not in known})
        if cfg.kind not in ("mock", "remote"):
            raise ValueError(f"backend kind must be 'mock' or 'remote', got {cfg.kind!r}")
        if cfg.script and base_dir is not None and not Path(cfg.script).is_absolute():
            cfg.script = str(base_dir / cfg.script)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)


class RemoteBackend:
    """Blocking client for an OpenAI-style chat-completions endpoint.

    Retries 429, 5xx, timeouts and connection errors with capped exponential
    backoff; at most ``max_concurrency`` requests are in flight at once.
    """

    def __init__(self, endpoint: str, model_id: str, api_key: str | None = None, *,
                 max_concurrency: int = 4, timeout: float = 60.0, attempts: int = 3,
                 backoff_base: float = 1.0, backoff_cap: float = 16.0,
                 client: httpx.Client | None = None):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self.endpoint = endpoint
        self.model_id = model_id
        self.attempts = attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._slots = threading.BoundedSemaphore(max_concurrency)
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict[str, Any]) -> httpx.Response:
        with self._slots:
            return self._client.post(self.endpoint, json=payload)

    def complete(self, request: CompletionRequest) -> str:
        payload = request.to_payload()
        payload["model"] = self.model_id
        last: BackendError | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1)))
            try:
                resp = self._post(payload)
            except httpx.TimeoutException as exc:
                last = Timeout(f"request timed out: {exc}")
                continue
            except httpx.TransportError as exc:
                last = BackendError(f"transport error: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429:
                last = RateLimited(f"rate limited after {attempt + 1} attempt(s)")
                continue
            if resp.status_code >= 500:
                last = BackendError(f"server error HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return _parse_completion(resp)
        log.warning("giving up after %d attempts: %s", self.attempts, last)
        assert last is not None
        raise last


def _parse_completion(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected completion payload: {resp.text[:200]}") from exc
    if not isinstance(content, str):
        raise MalformedResponse("completion content is not a string")
    return content


def make_backend(config: BackendConfig) -> Backend:
    if config.kind == "mock":
        if config.script:
            return MockBackend.from_jsonl(config.script, fallback=config.fallback, model_id=config.model)
        return MockBackend(fallback=config.fallback, model_id=config.model)
    if not config.endpoint:
        raise ValueError("remote backend needs an endpoint")
    key = os.environ.get(config.api_key_env) if config.api_key_env else None
    return RemoteBackend(
        config.endpoint,
        config.model,
        key,
        max_concurrency=config.max_concurrency,
        timeout=config.timeout,
        attempts=config.attempts,
        backoff_base=config.backoff_base,
        backoff_cap=config.backoff_cap,
    )
