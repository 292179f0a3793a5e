"""Minimal chat-completion client over any endpoint speaking the common
chat API shape, plus a scripted in-process fake for offline runs.

Deterministic by default (temperature 0), bounded retries with exponential
backoff, full request/response logging into the run's trace directory.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import AuthError, ContextOverflowError, LlmHttpError, LlmScriptError

VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in VALID_ROLES:
            raise ValueError(f"bad role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")

    def as_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class LlmParams:
    model: str = "default"
    temperature: float = 0.0
    max_output_tokens: int | None = None


def validate_conversation(messages: list[ChatMessage]) -> None:
    if not messages:
        raise ValueError("empty conversation")
    if messages[0].role == "assistant":
        raise ValueError("conversation must begin with a system or user message")


class TraceLogger:
    """Numbered request/response JSON files under a trace directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._seq = 0

    def log(self, kind: str, payload) -> None:
        self._seq += 1
        path = self.directory / f"{self._seq:04d}_{kind}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, ensure_ascii=False, sort_keys=True)


class HttpLlmClient:
    """POSTs {model, messages, temperature} and returns the first completion.

    Retries transient failures (connection errors, 429, 5xx) with exponential
    backoff up to max_attempts; auth errors are never retried; context-window
    overflows surface as ContextOverflowError for the caller to handle.
    """

    def __init__(self, endpoint: str, api_key: str | None = None,
                 max_attempts: int = 3, backoff_s: float = 0.5,
                 request_timeout_s: float = 180.0,
                 trace_dir: str | Path | None = None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.request_timeout_s = request_timeout_s
        self.trace = TraceLogger(trace_dir) if trace_dir else None

    def chat(self, messages: list[ChatMessage], params: LlmParams = LlmParams()) -> str:
        validate_conversation(messages)
        payload = {
            "model": params.model,
            "messages": [m.as_dict() for m in messages],
            "temperature": params.temperature,
        }
        if params.max_output_tokens is not None:
            payload["max_tokens"] = params.max_output_tokens

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            if self.trace:
                self.trace.log("request", {"attempt": attempt, "payload": payload})
            try:
                response = requests.post(self.endpoint, json=payload,
                                         headers=headers,
                                         timeout=self.request_timeout_s)
            except requests.RequestException as exc:
                last_error = LlmHttpError(f"request failed: {exc}")
                if self.trace:
                    self.trace.log("response", {"attempt": attempt, "error": str(exc)})
                self._sleep(attempt)
                continue

            body = _safe_json(response)
            if self.trace:
                self.trace.log("response", {"attempt": attempt,
                                            "status": response.status_code,
                                            "body": body})

            if response.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({response.status_code})")
            if response.status_code == 400 and _looks_like_overflow(body):
                raise ContextOverflowError(_error_text(body))
            if response.status_code == 200:
                try:
                    return body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise LlmHttpError(f"malformed completion payload: {body!r}") from exc
            if response.status_code == 429 or response.status_code >= 500:
                last_error = LlmHttpError(_error_text(body), status=response.status_code)
                self._sleep(attempt)
                continue
            raise LlmHttpError(_error_text(body), status=response.status_code)

        raise last_error or LlmHttpError("llm request failed")

    def _sleep(self, attempt: int) -> None:
        if attempt < self.max_attempts:
            time.sleep(self.backoff_s * (2 ** (attempt - 1)))


def _safe_json(response) -> dict:
    try:
        return response.json()
    except ValueError:
        return {"raw": response.text}


def _error_text(body: dict) -> str:
    if isinstance(body.get("error"), dict):
        return str(body["error"].get("message", body["error"]))
    return str(body)


_OVERFLOW_HINTS = ("context length", "context window", "maximum context",
                   "too many tokens", "context_length_exceeded")


def _looks_like_overflow(body: dict) -> bool:
    return any(hint in _error_text(body).lower() for hint in _OVERFLOW_HINTS)


@dataclass
class ScriptedLlm:
    """Replays canned assistant replies in order; optional `match` substrings
    are checked against the concatenated prompt so tests can pin the flow.

    Records every call for assertions.
    """

    script: list
    calls: list = field(default_factory=list)
    _cursor: int = 0

    def chat(self, messages: list[ChatMessage], params: LlmParams = LlmParams()) -> str:
        validate_conversation(messages)
        self.calls.append(([ChatMessage(m.role, m.content) for m in messages], params))
        if self._cursor >= len(self.script):
            raise LlmScriptError(
                f"llm script exhausted after {len(self.script)} replies; "
                f"last prompt:\n{messages[-1].content[:500]}")
        entry = self.script[self._cursor]
        self._cursor += 1
        if isinstance(entry, str):
            return entry
        match = entry.get("match")
        if match:
            haystack = "\n".join(m.content for m in messages)
            if match not in haystack:
                raise LlmScriptError(
                    f"llm script entry {self._cursor} expected {match!r} in the prompt")
        return entry["reply"]

    @property
    def exhausted(self) -> bool:
        return self._cursor >= len(self.script)


def load_llm_script(path) -> ScriptedLlm:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise LlmScriptError(f"llm script {path} must be a JSON list")
    return ScriptedLlm(script=raw)


def make_llm_client(endpoint: str, api_key: str | None = None,
                    trace_dir: str | Path | None = None):
    """Build a client from an endpoint spec.

    "fake:<script.json>" wires the scripted fake (offline demos/CI);
    anything else is treated as an HTTP chat-completions URL.
    """
    if endpoint.startswith("fake:"):
        return load_llm_script(endpoint[len("fake:"):])
    return HttpLlmClient(endpoint, api_key=api_key, trace_dir=trace_dir)
