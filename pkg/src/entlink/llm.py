"""LLM completion contract: OpenAI-compatible HTTP client, scripted mock,
and plain-text prompt templates.

The mock makes the whole pipeline deterministic and is the reference
backend for tests. Script format (JSONL):

  match mode:  {"match": "<substring>", "response": "<text>"} per line,
               first match in file order wins;
  queue mode:  {"response": "<text>"} per line, consumed sequentially.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx


class TransportError(RuntimeError):
    """The completion backend failed after exhausting any retries."""


class ScriptMissError(LookupError):
    """The mock script has no entry for a prompt (tests must be total)."""


class TemplateError(ValueError):
    """A template could not be found or rendered."""


@dataclass(frozen=True)
class LlmRequest:
    user: str
    system: str | None = None
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


class LlmClient(Protocol):
    def complete(self, req: LlmRequest) -> str: ...


# --- prompt templates -------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{([a-zA-Z_][a-zA-Z0-9_]*)\}")

TEMPLATE_NAMES = ("interpret", "select", "validate", "reselect")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str


def render(tpl: PromptTemplate, variables: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution.

    Substituted values are never re-scanned, so values containing brace
    characters pass through verbatim.
    """

    def _sub(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in variables:
            raise TemplateError(f"unresolved placeholder: {name}")
        return variables[name]

    return _PLACEHOLDER.sub(_sub, tpl.body)


def load_template(name: str, prompts_dir: str | Path | None = None) -> PromptTemplate:
    """Load a template by name from prompts_dir, or the packaged default."""
    if prompts_dir:
        path = Path(prompts_dir) / f"{name}.txt"
        if not path.exists():
            raise TemplateError(f"template '{name}' not found in {prompts_dir}")
        body = path.read_text(encoding="utf-8")
    else:
        try:
            body = (
                resources.files("entlink").joinpath("prompts", f"{name}.txt").read_text("utf-8")
            )
        except FileNotFoundError:
            raise TemplateError(f"no packaged template named '{name}'") from None
    return PromptTemplate(name=name, body=body)


def load_templates(prompts_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    return {name: load_template(name, prompts_dir) for name in TEMPLATE_NAMES}


# --- scripted mock ----------------------------------------------------------


class MockLlmClient:
    """Deterministic scripted client; thread-safe in both modes."""

    def __init__(self, entries: Sequence[Mapping[str, str]]):
        rules: list[tuple[str, str]] = []
        queue: deque[str] = deque()
        modes = {"match" if "match" in e else "queue" for e in entries}
        if len(modes) > 1:
            raise ValueError("mock script mixes match-mode and queue-mode entries")
        self.mode = modes.pop() if modes else "match"
        for i, entry in enumerate(entries):
            response = entry.get("response")
            if not isinstance(response, str):
                raise ValueError(f"mock script entry {i}: missing 'response'")
            if self.mode == "match":
                pattern = entry.get("match")
                if not isinstance(pattern, str):
                    raise ValueError(f"mock script entry {i}: missing 'match'")
                rules.append((pattern, response))
            else:
                queue.append(response)
        self._rules = rules
        self._queue = queue
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockLlmClient":
        entries = []
        with Path(path).open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"mock script line {line_no}: {exc.msg}") from exc
        return cls(entries)

    def complete(self, req: LlmRequest) -> str:
        if self.mode == "queue":
            with self._lock:
                if not self._queue:
                    raise ScriptMissError(
                        f"mock queue exhausted for prompt: {req.user[:80]!r}"
                    )
                return self._queue.popleft()
        for pattern, response in self._rules:
            if pattern in req.user:
                return response
        raise ScriptMissError(f"no mock script entry matches prompt: {req.user[:80]!r}")


# --- HTTP client ------------------------------------------------------------


class HttpLlmClient:
    """OpenAI-compatible chat-completions client.

    Retries transient failures (network errors, 429, 5xx) up to `retries`
    times with exponential backoff; enforces a max-in-flight limit so it can
    be shared by concurrent pipeline workers.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
    ):
        if not base_url:
            raise ValueError("base_url must be non-empty")
        if not model:
            raise ValueError("model must be non-empty")
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._model = model
        self._api_key = os.environ.get(api_key_env, "")
        self._retries = retries
        self._backoff = backoff
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._http = httpx.Client(timeout=timeout)

    def complete(self, req: LlmRequest) -> str:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        payload = {
            "model": self._model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"

        last_failure = "no attempt made"
        for attempt in range(self._retries + 1):
            if attempt:
                time.sleep(self._backoff * 2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = self._http.post(self._url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_failure = f"transport failure: {exc}"
                continue
            if resp.status_code == 200:
                return self._extract(resp)
            if resp.status_code == 429 or resp.status_code >= 500:
                last_failure = f"HTTP {resp.status_code}"
                continue
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        raise TransportError(f"exhausted {self._retries} retries ({last_failure})")

    @staticmethod
    def _extract(resp: httpx.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {exc}") from exc
        return content or ""
