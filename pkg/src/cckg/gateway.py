"""Prompt templates and chat-completion transport.

Rendering is strict: every placeholder in a template body must be bound,
and no extra bindings are accepted. Generation goes through a `Gateway`
that retries transient transport failures with exponential backoff and
bounds the number of in-flight requests. Two backends ship with the
toolkit: an OpenAI-compatible HTTP client and a scripted mock keyed by
request tag for offline, deterministic runs.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .kb import FormatError

log = logging.getLogger(__name__)

__all__ = [
    "BackendRejected",
    "BackendUnavailable",
    "Gateway",
    "GenerationRequest",
    "GenerationResult",
    "HttpChatBackend",
    "MissingPlaceholder",
    "PromptTemplate",
    "ScriptedBackend",
    "TransientBackendError",
    "UnknownPlaceholder",
    "render",
]

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

DEFAULT_MAX_TOKENS = 2048
DEFAULT_MAX_ATTEMPTS = 3


class MissingPlaceholder(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing placeholder {name!r}")


class UnknownPlaceholder(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown placeholder {name!r}")


class TransientBackendError(RuntimeError):
    """Retryable transport failure; backends raise it to request another attempt."""


class BackendUnavailable(RuntimeError):
    """All retry attempts exhausted."""


class BackendRejected(RuntimeError):
    """Non-retryable backend refusal; carries the backend's message."""


@dataclass(frozen=True)
class PromptTemplate:
    """A fill-in text template; placeholders are `{name}` markers in the body.

    The required placeholder set is derived from the body, so rendering
    with exactly those bindings can never leave a marker unresolved.
    """

    id: str
    body: str
    required: frozenset[str] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "required", frozenset(_PLACEHOLDER.findall(self.body)))


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute bindings into the template body, strictly one pass."""
    missing = template.required - bindings.keys()
    if missing:
        raise MissingPlaceholder(sorted(missing)[0])
    extra = bindings.keys() - template.required
    if extra:
        raise UnknownPlaceholder(sorted(extra)[0])
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template.body)


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = 1.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    tag: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    backend: str
    latency: float
    attempts: int


class ScriptedBackend:
    """Deterministic mock backend: canned responses keyed by request tag.

    Fixture files are JSON lines of {"tag": ..., "response_text": ...};
    unknown tags are rejected so a missing fixture fails loudly instead of
    silently producing garbage.
    """

    def __init__(self, responses: Mapping[str, str], name: str = "inline"):
        self._responses = dict(responses)
        self.id = f"scripted:{name}"

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        responses: dict[str, str] = {}
        p = Path(path)
        with p.open("r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"not valid JSON: {exc.msg}", line_no) from None
                if not isinstance(obj, dict) or "tag" not in obj or "response_text" not in obj:
                    raise FormatError("record needs 'tag' and 'response_text'", line_no)
                tag = str(obj["tag"])
                if tag in responses:
                    raise FormatError(f"duplicate tag {tag!r}", line_no)
                responses[tag] = str(obj["response_text"])
        return cls(responses, name=p.name)

    def complete(self, prompt: str, tag: str, temperature: float, max_tokens: int) -> str:
        try:
            return self._responses[tag]
        except KeyError:
            raise BackendRejected(f"no scripted response for tag {tag!r}") from None


class HttpChatBackend:
    """OpenAI-compatible chat-completions client.

    POSTs to `{base_url}/chat/completions` with a single user message.
    Connection errors, 429 and 5xx statuses are transient (retried by the
    gateway); other non-2xx statuses are rejections.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "CCKG_API_KEY",
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()
        self.id = f"http:{self.base_url}:{model}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str, tag: str, temperature: float, max_tokens: int) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        try:
            resp = self._session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=self._headers(),
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"status {resp.status_code}")
        if not resp.ok:
            raise BackendRejected(f"status {resp.status_code}: {resp.text[:300]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendRejected(f"malformed completion payload: {exc}") from None


class Gateway:
    """Dispatches generation requests with bounded retries and concurrency.

    Shareable across threads: per-request state is local and the number of
    concurrent backend calls is capped by `max_in_flight`. Completion order
    of concurrent calls is not guaranteed. Prompt text is passed to the
    backend untouched; only trailing whitespace of the response is trimmed.
    """

    def __init__(
        self,
        backend,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = 0.5,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self._backend = backend
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._slots = threading.Semaphore(max_in_flight)
        self._sleep = sleep

    @property
    def backend_id(self) -> str:
        return self._backend.id

    def generate(self, req: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        last: TransientBackendError | None = None
        for attempt in range(1, self._max_attempts + 1):
            try:
                with self._slots:
                    text = self._backend.complete(
                        req.prompt, req.tag, req.temperature, req.max_tokens
                    )
                return GenerationResult(
                    text=text.rstrip(),
                    backend=self._backend.id,
                    latency=time.perf_counter() - start,
                    attempts=attempt,
                )
            except TransientBackendError as exc:
                last = exc
                if attempt < self._max_attempts:
                    delay = self._backoff_base * 2 ** (attempt - 1)
                    log.warning(
                        "transient failure on %r (attempt %d/%d), retrying in %.2fs: %s",
                        req.tag, attempt, self._max_attempts, delay, exc,
                    )
                    self._sleep(delay)
        raise BackendUnavailable(
            f"backend {self._backend.id} failed after {self._max_attempts} attempts: {last}"
        )
