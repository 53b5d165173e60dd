"""Client for chat-completion agents, plus a deterministic offline twin.

Both the command interpreter and the policy planner talk to an agent
through this one interface. ``RemoteAgent`` does a single HTTP round trip
per request against any chat-completions-compatible endpoint, with
exponential backoff on transient failures. ``MockAgent`` answers from a
canned table keyed by the request fingerprint and performs no network
operations at all, which the test suite enforces with a transport stub
that fails on use.

Every completed request can be journaled as a JSON line; replaying a
journal builds a MockAgent that reproduces the original session exactly.

Environment variables for the remote backend (values are never logged):
    DEIXIS_ENDPOINT   base URL, e.g. https://api.example.com/v1
    DEIXIS_API_KEY    bearer token
    DEIXIS_MODEL      optional model override
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from string import Template
from typing import Callable, Optional

from .errors import CredentialMissing, HttpError, NoCannedResponse, Timeout

ENDPOINT_ENV = "DEIXIS_ENDPOINT"
API_KEY_ENV = "DEIXIS_API_KEY"
MODEL_ENV = "DEIXIS_MODEL"

DEFAULT_MODEL = "gpt-4o-2024-08-06"
DEFAULT_TEMPERATURE = 1.0

# transport(url, headers, body_bytes, timeout_s) -> (status_code, response_text)
Transport = Callable[[str, dict, bytes, float], tuple[int, str]]


@dataclass(frozen=True)
class AgentRequest:
    template_id: str
    variables: dict[str, str]
    model_id: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 512

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class AgentResponse:
    text: str
    latency_ms: float
    prompt_tokens: int = 0
    completion_tokens: int = 0
    attempts: int = 1

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency must be >= 0")

    @property
    def token_counts(self) -> tuple[int, int]:
        return (self.prompt_tokens, self.completion_tokens)


def variables_fingerprint(variables: dict[str, str]) -> str:
    canonical = json.dumps(variables, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def request_key(request: AgentRequest) -> tuple[str, str]:
    return (request.template_id, variables_fingerprint(request.variables))


def load_prompt_template(template_id: str) -> str:
    path = resources.files("deixis").joinpath(f"prompts/{template_id}.txt")
    return path.read_text(encoding="utf-8")


def render_prompt(template_id: str, variables: dict[str, str]) -> str:
    return Template(load_prompt_template(template_id)).substitute(variables)


class _Journal:
    """Append-only JSON-lines record of request/response pairs."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self._lock = threading.Lock()

    def record(self, request: AgentRequest, response: AgentResponse, t_request: float, t_response: float) -> None:
        if self.path is None:
            return
        entry = {
            "t_request": t_request,
            "t_response": t_response,
            "request": {
                "template_id": request.template_id,
                "variables": dict(request.variables),
                "model_id": request.model_id,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
            "response": {
                "text": response.text,
                "latency_ms": response.latency_ms,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
                "attempts": response.attempts,
            },
        }
        line = json.dumps(entry, sort_keys=True, separators=(",", ":"))
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")


class AgentGateway:
    """Base gateway: journaling plus a single ``complete`` entry point."""

    def __init__(self, journal_path: Optional[str] = None):
        self._journal = _Journal(journal_path)

    def complete(self, request: AgentRequest) -> AgentResponse:
        t_request = time.time()
        response = self._complete(request)
        self._journal.record(request, response, t_request, time.time())
        return response

    def _complete(self, request: AgentRequest) -> AgentResponse:
        raise NotImplementedError


def _fail_on_use(url: str, headers: dict, body: bytes, timeout: float) -> tuple[int, str]:
    raise AssertionError("offline gateway attempted a network operation")


class MockAgent(AgentGateway):
    """Deterministic lookup agent: (template, variables hash) -> canned text."""

    def __init__(
        self,
        canned: dict[tuple[str, str], str],
        journal_path: Optional[str] = None,
        transport: Transport = _fail_on_use,
    ):
        super().__init__(journal_path)
        self._canned = dict(canned)
        self._transport = transport  # kept only to prove it is never touched

    @classmethod
    def from_entries(cls, entries: list[dict], journal_path: Optional[str] = None) -> "MockAgent":
        """Build from [{template_id, variables, text}, ...] records."""
        canned = {
            (e["template_id"], variables_fingerprint(e["variables"])): e["text"] for e in entries
        }
        return cls(canned, journal_path)

    def _complete(self, request: AgentRequest) -> AgentResponse:
        key = request_key(request)
        if key not in self._canned:
            raise NoCannedResponse(
                f"no canned reply for template {request.template_id!r} "
                f"(variables hash {key[1][:12]}...)"
            )
        return AgentResponse(text=self._canned[key], latency_ms=0.0)


@dataclass(frozen=True)
class RetryConfig:
    base_delay_s: float = 0.5
    max_attempts: int = 3
    jitter_s: float = 0.1
    jitter_seed: int = 0


def _default_transport(url: str, headers: dict, body: bytes, timeout: float) -> tuple[int, str]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode("utf-8", errors="replace")
    except TimeoutError as exc:
        raise Timeout(f"request to {url} timed out") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise Timeout(f"request to {url} timed out") from exc
        raise HttpError(0, f"connection failed: {exc.reason}") from exc


class RemoteAgent(AgentGateway):
    """One HTTP round trip per request against a chat-completions endpoint.

    Request body fields: model, messages (one user message holding the
    rendered prompt), temperature, max_tokens. The reply text is read from
    choices[0].message.content.
    """

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        retry: RetryConfig = RetryConfig(),
        transport: Transport = _default_transport,
        timeout_s: float = 30.0,
        journal_path: Optional[str] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(journal_path)
        self._endpoint = endpoint if endpoint is not None else os.environ.get(ENDPOINT_ENV)
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._retry = retry
        self._transport = transport
        self._timeout_s = timeout_s
        self._sleep = sleep
        self._jitter = random.Random(retry.jitter_seed)

    def _complete(self, request: AgentRequest) -> AgentResponse:
        if not self._endpoint:
            raise CredentialMissing(f"{ENDPOINT_ENV} is not set")
        if not self._api_key:
            raise CredentialMissing(f"{API_KEY_ENV} is not set")
        prompt = render_prompt(request.template_id, request.variables)
        model = os.environ.get(MODEL_ENV) or request.model_id
        body = json.dumps(
            {
                "model": model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            }
        ).encode("utf-8")
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {self._api_key}",
        }
        url = self._endpoint.rstrip("/") + "/chat/completions"

        started = time.perf_counter()
        last_error: Exception | None = None
        for attempt in range(1, self._retry.max_attempts + 1):
            try:
                status, text = self._transport(url, headers, body, self._timeout_s)
            except Timeout as exc:
                last_error = exc
                status = None
            if status is not None:
                if 200 <= status < 300:
                    return self._parse_reply(text, started, attempt)
                if status < 500:
                    raise HttpError(status, text[:200])
                last_error = HttpError(status, text[:200])
            if attempt < self._retry.max_attempts:
                delay = self._retry.base_delay_s * (2 ** (attempt - 1))
                delay += self._jitter.uniform(0.0, self._retry.jitter_s)
                self._sleep(delay)
        assert last_error is not None
        raise last_error

    def _parse_reply(self, text: str, started: float, attempts: int) -> AgentResponse:
        latency_ms = (time.perf_counter() - started) * 1000.0
        try:
            payload = json.loads(text)
            content = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise HttpError(0, f"unparseable completion payload: {exc}") from exc
        return AgentResponse(
            text=content,
            latency_ms=latency_ms,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            attempts=attempts,
        )


def load_journal(path: str) -> dict[tuple[str, str], str]:
    """Read a journal back into a canned-response table."""
    canned: dict[tuple[str, str], str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            request = entry["request"]
            key = (request["template_id"], variables_fingerprint(request["variables"]))
            canned[key] = entry["response"]["text"]
    return canned


def replay_gateway(journal_path: str) -> MockAgent:
    """A MockAgent that replays a recorded session verbatim."""
    return MockAgent(load_journal(journal_path))
