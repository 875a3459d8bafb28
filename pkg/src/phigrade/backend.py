"""Chat-completion backends.

Every provider is reached through one OpenAI-style wire shape; providers differ
only in endpoint, model and the environment variable holding the API key.
``StubBackend`` honours the same contract offline, replaying canned answers
and injecting scripted faults.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping
from urllib.parse import urlparse

import httpx
import yaml

log = logging.getLogger(__name__)

DEFAULT_PROVIDERS_PATH = Path(str(resources.files("phigrade") / "data" / "providers.yaml"))


class BackendError(RuntimeError):
    pass


class AuthError(BackendError):
    pass


class TransientError(BackendError):
    pass


class RetriesExhausted(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class FingerprintMiss(BackendError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    provider_name: str
    endpoint_url: str
    model_name: str
    api_key_env_var: str
    timeout: float = 120.0
    max_retries: int = 3
    temperature: float | None = 0.0
    max_in_flight: int = 4

    def __post_init__(self):
        url = urlparse(self.endpoint_url)
        if url.scheme not in ("http", "https") or not url.netloc:
            raise ValueError(f"invalid endpoint_url {self.endpoint_url!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass
class CompletionResult:
    raw_text: str
    latency: float
    attempt_count: int
    provider_echo: dict | None = None


def load_providers(source: str | Path | None = None) -> dict[str, BackendConfig]:
    """Read a YAML list of backend configs keyed by ``name``."""
    path = Path(source) if source is not None else DEFAULT_PROVIDERS_PATH
    doc = yaml.safe_load(path.read_text(encoding="utf-8")) or []
    configs = {}
    for row in doc:
        row = dict(row)
        name = row.pop("name")
        configs[name] = BackendConfig(**row)
    return configs


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def backoff_delay(attempt: int, base: float = 1.0, cap: float = 30.0) -> float:
    return min(cap, base * 2 ** (attempt - 1))


def call_with_retries(fn: Callable[[int], object], max_retries: int,
                      sleep: Callable[[float], None] = time.sleep):
    """Run ``fn(attempt)``, retrying on TransientError. Returns (value, attempts)."""
    attempt = 0
    while True:
        attempt += 1
        try:
            return fn(attempt), attempt
        except TransientError as exc:
            if attempt > max_retries:
                raise RetriesExhausted(f"gave up after {attempt} attempts: {exc}") from exc
            delay = backoff_delay(attempt)
            log.info("transient failure (attempt %d): %s; retrying in %.1fs", attempt, exc, delay)
            sleep(delay)


_slots: dict[tuple[str, str], threading.BoundedSemaphore] = {}
_slots_lock = threading.Lock()


def provider_slots(config: BackendConfig) -> threading.BoundedSemaphore:
    """Process-wide in-flight limiter shared by every backend for one provider."""
    key = (config.provider_name, config.endpoint_url)
    with _slots_lock:
        if key not in _slots:
            _slots[key] = threading.BoundedSemaphore(config.max_in_flight)
        return _slots[key]


def build_payload(config: BackendConfig, messages: list[dict], schema: dict | None) -> dict:
    payload = {"model": config.model_name, "messages": messages}
    if config.temperature is not None:
        payload["temperature"] = config.temperature
    if schema is not None:
        payload["response_format"] = {
            "type": "json_schema",
            "json_schema": {"name": "privacy_triples", "strict": True, "schema": schema},
        }
    return payload


def _looks_like_schema_rejection(response: httpx.Response) -> bool:
    body = response.text.lower()
    return "response_format" in body or "json_schema" in body


class HTTPBackend:
    def __init__(self, config: BackendConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 env: Mapping[str, str] | None = None,
                 audit_log: str | Path | None = None):
        self.config = config
        self.client = client or httpx.Client()
        self.sleep = sleep
        self.env = os.environ if env is None else env
        self.audit_log = Path(audit_log) if audit_log else None
        self._audit_lock = threading.Lock()
        self._schema_supported = True

    @property
    def max_in_flight(self) -> int:
        return self.config.max_in_flight

    def _audit(self, **event):
        if self.audit_log is None:
            return
        event.update(provider=self.config.provider_name, model=self.config.model_name)
        with self._audit_lock, open(self.audit_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _post(self, payload: dict, key: str) -> httpx.Response:
        headers = {"Authorization": f"Bearer {key}"}
        try:
            return self.client.post(self.config.endpoint_url, json=payload,
                                    headers=headers, timeout=self.config.timeout)
        except httpx.TimeoutException as exc:
            raise TransientError(f"timeout: {exc}") from None
        except httpx.TransportError as exc:
            raise TransientError(f"transport error: {type(exc).__name__}") from None

    def complete(self, messages: list[dict], schema: dict | None = None) -> CompletionResult:
        if not messages:
            raise ValueError("messages must be non-empty")
        key = self.env.get(self.config.api_key_env_var)
        if not key:
            raise AuthError(f"environment variable {self.config.api_key_env_var} is not set")
        state = {"schema": schema if self._schema_supported else None}
        digest = fingerprint(messages[-1]["content"])

        def attempt(n: int) -> httpx.Response:
            payload = build_payload(self.config, messages, state["schema"])
            response = self._post(payload, key)
            self._audit(attempt=n, status=response.status_code, input=digest,
                        schema=state["schema"] is not None)
            code = response.status_code
            if code in (401, 403):
                raise AuthError(f"{self.config.provider_name} rejected credentials ({code})")
            if code == 429 or code >= 500:
                raise TransientError(f"HTTP {code}")
            if code == 400 and state["schema"] is not None and _looks_like_schema_rejection(response):
                log.warning("%s rejected the response schema; resending without it",
                            self.config.provider_name)
                self._schema_supported = False
                state["schema"] = None
                return attempt(n)
            if code >= 400:
                raise BackendError(f"HTTP {code}: {response.text[:200]}")
            return response

        start = time.perf_counter()
        with provider_slots(self.config):
            response, attempts = call_with_retries(attempt, self.config.max_retries, self.sleep)
        latency = time.perf_counter() - start
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedResponse("response has no choices[0].message.content") from None
        if not isinstance(text, str):
            raise MalformedResponse("message content is not text")
        echo = {"model": body.get("model"), "usage": body.get("usage")}
        return CompletionResult(text, latency, attempts, echo)


# ---------------------------------------------------------------------------
# offline stub


@dataclass(frozen=True)
class Fault:
    """Scripted behaviour for one input.

    transient_failures: raise this many transient errors before answering.
    permanent: always fail with a transient error (exhausts retries).
    raw: answer with this text instead of the replayed one.
    transform: rewrite the replayed text.
    """

    transient_failures: int = 0
    permanent: bool = False
    raw: str | None = None
    transform: Callable[[str], str] | None = None


class StubBackend:
    """Deterministic replay backend keyed by the fingerprint of the final user turn."""

    def __init__(self, replay_table: Mapping[str, str], fault_plan: Mapping[str, Fault] | None = None,
                 max_retries: int = 3, max_in_flight: int = 8, record_requests: bool = False):
        self.replay_table = dict(replay_table)
        self.fault_plan = dict(fault_plan or {})
        self.max_retries = max_retries
        self.max_in_flight = max_in_flight
        self.record_requests = record_requests
        self.requests: list[tuple[list[dict], dict | None]] = []
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _answer(self, key: str) -> str:
        fault = self.fault_plan.get(key)
        with self._lock:
            seen = self._attempts.get(key, 0)
            self._attempts[key] = seen + 1
        if fault is not None:
            if fault.permanent or seen < fault.transient_failures:
                raise TransientError("scripted failure")
            if fault.raw is not None:
                return fault.raw
        if key not in self.replay_table:
            raise FingerprintMiss(f"no replay entry for input {key[:12]}")
        text = self.replay_table[key]
        if fault is not None and fault.transform is not None:
            text = fault.transform(text)
        return text

    def complete(self, messages: list[dict], schema: dict | None = None) -> CompletionResult:
        if not messages:
            raise ValueError("messages must be non-empty")
        if self.record_requests:
            with self._lock:
                self.requests.append((messages, schema))
        key = fingerprint(messages[-1]["content"])
        with self._slots:
            text, attempts = call_with_retries(lambda n: self._answer(key), self.max_retries,
                                               sleep=lambda s: None)
        return CompletionResult(text, 0.0, attempts, {"provider": "stub"})


def stub_backend(replay_table, fault_plan=None, **kwargs) -> StubBackend:
    return StubBackend(replay_table, fault_plan, **kwargs)


# fault helpers: rewrite a {"triples": [...]} answer


def _rewrite(raw: str, fn) -> str:
    doc = json.loads(raw)
    doc["triples"] = fn(list(doc["triples"]))
    return json.dumps(doc, ensure_ascii=False)


def set_field(index: int, key: str, value) -> Callable[[str], str]:
    def transform(raw: str) -> str:
        def edit(items):
            items[index] = {**items[index], key: value}
            return items
        return _rewrite(raw, edit)
    return transform


def drop_every_second() -> Callable[[str], str]:
    return lambda raw: _rewrite(raw, lambda items: items[::2])


def malformed() -> Fault:
    return Fault(raw="Sorry, I cannot produce JSON for this input.")
