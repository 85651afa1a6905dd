"""Chat-completion client for any OpenAI-compatible endpoint, plus a
deterministic in-process oracle for network-free runs.

Wire contract: POST {base_url}/chat/completions with a single user message;
the reply text is choices[0].message.content. Retries cover HTTP 429, 5xx,
and timeouts with exponential backoff (base 500 ms, factor 2, full jitter),
honoring Retry-After when present. The request body is serialized once, so
every retry sends identical bytes.
"""
from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass

import requests

BACKOFF_BASE_S = 0.5
BACKOFF_FACTOR = 2.0


class ClientError(Exception):
    """Base class for endpoint failures."""


class MissingCredentialError(ClientError):
    """The configured credential environment variable is unset."""


class MalformedResponseError(ClientError):
    """HTTP 200 whose body does not carry a message text."""


class EndpointError(ClientError):
    """Non-retryable HTTP status."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"endpoint returned status {status}{': ' if detail else ''}{detail}")
        self.status = status


class RetryExhaustedError(ClientError):
    """All attempts failed with retryable errors."""

    def __init__(self, attempts: int, last_status: int | None, detail: str):
        super().__init__(
            f"gave up after {attempts} attempts (last: {detail})"
        )
        self.attempts = attempts
        self.last_status = last_status


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str | None = None
    temperature: float = 0.0
    timeout_ms: int = 30_000
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be > 0, got {self.timeout_ms}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: int
    attempts: int


def _auth_headers(cfg: EndpointConfig) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env:
        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise MissingCredentialError(
                f"environment variable {cfg.api_key_env!r} is not set"
            )
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _retry_delay_s(attempt: int, retry_after: float | None, rng: random.Random) -> float:
    if retry_after is not None:
        return retry_after
    cap = BACKOFF_BASE_S * (BACKOFF_FACTOR ** attempt)
    return rng.uniform(0.0, cap)


def _parse_retry_after(response: requests.Response) -> float | None:
    value = response.headers.get("Retry-After")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


def complete(
    cfg: EndpointConfig,
    prompt: str,
    correlation_id: str | None = None,
    session: requests.Session | None = None,
    sleep=time.sleep,
    rng: random.Random | None = None,
) -> CompletionResult:
    """One chat completion with retries. `session`, `sleep`, and `rng` are
    injectable for testing; defaults suit production use."""
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    payload: dict = {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [{"role": "user", "content": prompt}],
    }
    if correlation_id is not None:
        payload["user"] = correlation_id
    body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    headers = _auth_headers(cfg)
    post = (session or requests).post
    rng = rng or random.Random()
    timeout_s = cfg.timeout_ms / 1000.0

    started = time.monotonic()
    last_status: int | None = None
    last_detail = "no attempt made"
    for attempt in range(cfg.max_retries + 1):
        retry_after: float | None = None
        try:
            response = post(url, data=body, headers=headers, timeout=timeout_s)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_status = None
            last_detail = type(exc).__name__
        else:
            if response.status_code == 200:
                try:
                    parsed = response.json()
                    text = parsed["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError):
                    raise MalformedResponseError(
                        f"response body lacks choices[0].message.content: "
                        f"{response.text[:200]!r}"
                    ) from None
                if not isinstance(text, str):
                    raise MalformedResponseError(
                        f"message content is not a string: {text!r}"
                    )
                latency_ms = int((time.monotonic() - started) * 1000)
                return CompletionResult(
                    text=text, latency_ms=latency_ms, attempts=attempt + 1
                )
            if response.status_code == 429 or 500 <= response.status_code < 600:
                last_status = response.status_code
                last_detail = f"HTTP {response.status_code}"
                retry_after = _parse_retry_after(response)
            else:
                raise EndpointError(response.status_code, response.text[:200])
        if attempt < cfg.max_retries:
            sleep(_retry_delay_s(attempt, retry_after, rng))
    raise RetryExhaustedError(cfg.max_retries + 1, last_status, last_detail)


class Client:
    """Shareable responder with a process-wide in-flight bound.

    Calling the client with (prompt, correlation_id) returns the reply text;
    at most cfg.max_in_flight requests are outstanding at any instant.
    """

    def __init__(self, cfg: EndpointConfig, sleep=time.sleep, rng: random.Random | None = None):
        self.cfg = cfg
        self._session = requests.Session()
        self._gate = threading.Semaphore(cfg.max_in_flight)
        self._sleep = sleep
        self._rng = rng

    def __call__(self, prompt: str, correlation_id: str | None = None) -> str:
        with self._gate:
            result = complete(
                self.cfg,
                prompt,
                correlation_id=correlation_id,
                session=self._session,
                sleep=self._sleep,
                rng=self._rng,
            )
        return result.text


class OracleError(Exception):
    """The oracle was asked about a sample or prompt it does not know.

    Deliberately not a ClientError: an oracle miss is a harness bug and must
    abort the run instead of degrading into a fallback prediction.
    """


class MockOracle:
    """Deterministic stand-in responder that answers from gold annotations.

    Routes by correlation id to the registered sample, then matches the
    prompt against that sample's rendered forms: the answer prompt returns
    the gold letters, the rationale request returns a fixed-format stub, and
    the relation-extraction prompt returns the gold serialized graph (this
    last form requires `docs`). Thread-safe; counts every call.
    """

    def __init__(self, samples, docs=None, templates=None):
        from .causal_graph import build_graph, linearize
        from .prompts import TaskKind, render, render_rationale_request

        self._registry = {s.sample_id: s for s in samples}
        self._docs = {d.doc_id: d for d in docs} if docs else {}
        self._templates = templates
        self._render = render
        self._render_rationale = render_rationale_request
        self._task_qa = TaskKind.QA
        self._task_ecg = TaskKind.ECG_EXTRACT
        self._build_graph = build_graph
        self._linearize = linearize
        self._lock = threading.Lock()
        self.calls = 0

    def __call__(self, prompt: str, correlation_id: str | None = None) -> str:
        with self._lock:
            self.calls += 1
        if correlation_id is None:
            raise OracleError("request carries no correlation id")
        sample = self._registry.get(correlation_id)
        if sample is None:
            raise OracleError(f"unknown sample id {correlation_id!r}")
        if prompt == self._render(self._task_qa, sample, templates=self._templates):
            return "".join(sorted(sample.gold_letters))
        if prompt == self._render_rationale(sample, templates=self._templates):
            labels = "".join(sorted(sample.gold_letters))
            return f"Selected {labels} per annotation."
        if prompt == self._render(self._task_ecg, sample, templates=self._templates):
            doc = self._docs.get(sample.doc_id)
            if doc is None:
                raise OracleError(
                    f"graph prompt for {sample.sample_id} but no documents registered"
                )
            graph = self._build_graph(
                doc, sample.context.first_sentence, sample.context.last_sentence
            )
            return self._linearize(graph, doc)
        raise OracleError(
            f"prompt for {sample.sample_id} matches no known rendering"
        )
