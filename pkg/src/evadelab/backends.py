"""Backend invocation: rate limiting, retries, and transports.

A `Backend` wraps a transport with the operational policy a descriptor
declares: a shared token bucket for the tokens/minute limit, a bounded
in-flight semaphore, and exponential-backoff retries for transient
failures.  Transports only know how to turn one prompt into one
completion.
"""

from __future__ import annotations

import os
import threading
import time
from typing import Protocol

import httpx

from .agents import BackendDescriptor, count_tokens
from .errors import BackendUnavailableError, EvadeLabError, PromptTooLargeError


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class SimulatedClock:
    """Deterministic clock for tests; sleep simply advances time."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._now += max(0.0, seconds)


class TransientBackendError(EvadeLabError):
    """A failure worth retrying (timeouts, 429s, 5xx responses)."""


class TokenBucket:
    """Token-per-minute limiter with overdraft.

    The bucket holds at most one minute's worth of tokens.  A request
    larger than the capacity is admitted once the bucket is full and drives
    the balance negative, which delays later callers; this lets oversized
    prompts through instead of deadlocking.
    """

    def __init__(self, tokens_per_minute: int, clock: Clock):
        if tokens_per_minute <= 0:
            raise ValueError("rate must be positive; use no bucket for unlimited")
        self.capacity = float(tokens_per_minute)
        self.rate_per_second = tokens_per_minute / 60.0
        self._clock = clock
        self._tokens = self.capacity
        self._updated = clock.now()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock.now()
        elapsed = now - self._updated
        if elapsed > 0:
            self._tokens = min(self.capacity, self._tokens + elapsed * self.rate_per_second)
            self._updated = now

    def acquire(self, tokens: int) -> float:
        """Block until `tokens` can be spent; returns the time waited."""
        needed = min(float(tokens), self.capacity)
        waited = 0.0
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= needed:
                    self._tokens -= float(tokens)
                    return waited
                shortfall = needed - self._tokens
                delay = shortfall / self.rate_per_second
            self._clock.sleep(delay)
            waited += delay


class Transport(Protocol):
    def complete(self, prompt: str) -> str: ...


class Backend:
    """One agent session: a transport plus the descriptor's policy."""

    def __init__(self, descriptor: BackendDescriptor, transport: Transport,
                 clock: Clock | None = None):
        self.descriptor = descriptor
        self.transport = transport
        self.clock: Clock = clock if clock is not None else SystemClock()
        self._bucket = (
            TokenBucket(descriptor.token_rate_limit, self.clock)
            if descriptor.token_rate_limit > 0
            else None
        )
        self._in_flight = threading.BoundedSemaphore(descriptor.max_in_flight)

    def invoke(self, prompt: str) -> str:
        tokens = count_tokens(prompt)
        if tokens > self.descriptor.max_prompt_tokens:
            raise PromptTooLargeError(
                f"prompt is {tokens} tokens, backend "
                f"{self.descriptor.name!r} accepts {self.descriptor.max_prompt_tokens}"
            )
        with self._in_flight:
            if self._bucket is not None:
                self._bucket.acquire(tokens)
            last_error: Exception | None = None
            for attempt in range(self.descriptor.max_retries + 1):
                try:
                    return self.transport.complete(prompt)
                except TransientBackendError as exc:
                    last_error = exc
                    if attempt < self.descriptor.max_retries:
                        self.clock.sleep(
                            self.descriptor.backoff_base_seconds * (2.0**attempt)
                        )
            raise BackendUnavailableError(
                f"backend {self.descriptor.name!r} failed after "
                f"{self.descriptor.max_retries + 1} tries: {last_error}"
            )


class HttpChatTransport:
    """Single-turn chat-completions request over HTTPS.

    The request carries exactly one user message at temperature 0.  The
    API key is read from the environment variable the descriptor names at
    call time; it never appears in configuration or artifacts.
    """

    def __init__(self, descriptor: BackendDescriptor,
                 client: httpx.Client | None = None):
        self.descriptor = descriptor
        self._client = client if client is not None else httpx.Client(timeout=60.0)

    def _headers(self) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if self.descriptor.credential_env:
            key = os.environ.get(self.descriptor.credential_env)
            if not key:
                raise BackendUnavailableError(
                    f"credential variable {self.descriptor.credential_env!r} is not set"
                )
            headers["authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.descriptor.model or self.descriptor.name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        }
        try:
            response = self._client.post(
                self.descriptor.endpoint, json=payload, headers=self._headers()
            )
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"status {response.status_code}")
        if response.status_code != 200:
            raise BackendUnavailableError(
                f"backend rejected request with status {response.status_code}"
            )
        body = response.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailableError(
                f"malformed completion payload: {exc}"
            ) from exc
