"""Uniform client over chat-completions-style HTTP endpoints.

Remote vendors and local inference servers are all reached through the same
wire format: POST {base_url}/chat/completions with a JSON body carrying
model, messages, temperature, and max_tokens. The text-completion dialect
collapses the messages into one prompt string. Retries cover 429/5xx and
timeouts with exponential backoff and full jitter; other 4xx never retry.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional
from urllib.parse import urlparse

import httpx

from .errors import (
    AuthError,
    DuplicateProvider,
    ProtocolError,
    ProviderNotFound,
    RateLimited,
    Timeout,
    UpstreamError,
)

BACKOFF_BASE_MS = 500
BACKOFF_FACTOR = 2
DEFAULT_CONCURRENCY = 4


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    base_url: str
    model_name: str
    auth_header: Optional[tuple[str, str]] = None  # (header name, secret)
    wire_dialect: str = "chat-completions"  # or "text-completion"
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_concurrency: int = DEFAULT_CONCURRENCY

    def __post_init__(self):
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"base_url is not a valid http(s) URL: {self.base_url!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.wire_dialect not in ("chat-completions", "text-completion"):
            raise ValueError(f"unknown wire_dialect {self.wire_dialect!r}")

    def public_dict(self) -> dict:
        """Serializable view; the auth secret is never included."""
        return {
            "provider_id": self.provider_id,
            "base_url": self.base_url,
            "model_name": self.model_name,
            "auth_header_name": self.auth_header[0] if self.auth_header else None,
            "wire_dialect": self.wire_dialect,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "max_concurrency": self.max_concurrency,
        }


@dataclass
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass
class ChatRequest:
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown role {m.role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class ChatResponse:
    text: str
    finish_reason: str
    latency_ms: int


class ProviderRegistry:
    """Thread-safe provider registry with per-provider concurrency caps."""

    def __init__(self):
        self._providers: dict[str, ProviderConfig] = {}
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._mutex = threading.Lock()

    def register(self, cfg: ProviderConfig) -> None:
        with self._mutex:
            if cfg.provider_id in self._providers:
                raise DuplicateProvider(f"provider {cfg.provider_id!r} already registered")
            self._providers[cfg.provider_id] = cfg
            self._semaphores[cfg.provider_id] = threading.Semaphore(cfg.max_concurrency)

    def get(self, provider_id: str) -> ProviderConfig:
        with self._mutex:
            cfg = self._providers.get(provider_id)
        if cfg is None:
            raise ProviderNotFound(f"no provider {provider_id!r}")
        return cfg

    def list(self) -> list[ProviderConfig]:
        with self._mutex:
            return list(self._providers.values())

    def semaphore(self, provider_id: str) -> threading.Semaphore:
        with self._mutex:
            sem = self._semaphores.get(provider_id)
        if sem is None:
            raise ProviderNotFound(f"no provider {provider_id!r}")
        return sem


def _build_body(provider: ProviderConfig, req: ChatRequest) -> dict:
    if provider.wire_dialect == "chat-completions":
        return {
            "model": provider.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
    prompt = "\n\n".join(f"{m.role}: {m.content}" for m in req.messages)
    return {
        "model": provider.model_name,
        "prompt": prompt,
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    }


def _extract_text(provider: ProviderConfig, payload: dict) -> tuple[str, str]:
    try:
        choice = payload["choices"][0]
        if provider.wire_dialect == "chat-completions":
            text = choice["message"]["content"]
        else:
            text = choice["text"]
        if not isinstance(text, str):
            raise TypeError("content is not a string")
        return text, str(choice.get("finish_reason", ""))
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"unexpected response shape: {exc}") from exc


def chat(
    provider: ProviderConfig,
    req: ChatRequest,
    *,
    transport: Optional[httpx.BaseTransport] = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: Optional[random.Random] = None,
    semaphore: Optional[threading.Semaphore] = None,
) -> ChatResponse:
    """One chat call with retries; at most 1 + max_retries upstream attempts.

    ``transport``, ``sleep``, and ``rng`` are injectable for tests.
    """
    rng = rng or random.Random()
    url = provider.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if provider.auth_header is not None:
        headers[provider.auth_header[0]] = provider.auth_header[1]
    body = _build_body(provider, req)
    timeout = provider.timeout_ms / 1000.0

    if semaphore is not None:
        semaphore.acquire()
    started = time.monotonic()
    try:
        with httpx.Client(transport=transport, timeout=timeout) as client:
            last_error: Exception = UpstreamError("no attempts made")
            for attempt in range(provider.max_retries + 1):
                if attempt > 0:
                    sleep(rng.uniform(0, BACKOFF_BASE_MS * BACKOFF_FACTOR ** (attempt - 1)) / 1000.0)
                try:
                    response = client.post(url, json=body, headers=headers)
                except httpx.TimeoutException:
                    last_error = Timeout(f"request to provider {provider.provider_id} timed out")
                    continue
                except httpx.HTTPError as exc:
                    last_error = UpstreamError(f"transport failure: {type(exc).__name__}")
                    continue

                status = response.status_code
                if status in (401, 403):
                    raise AuthError(f"provider {provider.provider_id} rejected credentials ({status})")
                if status == 429:
                    last_error = RateLimited(f"provider {provider.provider_id} rate limited")
                    continue
                if status >= 500:
                    last_error = UpstreamError(f"provider {provider.provider_id} returned {status}")
                    continue
                if status >= 400:
                    raise UpstreamError(f"provider {provider.provider_id} returned {status}")

                try:
                    payload = response.json()
                except ValueError as exc:
                    raise ProtocolError("response body is not JSON") from exc
                text, finish_reason = _extract_text(provider, payload)
                latency_ms = int((time.monotonic() - started) * 1000)
                return ChatResponse(text=text, finish_reason=finish_reason, latency_ms=latency_ms)
            raise last_error
    finally:
        if semaphore is not None:
            semaphore.release()
