"""Provider-agnostic chat-completion gateway.

Wraps any :class:`~sumrefine.providers.Provider` with retries, a shared
concurrency bound, an optional token-bucket rate limit, and a content-addressed
on-disk response cache so that experiment reruns are cheap and resumable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .providers import Provider, ProviderError, TransientProviderError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request; all fields participate in the cache key."""

    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 2048
    model_id: str = "default"

    def __post_init__(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("system_prompt and user_prompt must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    def to_dict(self) -> dict:
        return {
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "model_id": self.model_id,
        }


@dataclass
class ChatResponse:
    """Provider text plus bookkeeping metadata.

    ``text`` may be empty only when the provider returned empty output; it is
    preserved verbatim so downstream error analysis can see what happened.
    """

    text: str
    provider_meta: dict[str, str] = field(default_factory=dict)
    cached: bool = False

    def to_dict(self) -> dict:
        return {"text": self.text, "provider_meta": self.provider_meta, "cached": self.cached}


def cache_key(req: ChatRequest) -> str:
    """Collision-resistant digest over all request fields, stable across runs."""
    canonical = json.dumps(req.to_dict(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with full jitter for transient provider failures."""

    attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0

    def delay(self, retry_index: int, rng: random.Random) -> float:
        cap = min(self.max_delay, self.base_delay * (2**retry_index))
        return rng.uniform(0, cap)


class TokenBucket:
    """Shared token bucket; ``acquire`` blocks until a token is available."""

    def __init__(
        self,
        rate_per_sec: float,
        capacity: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self.rate = rate_per_sec
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_sec)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class ResponseCache:
    """One JSON file per request digest under ``<cache_dir>/<hex-key>.json``."""

    def __init__(self, cache_dir: str | Path) -> None:
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def load(self, key: str) -> Optional[ChatResponse]:
        path = self._path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        resp = entry["response"]
        return ChatResponse(
            text=resp["text"],
            provider_meta=dict(resp.get("provider_meta", {})),
            cached=True,
        )

    def store(self, key: str, req: ChatRequest, resp: ChatResponse) -> None:
        entry = {
            "request": req.to_dict(),
            "response": {"text": resp.text, "provider_meta": resp.provider_meta},
            "timestamp": time.time(),
        }
        write_json_atomic(self._path(key), entry)


def write_json_atomic(path: str | Path, payload: dict | list) -> None:
    """Write JSON via a temp file and rename so readers never see partial data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Gateway:
    """Thread-safe front door for all chat-completion traffic."""

    def __init__(
        self,
        provider: Provider,
        cache_dir: Optional[str | Path] = None,
        retry: RetryPolicy = RetryPolicy(),
        max_concurrency: int = 8,
        rate_limit_per_sec: Optional[float] = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: Optional[int] = None,
    ) -> None:
        self.provider = provider
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self.retry = retry
        self._sleep = sleep
        self._rng = random.Random(jitter_seed)
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self._bucket = (
            TokenBucket(rate_limit_per_sec, sleep=sleep) if rate_limit_per_sec else None
        )
        self._lock = threading.Lock()
        self._provider_calls = 0

    @property
    def provider_calls(self) -> int:
        """Number of requests that actually reached the provider (cache misses)."""
        with self._lock:
            return self._provider_calls

    def reset_counters(self) -> None:
        with self._lock:
            self._provider_calls = 0

    def complete(self, req: ChatRequest) -> ChatResponse:
        """Resolve a request from cache or from the provider with retries."""
        key = cache_key(req)
        if self.cache is not None:
            hit = self.cache.load(key)
            if hit is not None:
                return hit

        resp = self._call_provider(req)
        if self.cache is not None:
            self.cache.store(key, req, resp)
        return resp

    def _call_provider(self, req: ChatRequest) -> ChatResponse:
        retries = 0
        last_error: Optional[Exception] = None
        for attempt in range(self.retry.attempts):
            if attempt > 0:
                delay = self.retry.delay(attempt - 1, self._rng)
                logger.debug("retry %d after %.2fs", attempt, delay)
                self._sleep(delay)
                retries += 1
            try:
                if self._bucket is not None:
                    self._bucket.acquire()
                with self._semaphore:
                    with self._lock:
                        self._provider_calls += 1
                    text, meta = self.provider.send(req)
                meta = dict(meta)
                meta["retries"] = str(retries)
                return ChatResponse(text=text, provider_meta=meta, cached=False)
            except TransientProviderError as exc:
                last_error = exc
                logger.warning("transient provider failure (attempt %d): %s", attempt + 1, exc)
        raise ProviderError(
            f"provider failed after {self.retry.attempts} attempts: {last_error}"
        ) from last_error
