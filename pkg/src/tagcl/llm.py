"""Chat-completion and embedding clients.

The live clients speak the common /v1/chat/completions and /v1/embeddings
JSON protocols. Transport, sleep, and jitter are injectable so tests can
replay recorded responses without a network or a clock.

Retry policy: exponential backoff with jitter on HTTP 429/5xx and
transport-level failures, 5 attempts, base delay 1 s. Other HTTP errors
fail immediately.
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable

from tagcl.errors import EmptyResponseError, TransportError

DEFAULT_LLM_BASE_URL = "https://api.openai.com"
CHAT_COMPLETIONS_PATH = "/v1/chat/completions"
EMBEDDINGS_PATH = "/v1/embeddings"


class TransportFailure(Exception):
    """Network-level failure (timeout, connection reset); always retryable."""


@dataclass
class TransportResult:
    status: int
    body: dict


TransportFn = Callable[[str, dict, dict, float], TransportResult]


def requests_transport(url: str, payload: dict, headers: dict, timeout: float) -> TransportResult:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportFailure(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text}
    return TransportResult(status=resp.status_code, body=body)


@dataclass
class RetryPolicy:
    attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0

    def delay(self, attempt: int, jitter: float) -> float:
        """Delay before retry `attempt` (0-based); jitter in [0,1) halves-to-full."""
        raw = self.base_delay * (2.0 ** attempt) * (0.5 + 0.5 * jitter)
        return min(raw, self.max_delay)


def _retryable(status: int) -> bool:
    return status == 429 or 500 <= status <= 599


class _HttpJsonClient:
    def __init__(self, base_url, api_key, transport, sleep, jitter_rng, timeout, retry):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self._transport = transport or requests_transport
        self._sleep = sleep if sleep is not None else time.sleep
        self._jitter = jitter_rng if jitter_rng is not None else random.Random()
        self.timeout = timeout
        self.retry = retry or RetryPolicy()
        self._count_lock = threading.Lock()
        self.request_count = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post_with_retry(self, path: str, payload: dict) -> dict:
        url = self.base_url + path
        last: str = "no attempt made"
        last_status: int | None = None
        for attempt in range(self.retry.attempts):
            with self._count_lock:
                self.request_count += 1
            try:
                result = self._transport(url, payload, self._headers(), self.timeout)
            except TransportFailure as exc:
                last, last_status = f"transport failure: {exc}", None
            else:
                if result.status == 200:
                    return result.body
                last, last_status = f"HTTP {result.status}", result.status
                if not _retryable(result.status):
                    raise TransportError(
                        f"{url} failed: {last} (body: {str(result.body)[:200]})",
                        status=result.status,
                    )
            if attempt < self.retry.attempts - 1:
                self._sleep(self.retry.delay(attempt, self._jitter.random()))
        raise TransportError(
            f"{url} failed after {self.retry.attempts} attempts: {last}",
            status=last_status,
        )


class ChatCompletionsClient(_HttpJsonClient):
    """Live augmentation backend; temperature pinned to 0 for reproducibility."""

    def __init__(
        self,
        model_id: str,
        base_url: str | None = None,
        api_key: str | None = None,
        transport: TransportFn | None = None,
        sleep=None,
        jitter_rng=None,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        temperature: float = 0.0,
    ):
        base = base_url or os.environ.get("LLM_BASE_URL") or DEFAULT_LLM_BASE_URL
        key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
        super().__init__(base, key, transport, sleep, jitter_rng, timeout, retry)
        self.model_id = model_id
        self.temperature = temperature

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model_id,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        body = self._post_with_retry(CHAT_COMPLETIONS_PATH, payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(
                f"malformed chat completion response: {str(body)[:200]}"
            ) from None
        if not isinstance(content, str) or not content.strip():
            raise EmptyResponseError("model returned an empty message")
        return content


class EmbeddingsClient(_HttpJsonClient):
    """Remote text-embedding backend with order-preserving batching."""

    def __init__(
        self,
        model_id: str,
        base_url: str | None = None,
        api_key: str | None = None,
        transport: TransportFn | None = None,
        sleep=None,
        jitter_rng=None,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        batch_size: int = 16,
    ):
        base = base_url or os.environ.get("EMB_BASE_URL") or DEFAULT_LLM_BASE_URL
        key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
        super().__init__(base, key, transport, sleep, jitter_rng, timeout, retry)
        self.model_id = model_id
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.batch_size = batch_size

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        """Embed one batch; the response `index` field restores input order."""
        payload = {"model": self.model_id, "input": list(texts)}
        body = self._post_with_retry(EMBEDDINGS_PATH, payload)
        try:
            data = body["data"]
            out: list[list[float] | None] = [None] * len(texts)
            for item in data:
                out[item["index"]] = [float(x) for x in item["embedding"]]
        except (KeyError, IndexError, TypeError):
            raise TransportError(
                f"malformed embeddings response: {str(body)[:200]}"
            ) from None
        if any(v is None for v in out):
            raise TransportError("embeddings response missing entries")
        return out  # type: ignore[return-value]
