"""OpenAI-compatible chat-completions executor with retries and a disk cache.

The cache is content-addressed on ``(model, messages, temperature)``.  It is a
replay convenience, not a sampler: at temperature > 0 two identical requests
(e.g. two copies of the same agent) get the same cached reply.  Leave
``cache_dir`` unset when independent samples matter.  The API key is read
from the environment on every call and never written anywhere.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import httpx

from ..errors import AuthMissing, MalformedResponse, RateLimited, TransportError
from ..graph import Node, NodeContext
from .base import RoutineExecutor
from .render import ExecutorRequest

DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"


@dataclass
class HttpExecutorConfig:
    base_url: str = "https://api.openai.com"
    model: str = "gpt-4-1106-preview"
    temperature: float = 0.2
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_attempts: int = 5
    backoff_initial: float = 1.0
    backoff_factor: float = 2.0
    timeout: float = 60.0
    cache_dir: str | None = None
    max_in_flight: int = 4


def cache_key(model: str, messages: list[dict], temperature: float) -> str:
    payload = json.dumps(
        {"model": model, "messages": messages, "temperature": temperature},
        sort_keys=True, ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _read_cache(cache_dir: str | None, key: str) -> str | None:
    if not cache_dir:
        return None
    path = Path(cache_dir) / f"{key}.json"
    try:
        return json.loads(path.read_text())["response"]
    except (FileNotFoundError, KeyError, json.JSONDecodeError):
        return None


def _write_cache(cache_dir: str, key: str, body: dict, response: str) -> None:
    directory = Path(cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    entry = {"request": body, "response": response, "timestamp": time.time()}
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(entry, fh, ensure_ascii=False)
    os.replace(tmp, directory / f"{key}.json")


def _retryable(status: int) -> bool:
    return status == 429 or 500 <= status < 600


def http_invoke(
    config: HttpExecutorConfig,
    request: ExecutorRequest,
    *,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
    environ: Mapping[str, str] | None = None,
) -> str:
    """POST one chat completion and return the first choice's content.

    Cached responses are returned without touching the network.  429 and 5xx
    responses (and transport errors) are retried with exponential backoff;
    other 4xx statuses fail immediately.
    """
    messages = request.messages
    key = cache_key(config.model, messages, request.temperature)
    cached = _read_cache(config.cache_dir, key)
    if cached is not None:
        return cached

    environ = os.environ if environ is None else environ
    api_key = environ.get(config.api_key_env)
    if not api_key:
        raise AuthMissing(f"environment variable {config.api_key_env} is not set")

    body = {"model": config.model, "messages": messages, "temperature": request.temperature}
    url = config.base_url.rstrip("/") + "/v1/chat/completions"
    headers = {"Authorization": f"Bearer {api_key}"}
    own_client = client is None
    client = client or httpx.Client(timeout=config.timeout)
    try:
        delay = config.backoff_initial
        last = None
        for attempt in range(config.max_attempts):
            if attempt:
                sleep(delay)
                delay *= config.backoff_factor
            try:
                response = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = exc
                continue
            if response.status_code == 200:
                break
            last = response.status_code
            if not _retryable(response.status_code):
                raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
        else:
            if last == 429:
                raise RateLimited(f"still rate limited after {config.max_attempts} attempts")
            raise TransportError(f"request failed after {config.max_attempts} attempts: {last!r}")
    finally:
        if own_client:
            client.close()

    try:
        content = response.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected response body: {response.text[:200]}") from exc
    if not isinstance(content, str):
        raise MalformedResponse("message content is not a string")
    if config.cache_dir:
        _write_cache(config.cache_dir, key, body, content)
    return content


class HttpExecutor(RoutineExecutor):
    """Runs LLM nodes against an OpenAI-compatible endpoint."""

    def __init__(self, config: HttpExecutorConfig, client: httpx.Client | None = None,
                 functions=None, sleep: Callable[[float], None] = time.sleep):
        super().__init__(functions)
        self.config = config
        self.temperature = config.temperature
        self.client = client
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def query(self, node: Node, context: NodeContext, request: ExecutorRequest) -> str:
        with self._slots:
            return http_invoke(self.config, request, client=self.client, sleep=self.sleep)
