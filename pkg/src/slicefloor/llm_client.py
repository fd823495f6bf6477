"""Chat-completion access for sampling slicing expressions.

Two endpoints share one ``complete(request) -> CompletionBatch`` surface:
:class:`HTTPEndpoint` talks to an OpenAI-style ``/chat/completions`` server,
:class:`ReplayEndpoint` serves recorded outputs keyed by prompt hashes. Neither
touches completion text; parsing happens in the harness.

Replay files are JSON Lines, one object per prompt::

    {"system_hash": "<sha256 hex>", "user_hash": "<sha256 hex>", "outputs": ["...", ...]}

Endpoint config files are ``key = value`` lines (``#`` starts a comment) with
keys ``endpoint_url``, ``model``, ``timeout_ms``, ``max_retries`` and
``concurrency``. The API key is read from ``SLICEFLOOR_API_KEY``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, TextIO, Union

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "SLICEFLOOR_API_KEY"


class LLMClientError(RuntimeError):
    def __init__(self, message: str, sample_indices: Sequence[int] = ()):
        super().__init__(message)
        self.sample_indices = tuple(sample_indices)


class AuthError(LLMClientError):
    pass


class TransportError(LLMClientError):
    pass


class ProtocolError(LLMClientError):
    pass


class ReplayLookupError(LLMClientError):
    pass


class ReplayFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    system: str
    user: str
    k: int = 5
    temperature: float = 1.0
    max_tokens: int = 1024
    timeout: float = 60.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass
class CompletionBatch:
    raw_texts: list[str]
    statuses: list[str] = field(default_factory=list)
    latency: float = 0.0


class Endpoint(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionBatch: ...


@dataclass(frozen=True)
class EndpointConfig:
    endpoint_url: str
    model: str = ""
    timeout_ms: int = 60_000
    max_retries: int = 3
    concurrency: int = 4


def load_endpoint_config(path: Union[str, Path]) -> EndpointConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value.strip("\"'")
    unknown = set(values) - {"endpoint_url", "model", "timeout_ms", "max_retries", "concurrency"}
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    if "endpoint_url" not in values:
        raise ValueError(f"{path}: endpoint_url is required")
    ints = {k: int(values[k]) for k in ("timeout_ms", "max_retries", "concurrency") if k in values}
    return EndpointConfig(values["endpoint_url"], values.get("model", ""), **ints)


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class HTTPEndpoint:
    """OpenAI-compatible chat-completions client with bounded exponential backoff.

    ``max_retries`` counts retries after the first attempt. Authentication
    failures are never retried.
    """

    def __init__(
        self,
        config: EndpointConfig,
        api_key: Optional[str] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.5,
    ):
        self.config = config
        self._api_key = api_key
        self._transport = transport
        self._sleep = sleep
        self._backoff_base = backoff_base

    def _key(self, k: int) -> str:
        key = self._api_key if self._api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key.strip():
            raise AuthError(f"no API key: set {API_KEY_ENV}", range(k))
        return key.strip()

    def complete(self, request: CompletionRequest) -> CompletionBatch:
        samples = range(request.k)
        key = self._key(request.k)
        payload = {
            "model": request.model or self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "n": request.k,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        timeout = min(request.timeout, self.config.timeout_ms / 1000)
        headers = {"Authorization": f"Bearer {key}"}
        start = time.perf_counter()
        last_error = "no attempt made"
        with httpx.Client(transport=self._transport, timeout=timeout) as client:
            for attempt in range(self.config.max_retries + 1):
                if attempt:
                    self._sleep(self._backoff_base * 2 ** (attempt - 1))
                try:
                    resp = client.post(self.config.endpoint_url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                    log.warning("attempt %d failed: %s", attempt + 1, last_error)
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials ({resp.status_code})", samples)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                    log.warning("attempt %d failed: %s", attempt + 1, last_error)
                    continue
                if resp.status_code != 200:
                    raise ProtocolError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}", samples)
                texts = self._parse(resp, samples)
                return CompletionBatch(texts, ["ok"] * len(texts), time.perf_counter() - start)
        raise TransportError(
            f"gave up after {self.config.max_retries + 1} attempts: {last_error}", samples
        )

    @staticmethod
    def _parse(resp: httpx.Response, samples: range) -> list[str]:
        try:
            body = resp.json()
            choices = body["choices"]
            texts = [choice["message"]["content"] for choice in choices]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed completion response: {exc!r}", samples) from None
        if not all(isinstance(t, str) for t in texts) or len(texts) > len(samples):
            raise ProtocolError("completion contents are not a list of at most k strings", samples)
        return texts


class ReplayEndpoint:
    """Serves recorded outputs; ``on_missing`` is ``"error"`` or ``"empty"``."""

    def __init__(self, entries: dict[tuple[str, str], list[str]], on_missing: str = "error"):
        if on_missing not in ("error", "empty"):
            raise ValueError("on_missing must be 'error' or 'empty'")
        self.entries = entries
        self.on_missing = on_missing

    def complete(self, request: CompletionRequest) -> CompletionBatch:
        key = (text_hash(request.system), text_hash(request.user))
        outputs = self.entries.get(key)
        if outputs is None:
            if self.on_missing == "empty":
                return CompletionBatch([], [], 0.0)
            raise ReplayLookupError(
                f"no recorded outputs for system_hash={key[0]} user_hash={key[1]}", range(request.k)
            )
        texts = list(outputs[: request.k])
        return CompletionBatch(texts, ["ok"] * len(texts), 0.0)


def replay_from_file(path: Union[str, Path], on_missing: str = "error") -> ReplayEndpoint:
    entries: dict[tuple[str, str], list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key = (obj["system_hash"], obj["user_hash"])
                outputs = obj["outputs"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ReplayFormatError(f"{path}:{lineno}: {exc!r}") from None
            if not (isinstance(outputs, list) and all(isinstance(o, str) for o in outputs)):
                raise ReplayFormatError(f"{path}:{lineno}: outputs must be a list of strings")
            if not all(isinstance(h, str) for h in key):
                raise ReplayFormatError(f"{path}:{lineno}: hashes must be strings")
            entries[key] = outputs
    return ReplayEndpoint(entries, on_missing)


class RecordingEndpoint:
    """Pass-through that appends every successful batch to a replay stream."""

    def __init__(self, inner: Endpoint, sink: TextIO):
        self.inner = inner
        self.sink = sink
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionBatch:
        batch = self.inner.complete(request)
        line = json.dumps(
            {
                "system_hash": text_hash(request.system),
                "user_hash": text_hash(request.user),
                "outputs": batch.raw_texts,
            },
            ensure_ascii=False,
        )
        with self._lock:
            self.sink.write(line + "\n")
        return batch


def complete_many(
    endpoint: Endpoint, requests: Sequence[CompletionRequest], concurrency: int = 1
) -> list[Union[CompletionBatch, LLMClientError]]:
    """Run requests with at most ``concurrency`` in flight; results keep request order.

    Client errors are returned in place of the batch so one failure does not
    sink the rest.
    """

    def one(req: CompletionRequest):
        try:
            return endpoint.complete(req)
        except LLMClientError as exc:
            return exc

    if concurrency <= 1 or len(requests) <= 1:
        return [one(r) for r in requests]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, requests))


def open_endpoint(spec: str, config_path: Optional[Union[str, Path]] = None, on_missing: str = "error") -> Endpoint:
    """``replay:<file>`` or ``live`` (which needs a config file)."""
    if spec.startswith("replay:"):
        return replay_from_file(spec[len("replay:"):], on_missing)
    if spec == "live":
        if config_path is None:
            raise ValueError("live endpoint needs --config")
        return HTTPEndpoint(load_endpoint_config(config_path))
    raise ValueError(f"unknown endpoint {spec!r}; use 'live' or 'replay:<file>'")
