"""Chat-completion and embedding backends behind one small interface.

Three families live here:

* live OpenAI-compatible HTTP backends (retry with exponential backoff,
  token-bucket rate limiting),
* deterministic mocks so entire pipelines run reproducibly offline,
* a content-addressed on-disk response cache that wraps either.

All providers are safe for concurrent calls; counters and the mock's
sequence cursors are lock-protected.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ProviderError, ScriptMissError

logger = logging.getLogger(__name__)

# Purpose labels carried by chat requests; used for mock script lookup.
CHAT_TAGS = ("successor", "likert", "judge", "intent_gen", "codegen")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call."""

    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    seed: int | None = None
    max_output: int = 1024
    tag: str = "successor"

    def __post_init__(self):
        if not self.messages:
            raise ValueError("ChatRequest needs at least one message")
        if not np.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"bad temperature: {self.temperature}")


@dataclass(frozen=True)
class EmbeddingRequest:
    """One embedding call over a batch of texts."""

    texts: tuple[str, ...]
    model_tag: str

    def __post_init__(self):
        if not self.texts:
            raise ValueError("EmbeddingRequest needs at least one text")
        if any(not t for t in self.texts):
            raise ValueError("EmbeddingRequest texts must be non-empty")


def prompt_digest(messages: Sequence[tuple[str, str]]) -> str:
    """Stable hex digest of a message list, used for script and cache keys."""
    payload = json.dumps([[r, t] for r, t in messages], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def chat_cache_key(model_tag: str, req: ChatRequest) -> str:
    payload = json.dumps(
        {
            "kind": "chat",
            "model": model_tag,
            "messages": [[r, t] for r, t in req.messages],
            "temperature": req.temperature,
            "seed": req.seed,
            "max_output": req.max_output,
        },
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def embed_cache_key(model_tag: str, text: str) -> str:
    payload = json.dumps({"kind": "embed", "model": model_tag, "text": text}, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatProvider:
    """Base chat backend. Subclasses implement `_complete`."""

    model_tag: str = "unknown"

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, req: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        return self._complete(req)

    def _complete(self, req: ChatRequest) -> str:
        raise NotImplementedError


class EmbeddingProvider:
    """Base embedding backend. Subclasses implement `_embed`."""

    model_tag: str = "unknown"
    dimension: int = 0

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0

    def embed(self, req: EmbeddingRequest) -> list[np.ndarray]:
        with self._lock:
            self.calls += 1
        vectors = self._embed(req)
        if len(vectors) != len(req.texts):
            raise ProviderError(
                f"embedder returned {len(vectors)} vectors for {len(req.texts)} texts"
            )
        return vectors

    def _embed(self, req: EmbeddingRequest) -> list[np.ndarray]:
        raise NotImplementedError


class MockChatProvider(ChatProvider):
    """Deterministic scripted chat backend for tests and golden runs.

    Resolution order per request: exact script keyed by (tag, prompt
    digest), then the `responder` callable if set, then the next item in
    the per-tag scripted sequence. A request nothing matches is a test
    bug and fails loudly with `ScriptMissError`.
    """

    def __init__(
        self,
        scripts: dict[tuple[str, str], str] | None = None,
        sequences: dict[str, list[str]] | None = None,
        responder: Callable[[ChatRequest], str | None] | None = None,
        model_tag: str = "mock-chat",
    ):
        super().__init__()
        self.model_tag = model_tag
        self.scripts = dict(scripts or {})
        self._sequences = {tag: list(items) for tag, items in (sequences or {}).items()}
        self._cursors: dict[str, int] = {}
        self.responder = responder
        self._seq_lock = threading.Lock()

    def _complete(self, req: ChatRequest) -> str:
        digest = prompt_digest(req.messages)
        hit = self.scripts.get((req.tag, digest))
        if hit is not None:
            return hit
        if self.responder is not None:
            answer = self.responder(req)
            if answer is not None:
                return answer
        with self._seq_lock:
            seq = self._sequences.get(req.tag)
            if seq is not None:
                pos = self._cursors.get(req.tag, 0)
                if pos < len(seq):
                    self._cursors[req.tag] = pos + 1
                    return seq[pos]
        raise ScriptMissError(
            f"no scripted response for tag={req.tag!r} digest={digest[:12]}..."
        )


class MockEmbeddingProvider(EmbeddingProvider):
    """Deterministic embedder: unit vectors seeded from a text digest."""

    def __init__(self, dimension: int = 64, model_tag: str | None = None):
        super().__init__()
        self.dimension = dimension
        self.model_tag = model_tag or f"mock-embed-{dimension}"

    def _vector(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.model_tag}\0{text}".encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big") % (2**32)
        rng = np.random.RandomState(seed)
        vec = rng.standard_normal(self.dimension)
        vec /= np.linalg.norm(vec)
        return vec.astype(np.float32)

    def _embed(self, req: EmbeddingRequest) -> list[np.ndarray]:
        return [self._vector(t) for t in req.texts]


class ResponseCache:
    """Append-friendly on-disk store, one JSON file per request digest."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str):
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            logger.warning("unreadable cache entry %s: %s", path, exc)
            return None

    def put(self, key: str, payload) -> None:
        path = self._path(key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False)
            os.replace(tmp, path)


class CachingChatProvider(ChatProvider):
    """Wraps a chat backend with the on-disk cache.

    Replay is byte-identical to the original response; the key covers
    model tag, full message content, temperature, seed, and output cap.
    """

    def __init__(self, inner: ChatProvider, cache: ResponseCache):
        super().__init__()
        self.inner = inner
        self.cache = cache
        self.model_tag = inner.model_tag
        self.hits = 0
        self.misses = 0

    def _complete(self, req: ChatRequest) -> str:
        key = chat_cache_key(self.inner.model_tag, req)
        entry = self.cache.get(key)
        if entry is not None:
            with self._lock:
                self.hits += 1
            return entry["response"]
        with self._lock:
            self.misses += 1
        response = self.inner.complete(req)
        self.cache.put(key, {"response": response})
        return response


class CachingEmbeddingProvider(EmbeddingProvider):
    """Per-text embedding cache; only cache misses reach the backend."""

    def __init__(self, inner: EmbeddingProvider, cache: ResponseCache):
        super().__init__()
        self.inner = inner
        self.cache = cache
        self.model_tag = inner.model_tag
        self.dimension = inner.dimension
        self.hits = 0
        self.misses = 0

    def _embed(self, req: EmbeddingRequest) -> list[np.ndarray]:
        vectors: list[np.ndarray | None] = []
        missing: list[int] = []
        for i, text in enumerate(req.texts):
            entry = self.cache.get(embed_cache_key(self.inner.model_tag, text))
            if entry is None:
                vectors.append(None)
                missing.append(i)
            else:
                vectors.append(np.asarray(entry["vector"], dtype=np.float32))
        with self._lock:
            self.hits += len(req.texts) - len(missing)
            self.misses += len(missing)
        if missing:
            sub = EmbeddingRequest(
                texts=tuple(req.texts[i] for i in missing), model_tag=req.model_tag
            )
            fresh = self.inner.embed(sub)
            for i, vec in zip(missing, fresh):
                vectors[i] = np.asarray(vec, dtype=np.float32)
                self.cache.put(
                    embed_cache_key(self.inner.model_tag, req.texts[i]),
                    {"vector": [float(x) for x in vectors[i]]},
                )
        return [v for v in vectors if v is not None]


class TokenBucket:
    """Blocking token-bucket limiter shared by one live backend."""

    def __init__(self, rate_per_sec: float, capacity: int):
        self.rate = rate_per_sec
        self.capacity = capacity
        self._tokens = float(capacity)
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


def _resolve_api_key(env_var: str) -> str:
    key = os.environ.get(env_var, "")
    if not key:
        raise ProviderError(f"missing credential: set {env_var}")
    return key


class OpenAICompatChatProvider(ChatProvider):
    """Chat backend speaking the OpenAI-compatible /chat/completions API."""

    RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(
        self,
        model: str,
        endpoint: str = "https://api.openai.com/v1",
        api_key_env: str = "OPENAI_API_KEY",
        max_attempts: int = 4,
        backoff: float = 1.0,
        timeout: float = 120.0,
        requests_per_sec: float = 2.0,
        max_concurrency: int = 4,
    ):
        super().__init__()
        self.model_tag = model
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout
        self.limiter = TokenBucket(requests_per_sec, max(1, int(requests_per_sec * 2)))
        self.semaphore = threading.Semaphore(max_concurrency)

    def _complete(self, req: ChatRequest) -> str:
        import requests

        body = {
            "model": self.model_tag,
            "messages": [{"role": r, "content": t} for r, t in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        headers = {"Authorization": f"Bearer {_resolve_api_key(self.api_key_env)}"}
        last = "no attempts made"
        for attempt in range(self.max_attempts):
            self.limiter.acquire()
            try:
                with self.semaphore:
                    resp = requests.post(
                        f"{self.endpoint}/chat/completions",
                        json=body,
                        headers=headers,
                        timeout=self.timeout,
                    )
            except requests.RequestException as exc:
                last = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    return resp.json()["choices"][0]["message"]["content"]
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in self.RETRYABLE:
                    break
            time.sleep(self.backoff * (2**attempt))
        raise ProviderError(f"chat request failed after {self.max_attempts} attempts ({last})")


class OpenAICompatEmbeddingProvider(EmbeddingProvider):
    """Embedding backend speaking the OpenAI-compatible /embeddings API."""

    def __init__(
        self,
        model: str,
        dimension: int = 3072,
        endpoint: str = "https://api.openai.com/v1",
        api_key_env: str = "OPENAI_API_KEY",
        max_attempts: int = 4,
        backoff: float = 1.0,
        timeout: float = 120.0,
    ):
        super().__init__()
        self.model_tag = model
        self.dimension = dimension
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout

    def _embed(self, req: EmbeddingRequest) -> list[np.ndarray]:
        import requests

        body = {"model": self.model_tag, "input": list(req.texts)}
        headers = {"Authorization": f"Bearer {_resolve_api_key(self.api_key_env)}"}
        last = "no attempts made"
        for attempt in range(self.max_attempts):
            try:
                resp = requests.post(
                    f"{self.endpoint}/embeddings", json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    data = sorted(resp.json()["data"], key=lambda d: d["index"])
                    return [np.asarray(d["embedding"], dtype=np.float32) for d in data]
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in OpenAICompatChatProvider.RETRYABLE:
                    break
            time.sleep(self.backoff * (2**attempt))
        raise ProviderError(f"embedding request failed after {self.max_attempts} attempts ({last})")


@dataclass
class ProviderSet:
    """The provider roles one search run needs."""

    successor: ChatProvider
    embedder: EmbeddingProvider
    likert: ChatProvider | None = None
    judge: ChatProvider | None = None
    intent_gen: ChatProvider | None = None
    extras: dict = field(default_factory=dict)
