"""Text embedding behind one interface.

Two backends:

* ``mock``: deterministic signed-hash bag-of-words, unit-norm. Lexically
  similar texts land close together, which is all the retrieval tests need,
  and identical (text, seed) pairs produce bitwise-equal vectors.
* ``remote``: HTTPS JSON embedding endpoint with an on-disk cache keyed by
  SHA-256 of (model id, text), so integration runs are reproducible.

Documents longer than ``max_embed_chars`` are embedded on their prefix; the
truncation is reported to the caller.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyText, RemoteUnavailable, ZeroVector

DEFAULT_DIMENSION = 1536
MAX_EMBED_CHARS = 8000

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class EmbedderConfig:
    backend: str = "mock"               # "mock" | "remote"
    model_id: str = "mock-bow"
    dimension: int = DEFAULT_DIMENSION
    cache_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.backend not in ("mock", "remote"):
            raise ValueError(f"unknown embedder backend {self.backend!r}")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens, split on non-alphanumeric runs."""
    return _TOKEN.findall(text.lower())


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|), defined for equal-dimension nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"dimensions differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vector")
    return float(np.dot(u, v) / (nu * nv))


class Embedder:
    """Base interface: embed(text) -> float32 vector of the configured dimension."""

    def __init__(self, config: EmbedderConfig):
        self.config = config

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_document(self, text: str) -> tuple[np.ndarray, bool]:
        """Embed a document prefix; returns (vector, truncated flag)."""
        truncated = len(text) > MAX_EMBED_CHARS
        return self.embed(text[:MAX_EMBED_CHARS]), truncated


class MockEmbedder(Embedder):
    """Signed-hash bag-of-words embedder, a pure function of (text, seed)."""

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        dim = self.config.dimension
        vec = np.zeros(dim, dtype=np.float64)
        seed_bytes = str(self.config.seed).encode()
        for token in tokenize(text):
            digest = hashlib.blake2b(token.encode(), key=seed_bytes, digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            bucket = (value >> 1) % dim
            sign = 1.0 if value & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # no alphanumeric tokens; fall back to a hash of the raw text
            digest = hashlib.blake2b(text.encode(), key=seed_bytes, digest_size=8).digest()
            vec[int.from_bytes(digest, "little") % dim] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)


class RemoteEmbedder(Embedder):
    """Client for an HTTPS embedding endpoint with a content-hash disk cache.

    Endpoint, model id, and key come from ``EMBED_ENDPOINT``, ``EMBED_MODEL``,
    and ``EMBED_API_KEY`` unless set in the config. Responses are cached one
    file per hash as raw little-endian float32.
    """

    def __init__(self, config: EmbedderConfig, transport=None):
        super().__init__(config)
        self._endpoint = os.environ.get("EMBED_ENDPOINT", "")
        self._api_key = os.environ.get("EMBED_API_KEY", "")
        self._model_id = config.model_id or os.environ.get("EMBED_MODEL", "")
        self._transport = transport
        self._cache_dir = Path(config.cache_path) if config.cache_path else None
        self._cache_lock = threading.Lock()

    def _cache_file(self, text: str) -> Path | None:
        if self._cache_dir is None:
            return None
        digest = hashlib.sha256(f"{self._model_id}\x00{text}".encode()).hexdigest()
        return self._cache_dir / f"{digest}.f32"

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        cache_file = self._cache_file(text)
        if cache_file is not None and cache_file.exists():
            vec = np.frombuffer(cache_file.read_bytes(), dtype="<f4")
            if vec.shape[0] != self.dimension:
                raise DimensionMismatch(
                    f"cached vector has dimension {vec.shape[0]}, expected {self.dimension}"
                )
            return vec.copy()
        vec = self._fetch(text)
        if cache_file is not None:
            with self._cache_lock:
                cache_file.parent.mkdir(parents=True, exist_ok=True)
                tmp = cache_file.with_suffix(".tmp")
                tmp.write_bytes(vec.astype("<f4").tobytes())
                tmp.replace(cache_file)
        return vec

    def _fetch(self, text: str) -> np.ndarray:
        import httpx

        if not self._endpoint:
            raise RemoteUnavailable("EMBED_ENDPOINT is not configured")
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        try:
            with httpx.Client(transport=self._transport, timeout=30.0) as client:
                resp = client.post(
                    self._endpoint,
                    json={"model": self._model_id, "input": text},
                    headers=headers,
                )
        except httpx.HTTPError as exc:
            raise RemoteUnavailable(f"embedding request failed: {exc}") from exc
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After")
            raise RemoteUnavailable(
                "embedding provider rate limited",
                retry_after=float(retry) if retry else None,
            )
        if resp.status_code != 200:
            raise RemoteUnavailable(f"embedding provider returned {resp.status_code}")
        payload = resp.json()
        values = payload["data"][0]["embedding"]
        vec = np.asarray(values, dtype=np.float32)
        if vec.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"provider returned dimension {vec.shape[0]}, expected {self.dimension}"
            )
        return vec


def make_embedder(config: EmbedderConfig, transport=None) -> Embedder:
    if config.backend == "mock":
        return MockEmbedder(config)
    return RemoteEmbedder(config, transport=transport)
