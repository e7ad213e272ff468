"""Sentence-embedding backends and similarity math.

All embedders produce unit-L2-norm float64 vectors. The local fallback is
a hashed bag-of-tokens: deterministic across runs and platforms,
language-agnostic, and permutation-invariant, which is enough to exercise
the similarity gates offline. The remote backend speaks the
OpenAI-compatible /embeddings route (e.g. for the sentence-transformer
models served behind such endpoints).
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import requests

from .gateway import BackendRejected, BackendUnavailable, TransientBackendError

__all__ = [
    "DimensionMismatch",
    "EmbedderConfig",
    "EmptyPool",
    "EmptyText",
    "HashedBagEmbedder",
    "RemoteEmbedder",
    "cosine",
    "make_embedder",
    "nearest",
]

UNIT_NORM_TOLERANCE = 1e-6

_WORD = re.compile(r"\w+")


class EmptyText(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class EmptyPool(ValueError):
    pass


def unit(vector: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; zero vectors are rejected."""
    v = np.asarray(vector, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of two unit vectors; symmetric, in [-1, 1]."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"dimensions differ: {u.shape} vs {v.shape}")
    return float(np.dot(u, v))


def nearest(
    query: np.ndarray, pool: Sequence[tuple[str, np.ndarray]]
) -> tuple[str, float]:
    """Pool entry maximizing cosine against the query; ties go to the smallest id."""
    if not pool:
        raise EmptyPool("nearest() needs a non-empty pool")
    best_id: str | None = None
    best_score = -np.inf
    for item_id, vector in pool:
        score = cosine(query, vector)
        if score > best_score or (score == best_score and (best_id is None or item_id < best_id)):
            best_id, best_score = item_id, score
    assert best_id is not None
    return best_id, float(best_score)


class HashedBagEmbedder:
    """Local fallback embedder: hashed bag-of-tokens, unit L2 norm.

    Tokens are Unicode word matches after casefolding; each token maps to a
    fixed bucket and sign derived from its SHA-1 digest, so vectors are
    stable across runs and platforms. Texts with no word tokens fall back
    to hashing the whole trimmed text as a single token.
    """

    def __init__(self, dimension: int = 256):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    @property
    def fingerprint(self) -> str:
        return f"hashed-bag-{self.dimension}"

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha1(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % self.dimension
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        return bucket, sign

    def embed_one(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        tokens = _WORD.findall(text.casefold())
        if not tokens:
            tokens = [text.casefold().strip()]
        v = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            bucket, sign = self._slot(token)
            v[bucket] += sign
        if not v.any():
            # opposite-sign collisions cancelled everything; keep determinism
            bucket, _ = self._slot(tokens[0])
            v[bucket] = 1.0
        return unit(v)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_one(t) for t in texts]


class RemoteEmbedder:
    """OpenAI-compatible /embeddings client with batching and retry."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "CCKG_API_KEY",
        batch_size: int = 64,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.batch_size = batch_size
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._session = session or requests.Session()
        self._sleep = sleep
        self._dimension: int | None = None

    @property
    def fingerprint(self) -> str:
        return f"remote:{self.model}"

    def _post_batch(self, batch: list[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._session.post(
                    f"{self.base_url}/embeddings",
                    json={"model": self.model, "input": batch},
                    headers=headers,
                    timeout=self.timeout,
                )
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise TransientBackendError(f"status {resp.status_code}")
                if not resp.ok:
                    raise BackendRejected(f"status {resp.status_code}: {resp.text[:300]}")
                data = resp.json()["data"]
                return [unit(np.asarray(row["embedding"], dtype=np.float64)) for row in data]
            except requests.RequestException as exc:
                last = TransientBackendError(str(exc))
            except TransientBackendError as exc:
                last = exc
            except (ValueError, KeyError, TypeError) as exc:
                raise BackendRejected(f"malformed embeddings payload: {exc}") from None
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
        raise BackendUnavailable(
            f"embeddings endpoint failed after {self.max_attempts} attempts: {last}"
        )

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        for t in texts:
            if not t or not t.strip():
                raise EmptyText("cannot embed empty text")
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            vectors = self._post_batch(batch)
            if len(vectors) != len(batch):
                raise BackendRejected(
                    f"endpoint returned {len(vectors)} vectors for {len(batch)} inputs"
                )
            for v in vectors:
                if self._dimension is None:
                    self._dimension = v.shape[0]
                elif v.shape[0] != self._dimension:
                    raise DimensionMismatch(
                        f"endpoint changed dimension {self._dimension} -> {v.shape[0]}"
                    )
            out.extend(vectors)
        return out


@dataclass(frozen=True)
class EmbedderConfig:
    """Which embedding backend to use and how."""

    backend: str = "local-fallback"  # or "remote"
    model: str = ""
    dimension: int = 256
    language_hint: str = ""
    base_url: str = ""
    api_key_env: str = "CCKG_API_KEY"
    batch_size: int = 64

    def __post_init__(self):
        if self.backend not in ("local-fallback", "remote"):
            raise ValueError(f"unknown embedder backend {self.backend!r}")
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.backend == "remote" and not (self.base_url and self.model):
            raise ValueError("remote embedder needs base_url and model")


def make_embedder(config: EmbedderConfig):
    if config.backend == "remote":
        return RemoteEmbedder(
            base_url=config.base_url,
            model=config.model,
            api_key_env=config.api_key_env,
            batch_size=config.batch_size,
        )
    return HashedBagEmbedder(dimension=config.dimension)
