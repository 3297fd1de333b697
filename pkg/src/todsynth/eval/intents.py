"""Map free-form predicted intents onto the canonical label set.

Each raw string is embedded and assigned the canonical label with the
largest dot product (vectors are unit length).  The offline provider uses
hashed character-trigram counts; a remote embeddings endpoint can be used
instead and falls back to the offline provider when it fails.
"""

from __future__ import annotations

import logging
import re
import threading
import zlib
from collections import Counter
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

from todsynth.errors import EmbedderError

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


class EmbeddingProvider(Protocol):
    name: str

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return one unit-length row per text."""
        ...


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def normalize_label_text(text: str) -> str:
    return " ".join(re.sub(r"[^0-9a-z]+", " ", text.lower()).split())


class LexicalEmbedder:
    """Character-trigram term frequencies hashed into ``dim`` buckets."""

    name = "lexical-trigram"

    def __init__(self, dim: int = 1 << 14):
        self.dim = dim

    def trigrams(self, text: str) -> Counter:
        s = f" {normalize_label_text(text)} "
        return Counter(s[i:i + 3] for i in range(len(s) - 2))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for gram, count in self.trigrams(text).items():
                out[row, zlib.crc32(gram.encode("utf-8")) % self.dim] += count
        return _unit_rows(out)


class RemoteEmbedder:
    """Client for an OpenAI-style ``/embeddings`` endpoint."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.name = f"remote:{model}"
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = self._client.post(self.endpoint, json={"model": self.model, "input": list(texts)})
            resp.raise_for_status()
            rows = [item["embedding"] for item in resp.json()["data"]]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise EmbedderError(f"embedding request failed: {exc}") from exc
        if len(rows) != len(texts):
            raise EmbedderError("embedding count does not match input count")
        return _unit_rows(np.asarray(rows, dtype=np.float64))


class IntentNormalizer:
    def __init__(self, canonical: Iterable[str], embedder: EmbeddingProvider | None = None,
                 fallback: EmbeddingProvider | None = None):
        self.labels = sorted(set(canonical))
        if not self.labels:
            raise ValueError("canonical intent set is empty")
        self.embedder = embedder or LexicalEmbedder()
        self.fallback = fallback or LexicalEmbedder()
        self._matrices: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _matrix(self, provider: EmbeddingProvider) -> np.ndarray:
        with self._lock:
            m = self._matrices.get(provider.name)
            if m is None:
                m = self._matrices[provider.name] = provider.embed(self.labels)
            return m

    def _pick(self, provider: EmbeddingProvider, raws: Sequence[str]) -> list[str]:
        scores = provider.embed(raws) @ self._matrix(provider).T
        out = []
        for row in scores:
            # labels are sorted, so the first index within tolerance is the lexicographic tie-break
            best = row.max()
            out.append(self.labels[int(np.flatnonzero(row >= best - TIE_TOL)[0])])
        return out

    def normalize_many(self, raws: Sequence[str]) -> list[str]:
        if not raws:
            return []
        try:
            return self._pick(self.embedder, raws)
        except EmbedderError as exc:
            log.warning("%s; falling back to %s", exc, self.fallback.name)
            return self._pick(self.fallback, raws)

    def __call__(self, raw: str) -> str:
        return self.normalize_many([raw])[0]


_CACHE: dict[tuple[int, tuple[str, ...]], IntentNormalizer] = {}


def normalize_intent(raw: str, canonical: Iterable[str], embedder: EmbeddingProvider | None = None) -> str:
    """Nearest canonical label to ``raw`` by embedding dot product."""
    labels = tuple(sorted(set(canonical)))
    if not labels:
        raise ValueError("canonical intent set is empty")
    key = (id(embedder), labels)
    norm = _CACHE.get(key)
    if norm is None:
        norm = _CACHE[key] = IntentNormalizer(labels, embedder)
    return norm(raw)
