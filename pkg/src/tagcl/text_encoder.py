"""Text-to-vector encoding.

The local encoder is signed feature hashing of word n-grams: dependency
free, deterministic, and portable, a desk-scale stand-in for a frozen
transformer encoder. The remote path delegates to an embedding service
and restores fidelity when one is available. Either way every nonzero
row is L2-normalized, so cosine similarity downstream is a dot product.

Hashing is 64-bit FNV-1a over the UTF-8 bytes of the n-gram (tokens
joined by single spaces), with the state pre-mixed by XOR-ing hash_seed
into the offset basis. The top hash bit picks the sign, the rest (mod
dimension) the bucket. This is fixed so golden vectors are portable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tagcl.cache import CacheStore
from tagcl.errors import TransportError

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a64(data: bytes, seed: int = 0) -> int:
    h = (_FNV_OFFSET ^ (seed & _MASK)) & _MASK
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK
    return h


@dataclass(frozen=True)
class EmbeddingConfig:
    dimension: int = 768
    ngram_min: int = 1
    ngram_max: int = 2
    lowercase: bool = True
    hash_seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise ValueError("need 1 <= ngram_min <= ngram_max")


def encode_text(text: str, config: EmbeddingConfig) -> np.ndarray:
    """Hash word n-grams into a signed bag vector, then L2-normalize.

    Empty text gives the zero vector; zero vectors stay zero.
    """
    if config.lowercase:
        text = text.lower()
    tokens = text.split()
    vec = np.zeros(config.dimension, dtype=np.float64)
    for n in range(config.ngram_min, config.ngram_max + 1):
        for start in range(len(tokens) - n + 1):
            gram = " ".join(tokens[start:start + n])
            h = fnv1a64(gram.encode("utf-8"), config.hash_seed)
            sign = 1.0 if (h >> 63) == 0 else -1.0
            vec[h % config.dimension] += sign
    norm = float(np.sqrt(np.sum(vec * vec)))
    if norm > 0.0:
        vec /= norm
    return vec


def encode_corpus(texts, config: EmbeddingConfig) -> np.ndarray:
    """Stack per-text encodings into an N x dimension feature matrix."""
    rows = [encode_text(t, config) for t in texts]
    if not rows:
        return np.zeros((0, config.dimension), dtype=np.float64)
    return np.stack(rows)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(matrix * matrix, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    return matrix / safe[:, None]


def _embed_cache_key(model_id: str, text: str) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(b"embed\x00")
    h.update(model_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(text.encode("utf-8"))
    return h.hexdigest()


def remote_encode(client, texts, dimension: int, cache: CacheStore | None = None) -> np.ndarray:
    """Fetch embeddings from a service, batched, preserving input order.

    Rows are L2-normalized like the local encoder; per-text results are
    cached by digest when a cache is supplied.
    """
    texts = list(texts)
    if not texts:
        return np.zeros((0, dimension), dtype=np.float64)

    vectors: list[np.ndarray | None] = [None] * len(texts)
    pending: list[int] = []
    for i, text in enumerate(texts):
        if cache is not None:
            hit = cache.get(_embed_cache_key(client.model_id, text))
            if hit is not None:
                vectors[i] = np.asarray(hit["vector"], dtype=np.float64)
                continue
        pending.append(i)

    for batch_start in range(0, len(pending), client.batch_size):
        batch_ids = pending[batch_start:batch_start + client.batch_size]
        embedded = client.embed_batch([texts[i] for i in batch_ids])
        for i, vec in zip(batch_ids, embedded):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dimension,):
                raise TransportError(
                    f"service returned dimension {arr.shape}, expected ({dimension},)"
                )
            vectors[i] = arr
            if cache is not None:
                cache.put(
                    _embed_cache_key(client.model_id, texts[i]),
                    {"model_id": client.model_id, "vector": arr.tolist()},
                )

    matrix = np.stack([v for v in vectors])  # type: ignore[arg-type]
    if matrix.shape[1] != dimension:
        raise TransportError(
            f"cached vectors have dimension {matrix.shape[1]}, expected {dimension}"
        )
    return _normalize_rows(matrix)
