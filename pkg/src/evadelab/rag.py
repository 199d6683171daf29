"""Retrieval engine: chunking, embedding, exact top-k search, assembly.

The index is brute-force L2 over unit-norm embeddings.  Corpora here are
documentation-scale, so exact search is affordable and lets tests compare
against an exhaustive oracle; an approximate structure would satisfy the
same interface at larger scale.

Embedding is a provider contract: anything with `dimension`,
`fingerprint()` and `embed(text)`.  The built-in provider hashes lowercase
word tokens into signed buckets, which is deterministic, dependency-free,
and collision-checkable in tests.  A remote provider speaking the
newline-delimited JSON protocol can substitute for it.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import arrayio
from .errors import StaleIndexError
from .features import FeatureSet, group_by_class

MIN_PARAGRAPH_CHARS = 40
DEFAULT_DIMENSION = 384
DEFAULT_TOP_K = 5
DEFAULT_CONTEXT_BUDGET = 12000

INDEX_FORMAT = "evadelab-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Chunk:
    id: int
    source: str
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("chunk text must be non-empty")


def chunk_corpus(documents: Sequence[tuple[str, str]]) -> list[Chunk]:
    """Split (source, text) documents into paragraph chunks.

    Paragraphs are blank-line separated.  A paragraph shorter than
    MIN_PARAGRAPH_CHARS merges into the following one so no chunk except
    possibly a document's last is a contentless stub.  Chunk ids are dense
    0..N-1 in corpus order.
    """
    if not documents:
        raise ValueError("corpus contains no documents")
    chunks: list[Chunk] = []
    for source, text in documents:
        paragraphs = [p.strip() for p in text.split("\n\n")]
        paragraphs = [p for p in paragraphs if p]
        pending = ""
        for paragraph in paragraphs:
            candidate = f"{pending}\n{paragraph}" if pending else paragraph
            if len(candidate) < MIN_PARAGRAPH_CHARS:
                pending = candidate
                continue
            chunks.append(Chunk(len(chunks), source, candidate))
            pending = ""
        if pending:
            chunks.append(Chunk(len(chunks), source, pending))
    if not chunks:
        raise ValueError("corpus contains no text")
    return chunks


def load_corpus_dir(path: str | Path) -> list[tuple[str, str]]:
    """Read every .txt file under `path`, ordered by name for determinism."""
    root = Path(path)
    files = sorted(root.glob("*.txt"))
    if not files:
        raise ValueError(f"no .txt documents found in {root}")
    return [(f.name, f.read_text(encoding="utf-8")) for f in files]


class EmbeddingProvider(Protocol):
    dimension: int
    concurrent_safe: bool

    def fingerprint(self) -> str: ...

    def embed(self, text: str) -> np.ndarray: ...


def _normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise ValueError("embedding contains non-finite entries")
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ValueError("embedding has zero norm, cannot normalize")
    return vector / norm


class HashingEmbedder:
    """Seeded feature hashing of lowercase word tokens into signed buckets."""

    concurrent_safe = True

    def __init__(self, seed: int = 0, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.seed = seed
        self.dimension = dimension
        self._salt = seed.to_bytes(8, "little", signed=True)

    def fingerprint(self) -> str:
        return f"hashing-v1:d={self.dimension}:seed={self.seed}"

    def token_bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, salt=self._salt
        ).digest()
        value = int.from_bytes(digest, "little")
        bucket = value % self.dimension
        sign = 1.0 if (value >> 63) & 1 else -1.0
        return bucket, sign

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        tokens = text.lower().split()
        if not tokens:
            raise ValueError("text contains no tokens")
        vector = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            bucket, sign = self.token_bucket(token)
            vector[bucket] += sign
        return _normalize(vector)


class ChunkIndex:
    """Immutable embedding index over a fixed chunk list."""

    def __init__(self, chunks: Sequence[Chunk], embeddings: np.ndarray,
                 fingerprint: str, provider: EmbeddingProvider | None = None):
        if len(chunks) == 0:
            raise ValueError("index requires at least one chunk")
        if embeddings.shape[0] != len(chunks):
            raise ValueError("one embedding required per chunk")
        ids = [c.id for c in chunks]
        if ids != list(range(len(chunks))):
            raise ValueError("chunk ids must be dense 0..N-1")
        self.chunks = tuple(chunks)
        self.embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
        self.embeddings.setflags(write=False)
        self.fingerprint = fingerprint
        self._provider = provider
        self._embed_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def provider(self) -> EmbeddingProvider:
        if self._provider is None:
            raise StaleIndexError("index has no attached embedding provider")
        return self._provider

    def attach_provider(self, provider: EmbeddingProvider) -> None:
        if provider.fingerprint() != self.fingerprint:
            raise StaleIndexError(
                f"index built with {self.fingerprint!r} but provider is "
                f"{provider.fingerprint()!r}"
            )
        self._provider = provider

    def embed_query(self, text: str) -> np.ndarray:
        provider = self.provider
        if provider.fingerprint() != self.fingerprint:
            raise StaleIndexError(
                f"index built with {self.fingerprint!r} but provider is "
                f"{provider.fingerprint()!r}"
            )
        if getattr(provider, "concurrent_safe", True):
            return _normalize(provider.embed(text))
        with self._embed_lock:
            return _normalize(provider.embed(text))


def build_index(chunks: Sequence[Chunk], provider: EmbeddingProvider) -> ChunkIndex:
    matrix = np.empty((len(chunks), provider.dimension), dtype=np.float64)
    for i, chunk in enumerate(chunks):
        matrix[i] = _normalize(provider.embed(chunk.text))
    return ChunkIndex(chunks, matrix, provider.fingerprint(), provider)


def save_index(index: ChunkIndex, path: str | Path) -> None:
    meta = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "fingerprint": index.fingerprint,
        "chunks": [
            {"id": c.id, "source": c.source, "text": c.text} for c in index.chunks
        ],
    }
    arrayio.write_file(path, meta, {"embeddings": index.embeddings})


def load_index(path: str | Path, provider: EmbeddingProvider | None = None) -> ChunkIndex:
    meta, arrays = arrayio.read_file(path)
    if meta.get("format") != INDEX_FORMAT:
        raise ValueError("not a chunk index file")
    chunks = [Chunk(c["id"], c["source"], c["text"]) for c in meta["chunks"]]
    index = ChunkIndex(chunks, arrays["embeddings"], meta["fingerprint"])
    if provider is not None:
        index.attach_provider(provider)
    return index


def retrieve_top_k(
    index: ChunkIndex, query_text: str, k: int = DEFAULT_TOP_K
) -> list[tuple[int, float]]:
    """Exact k nearest chunks by L2 distance, ties broken by ascending id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    query = index.embed_query(query_text)
    diff = index.embeddings - query
    distances = np.sqrt(np.sum(diff * diff, axis=1))
    order = np.lexsort((np.arange(len(index)), distances))
    return [(int(i), float(distances[i])) for i in order[:k]]


@dataclass(frozen=True)
class ContextEntry:
    group_key: str
    chunk_id: int
    text: str


@dataclass(frozen=True)
class ContextWindow:
    entries: tuple[ContextEntry, ...]
    budget: int
    truncated: bool

    def __post_init__(self) -> None:
        ids = [e.chunk_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("context window contains duplicate chunks")

    def render(self) -> str:
        return "\n\n".join(f"[{e.group_key}] {e.text}" for e in self.entries)


def assemble_context(
    retrievals: Sequence[tuple[str, Sequence[tuple[int, float]]]],
    index: ChunkIndex,
    budget: int = DEFAULT_CONTEXT_BUDGET,
) -> ContextWindow:
    """Merge per-group retrievals into one deduplicated window.

    Order is group order then each group's retrieval (ascending-distance)
    order.  A chunk retrieved by several groups is attributed to the first.
    The budget counts chunk text characters; once the running total would
    pass it, that chunk and everything after is dropped whole.
    """
    if not retrievals:
        raise ValueError("at least one retrieval group is required")
    entries: list[ContextEntry] = []
    seen: set[int] = set()
    used = 0
    truncated = False
    for group_key, hits in retrievals:
        for chunk_id, _distance in hits:
            if chunk_id in seen:
                continue
            seen.add(chunk_id)
            text = index.chunks[chunk_id].text
            if used + len(text) > budget:
                truncated = True
                return ContextWindow(tuple(entries), budget, truncated)
            used += len(text)
            entries.append(ContextEntry(group_key, chunk_id, text))
    return ContextWindow(tuple(entries), budget, truncated)


def build_group_queries(features: FeatureSet) -> list[tuple[str, str]]:
    """One retrieval query per feature class: its feature lines joined."""
    return [
        (key, "\n".join(f.serialize() for f in group))
        for key, group in group_by_class(features)
    ]


def retrieve_for_features(
    index: ChunkIndex,
    features: FeatureSet,
    *,
    k: int = DEFAULT_TOP_K,
    budget: int = DEFAULT_CONTEXT_BUDGET,
    extra_groups: Sequence[tuple[str, str]] = (),
) -> ContextWindow:
    """Grouped retrieval: group features by defining class, query each
    group, append any extra (key, text) query groups, assemble one window."""
    queries = build_group_queries(features) + list(extra_groups)
    retrievals = [(key, retrieve_top_k(index, text, k)) for key, text in queries]
    return assemble_context(retrievals, index, budget)
