"""Storage and search core: document store, BM25 inverted index, HNSW graph.

One :class:`SearchIndex` owns three aligned structures: a document map, an
inverted index with term frequencies for BM25 ranking, and an HNSW proximity
graph over the document vectors for approximate nearest-neighbor search.
Documents arrive with or without vectors; missing vectors are produced by the
attached embedder. Vectors are L2-normalized on ingest so cosine similarity
reduces to a dot product.

Concurrency contract: any number of concurrent readers OR one writer.
Search operations never mutate; upsert and delete require exclusive access.
Enforcement lives in the service layer.
"""

from __future__ import annotations

import dataclasses
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from ..embedding import Embedder, tokenize
from ..errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyBatch,
    EmptyIndex,
    EmptyQuery,
    EmptyText,
    ZeroVector,
)
from .hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_EF_SEARCH, DEFAULT_M, HnswGraph

DEFAULT_BM25_K1 = 1.2
DEFAULT_BM25_B = 0.75


class Category(str, Enum):
    PERSONA = "persona"
    GENERAL_INFORMATION = "general_information"
    SUCCESS_STORY = "success_story"


@dataclass(frozen=True, eq=False)
class DocumentRecord:
    """An indexed unit: a persona, a knowledge chunk, or a success story."""

    id: str
    title: str
    category: Category
    content: str
    content_vector: np.ndarray | None = None


@dataclass(frozen=True)
class IndexConfig:
    dimension: int
    bm25_k1: float = DEFAULT_BM25_K1
    bm25_b: float = DEFAULT_BM25_B
    hnsw_m: int = DEFAULT_M
    hnsw_ef_construction: int = DEFAULT_EF_CONSTRUCTION
    hnsw_ef_search: int = DEFAULT_EF_SEARCH
    metric: str = "cosine"
    seed: int = 0

    def __post_init__(self):
        if self.dimension <= 0 or self.bm25_k1 <= 0:
            raise ValueError("dimension and bm25_k1 must be positive")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ValueError("bm25_b must be within [0, 1]")
        if self.hnsw_m <= 0 or self.hnsw_ef_construction <= 0 or self.hnsw_ef_search <= 0:
            raise ValueError("HNSW parameters must be positive")
        if self.metric != "cosine":
            raise ValueError("only the cosine metric is supported")


@dataclass(frozen=True)
class ScoredHit:
    doc_id: str
    title: str
    category: Category
    score: float
    rank: int


def _normalize(vector: np.ndarray, dimension: int) -> np.ndarray:
    vec = np.asarray(vector, dtype=np.float32)
    if vec.ndim != 1 or vec.shape[0] != dimension:
        raise DimensionMismatch(
            f"vector has shape {vec.shape}, expected ({dimension},)"
        )
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if norm == 0.0 or not math.isfinite(norm):
        raise ZeroVector("document vectors must be nonzero and finite")
    # near-unit vectors pass through bit-identical, which makes normalization
    # idempotent; re-upserting a stored vector then compares equal and can
    # revive its tombstoned graph node instead of inserting a duplicate
    if abs(norm - 1.0) < 1e-6:
        return vec.copy()
    return (vec.astype(np.float64) / norm).astype(np.float32)


class SearchIndex:
    """Document store queried three ways: keyword (BM25), vector (HNSW), exact."""

    def __init__(self, embedder: Embedder, config: IndexConfig | None = None):
        if config is None:
            config = IndexConfig(dimension=embedder.dimension)
        if embedder.dimension != config.dimension:
            raise DimensionMismatch(
                f"embedder dimension {embedder.dimension} != index dimension {config.dimension}"
            )
        self.embedder = embedder
        self.config = config
        self.docs: dict[str, DocumentRecord] = {}
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_lengths: dict[str, int] = {}
        self.hnsw = HnswGraph(
            dimension=config.dimension,
            m=config.hnsw_m,
            ef_construction=config.hnsw_ef_construction,
            seed=config.seed,
        )
        # doc id <-> HNSW ordinal; a replaced document keeps its id but moves
        # to a fresh ordinal, the old one stays tombstoned
        self._ordinal_of: dict[str, int] = {}
        self._id_of: list[str] = []

    def __len__(self) -> int:
        return len(self.docs)

    def hnsw_key(self, ordinal: int) -> str:
        """Doc id stored at a graph ordinal (tombstoned ordinals included)."""
        return self._id_of[ordinal]

    def attach_ordinal(self, doc_id: str, ordinal: int) -> None:
        """Bind a doc id to a graph ordinal; used when reloading from disk."""
        if ordinal != len(self._id_of):
            raise ValueError("ordinals must attach in sequence")
        self._id_of.append(doc_id)
        self._ordinal_of[doc_id] = ordinal

    @property
    def avg_doc_length(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)

    # -- writes -------------------------------------------------------------

    def upsert_documents(self, batch: Sequence[DocumentRecord]) -> int:
        """Insert or fully replace documents; returns the number upserted.

        Records without a vector are embedded from their content. Vectors are
        normalized copies; callers' arrays are never mutated.
        """
        if not batch:
            raise EmptyBatch("upsert requires at least one document")
        ids = [record.id for record in batch]
        if len(set(ids)) != len(ids):
            raise DuplicateId("batch contains repeated document ids")
        prepared: list[tuple[DocumentRecord, np.ndarray]] = []
        for record in batch:
            if not record.id:
                raise ValueError("document id must be non-empty")
            if not record.content.strip():
                raise EmptyText(f"document {record.id!r} has empty content")
            if record.content_vector is None:
                vector, _ = self.embedder.embed_document(record.content)
            else:
                vector = record.content_vector
            prepared.append((record, _normalize(vector, self.config.dimension)))
        for record, vector in prepared:
            if record.id in self.docs:
                self._remove(record.id)
            stored = dataclasses.replace(record, content_vector=vector)
            self.docs[record.id] = stored
            tokens = tokenize(record.content)
            self.doc_lengths[record.id] = len(tokens)
            for term, count in Counter(tokens).items():
                self.postings.setdefault(term, []).append((record.id, count))
            previous = self._ordinal_of.get(record.id)
            if previous is not None and np.array_equal(self.hnsw.vector(previous), vector):
                # same id, same vector: revive the tombstoned node so the
                # graph (and every query answer) is exactly what it was
                self.hnsw.revive(previous)
            else:
                ordinal = self.hnsw.add(record.id, vector)
                self._ordinal_of[record.id] = ordinal
                self._id_of.append(record.id)
        return len(batch)

    def _remove(self, doc_id: str) -> None:
        for term in set(tokenize(self.docs[doc_id].content)):
            remaining = [(d, c) for d, c in self.postings[term] if d != doc_id]
            if remaining:
                self.postings[term] = remaining
            else:
                del self.postings[term]
        del self.docs[doc_id]
        del self.doc_lengths[doc_id]
        self.hnsw.mark_dead(self._ordinal_of[doc_id])

    def delete_document(self, doc_id: str) -> None:
        """Remove a document; its HNSW node is tombstoned, not unlinked."""
        if doc_id not in self.docs:
            raise KeyError(doc_id)
        self._remove(doc_id)

    # -- reads --------------------------------------------------------------

    def list_documents(self, category: Category | None = None) -> list[DocumentRecord]:
        records = (
            doc for doc in self.docs.values()
            if category is None or doc.category == category
        )
        return sorted(records, key=lambda doc: doc.id)

    def keyword_search(self, query: str, k: int) -> list[ScoredHit]:
        """BM25 top-k. Repeated query terms count once; ties break by doc id."""
        if k < 1:
            raise ValueError("k must be at least 1")
        terms = list(dict.fromkeys(tokenize(query)))
        if not terms:
            raise EmptyQuery("query has no searchable terms")
        if not self.docs:
            raise EmptyIndex("keyword search requires a non-empty index")
        n = len(self.docs)
        avgdl = self.avg_doc_length
        k1 = self.config.bm25_k1
        b = self.config.bm25_b
        scores: dict[str, float] = {}
        for term in terms:
            posting = self.postings.get(term)
            if not posting:
                continue
            idf = math.log(1.0 + (n - len(posting) + 0.5) / (len(posting) + 0.5))
            for doc_id, tf in posting:
                length_norm = k1 * (1.0 - b + b * self.doc_lengths[doc_id] / avgdl)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / (tf + length_norm)
        ranked = sorted(
            ((score, doc_id) for doc_id, score in scores.items()),
            key=lambda item: (-item[0], item[1]),
        )[:k]
        return self._to_hits(ranked)

    def vector_search(self, query_vector: np.ndarray, k: int) -> list[ScoredHit]:
        """Approximate top-k by cosine similarity through the HNSW graph."""
        if k < 1:
            raise ValueError("k must be at least 1")
        if not self.docs:
            raise EmptyIndex("vector search requires a non-empty index")
        query = _normalize(query_vector, self.config.dimension)
        ef = self.config.hnsw_ef_search
        # pull the whole beam, not just k, so the k-boundary tie-break below
        # is (score, doc id) rather than graph ordinal
        found = self.hnsw.search(query, max(k, ef), ef)
        ordinals = [ordinal for _, ordinal in found]
        # re-score with the same arithmetic exact_vector_search uses, so both
        # paths rank a shared candidate identically down to the last bit
        sims = self.hnsw.vectors[ordinals] @ query
        scored = sorted(
            zip(sims.tolist(), (self._id_of[o] for o in ordinals)),
            key=lambda item: (-item[0], item[1]),
        )
        return self._to_hits(scored[:k])

    def exact_vector_search(self, query_vector: np.ndarray, k: int) -> list[ScoredHit]:
        """Brute-force exact cosine top-k; the oracle vector_search approximates."""
        if k < 1:
            raise ValueError("k must be at least 1")
        if not self.docs:
            raise EmptyIndex("vector search requires a non-empty index")
        query = _normalize(query_vector, self.config.dimension)
        ids = list(self.docs.keys())
        matrix = np.stack([self.docs[doc_id].content_vector for doc_id in ids])
        sims = matrix @ query
        scored = sorted(zip(sims.tolist(), ids), key=lambda item: (-item[0], item[1]))[:k]
        return self._to_hits(scored)

    def _to_hits(self, ranked: Iterable[tuple[float, str]]) -> list[ScoredHit]:
        hits = []
        for rank, (score, doc_id) in enumerate(ranked, start=1):
            doc = self.docs[doc_id]
            hits.append(
                ScoredHit(
                    doc_id=doc_id,
                    title=doc.title,
                    category=doc.category,
                    score=float(score),
                    rank=rank,
                )
            )
        return hits
