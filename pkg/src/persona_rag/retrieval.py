"""Hybrid search: fuse keyword and vector rankings with reciprocal ranks.

Fusion reads ranks, not scores, so it is invariant to any monotone rescaling
of either input ranking. A document appearing in both lists earns
1/(rrf_k + keyword_rank) + 1/(rrf_k + vector_rank); one appearance earns a
single term. Final order is fused score descending, ties broken by ascending
doc id.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DuplicateInList, EmptyIndex, EmptyQuery
from .index import Category, SearchIndex

DEFAULT_TOP_K = 3
DEFAULT_PER_METHOD_DEPTH = 50
DEFAULT_RRF_K = 60.0


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = DEFAULT_TOP_K
    per_method_depth: int = DEFAULT_PER_METHOD_DEPTH
    rrf_k: float = DEFAULT_RRF_K

    def __post_init__(self):
        if self.top_k < 1 or self.per_method_depth < 1:
            raise ValueError("top_k and per_method_depth must be at least 1")
        if self.top_k > self.per_method_depth:
            raise ValueError("top_k cannot exceed per_method_depth")
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be positive")


@dataclass(frozen=True)
class FusedHit:
    doc_id: str
    title: str
    category: Category
    fused_score: float
    keyword_rank: int | None
    vector_rank: int | None


def fuse_rankings(
    list_a: list[str], list_b: list[str], rrf_k: float = DEFAULT_RRF_K
) -> list[tuple[str, float]]:
    """Pure fusion kernel over two ranked id lists; ranks count from 1."""
    for ranked in (list_a, list_b):
        if len(set(ranked)) != len(ranked):
            raise DuplicateInList("ranked lists must not repeat ids")
    scores: dict[str, float] = {}
    for ranked in (list_a, list_b):
        for rank, doc_id in enumerate(ranked, start=1):
            scores[doc_id] = scores.get(doc_id, 0.0) + 1.0 / (rrf_k + rank)
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def hybrid_search(
    index: SearchIndex, query: str, cfg: RetrievalConfig | None = None
) -> list[FusedHit]:
    """Top-k documents by reciprocal-rank fusion of BM25 and vector rankings."""
    if cfg is None:
        cfg = RetrievalConfig()
    if not query.strip():
        raise EmptyQuery("hybrid search needs a non-empty query")
    if not index.docs:
        raise EmptyIndex("hybrid search requires a non-empty index")
    keyword_hits = index.keyword_search(query, cfg.per_method_depth)
    query_vector = index.embedder.embed(query)
    vector_hits = index.vector_search(query_vector, cfg.per_method_depth)
    keyword_rank = {hit.doc_id: hit.rank for hit in keyword_hits}
    vector_rank = {hit.doc_id: hit.rank for hit in vector_hits}
    fused = fuse_rankings(
        [hit.doc_id for hit in keyword_hits],
        [hit.doc_id for hit in vector_hits],
        cfg.rrf_k,
    )
    hits = []
    for doc_id, score in fused[: cfg.top_k]:
        doc = index.docs[doc_id]
        hits.append(
            FusedHit(
                doc_id=doc_id,
                title=doc.title,
                category=doc.category,
                fused_score=score,
                keyword_rank=keyword_rank.get(doc_id),
                vector_rank=vector_rank.get(doc_id),
            )
        )
    return hits
