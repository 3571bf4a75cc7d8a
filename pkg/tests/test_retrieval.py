"""Tests for reciprocal-rank fusion and hybrid search."""

from __future__ import annotations

import pytest

from persona_rag.errors import DuplicateInList, EmptyIndex, EmptyQuery
from persona_rag.index import IndexConfig, SearchIndex
from persona_rag.retrieval import (
    DEFAULT_PER_METHOD_DEPTH,
    DEFAULT_RRF_K,
    DEFAULT_TOP_K,
    FusedHit,
    RetrievalConfig,
    fuse_rankings,
    hybrid_search,
)

from conftest import make_corpus_documents, make_mock_embedder, make_queries


class TestFuseRankings:
    """Pure fusion kernel against hand-computed reciprocal-rank sums."""

    def test_defaults(self) -> None:
        assert (DEFAULT_TOP_K, DEFAULT_PER_METHOD_DEPTH, DEFAULT_RRF_K) == (3, 50, 60.0)

    def test_rank_one_in_both_lists(self) -> None:
        fused = fuse_rankings(["a", "b"], ["b", "a"])
        assert [doc_id for doc_id, _ in fused] == ["a", "b"]
        for _, score in fused:
            assert score == pytest.approx(1 / 61 + 1 / 62, abs=1e-15)
        assert fused[0][1] == pytest.approx(0.03252247488101534, abs=1e-15)

    def test_rank_one_plus_rank_three(self) -> None:
        fused = fuse_rankings(["x", "y", "z"], ["p", "q", "x"])
        scores = dict(fused)
        assert scores["x"] == pytest.approx(1 / 61 + 1 / 63, abs=1e-15)
        assert scores["x"] == pytest.approx(0.0322664584959667, abs=1e-13)

    def test_single_appearance_earns_one_term(self) -> None:
        fused = dict(fuse_rankings(["only"], []))
        assert fused["only"] == pytest.approx(1 / 61, abs=1e-15)

    def test_ranks_count_from_one(self) -> None:
        fused = dict(fuse_rankings(["a", "b", "c"], []))
        assert fused["a"] == pytest.approx(1 / (60.0 + 1), abs=1e-15)
        assert fused["c"] == pytest.approx(1 / (60.0 + 3), abs=1e-15)

    def test_equal_scores_break_ties_by_doc_id(self) -> None:
        fused = fuse_rankings(["b"], ["a"])
        assert [doc_id for doc_id, _ in fused] == ["a", "b"]

    def test_custom_rrf_constant(self) -> None:
        fused = dict(fuse_rankings(["a"], ["a"], rrf_k=1.0))
        assert fused["a"] == pytest.approx(1.0, abs=1e-15)

    def test_both_lists_empty(self) -> None:
        assert fuse_rankings([], []) == []

    def test_duplicate_within_a_list_raises(self) -> None:
        with pytest.raises(DuplicateInList):
            fuse_rankings(["a", "a"], ["b"])
        with pytest.raises(DuplicateInList):
            fuse_rankings(["a"], ["b", "b"])

    def test_same_id_across_lists_is_legal(self) -> None:
        assert len(fuse_rankings(["a"], ["a"])) == 1


class TestRetrievalConfig:
    def test_defaults(self) -> None:
        cfg = RetrievalConfig()
        assert (cfg.top_k, cfg.per_method_depth, cfg.rrf_k) == (3, 50, 60.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"top_k": 0},
            {"per_method_depth": 0},
            {"top_k": 10, "per_method_depth": 5},
            {"rrf_k": 0.0},
            {"rrf_k": -3.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs: dict) -> None:
        with pytest.raises(ValueError):
            RetrievalConfig(**kwargs)


class TestHybridSearch:
    """End-to-end fusion over a real index, checked against a local recompute."""

    def _index(self, count: int = 40) -> SearchIndex:
        index = SearchIndex(make_mock_embedder(32), IndexConfig(dimension=32))
        index.upsert_documents(make_corpus_documents(count, seed=13))
        return index

    def test_matches_local_recomputation(self) -> None:
        index = self._index()
        cfg = RetrievalConfig(top_k=5, per_method_depth=20)
        for query in make_queries(15, seed=17):
            keyword = [h.doc_id for h in index.keyword_search(query, 20)]
            vector = [
                h.doc_id
                for h in index.vector_search(index.embedder.embed(query), 20)
            ]
            expected = {}
            for ranked in (keyword, vector):
                for rank, doc_id in enumerate(ranked, start=1):
                    expected[doc_id] = expected.get(doc_id, 0.0) + 1.0 / (60.0 + rank)
            want = sorted(expected.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
            got = [(h.doc_id, h.fused_score) for h in hybrid_search(index, query, cfg)]
            assert got == want

    def test_returns_top_k_hits(self) -> None:
        hits = hybrid_search(self._index(), "excavator uptime", RetrievalConfig())
        assert len(hits) == 3
        assert all(isinstance(h, FusedHit) for h in hits)
        scores = [h.fused_score for h in hits]
        assert scores == sorted(scores, reverse=True)

    def test_per_method_ranks_reported(self) -> None:
        index = self._index()
        for hit in hybrid_search(index, "excavator uptime fuel", RetrievalConfig()):
            if hit.keyword_rank is not None:
                assert hit.keyword_rank >= 1
            assert hit.vector_rank is None or hit.vector_rank >= 1

    def test_keyword_rank_none_for_vector_only_hit(self) -> None:
        """A document sharing no query terms can still fuse in via vectors."""
        index = SearchIndex(make_mock_embedder(32), IndexConfig(dimension=32))
        index.upsert_documents(make_corpus_documents(3, seed=2))
        matched = {
            h.doc_id for h in index.keyword_search("excavator", 3)
        } if index.postings.get("excavator") else set()
        hits = hybrid_search(
            index, "excavator", RetrievalConfig(top_k=3, per_method_depth=3)
        )
        vector_only = [h for h in hits if h.doc_id not in matched]
        assert all(h.keyword_rank is None for h in vector_only)
        assert all(h.vector_rank is not None for h in vector_only)

    def test_deterministic(self) -> None:
        index = self._index()
        first = hybrid_search(index, "granite crusher", RetrievalConfig())
        second = hybrid_search(index, "granite crusher", RetrievalConfig())
        assert first == second

    def test_empty_query_raises(self) -> None:
        with pytest.raises(EmptyQuery):
            hybrid_search(self._index(), "   ", RetrievalConfig())

    def test_tokenless_query_raises(self) -> None:
        with pytest.raises(EmptyQuery):
            hybrid_search(self._index(), "!!!", RetrievalConfig())

    def test_empty_index_raises(self) -> None:
        index = SearchIndex(make_mock_embedder(32), IndexConfig(dimension=32))
        with pytest.raises(EmptyIndex):
            hybrid_search(index, "excavator", RetrievalConfig())

    def test_default_config_when_omitted(self) -> None:
        hits = hybrid_search(self._index(), "excavator")
        assert len(hits) == 3
