"""Shared fixtures: mock embedders, seeded corpora, and scripted clients."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from persona_rag.chat import SystemMessageConfig
from persona_rag.corpus import Persona, Provenance, Segment, SuccessStory
from persona_rag.embedding import EmbedderConfig, make_embedder
from persona_rag.index import Category, DocumentRecord, IndexConfig, SearchIndex
from persona_rag.llm import ScriptedLLMClient

FIXTURES_DIR = Path(__file__).parent.parent / "fixtures"

# vocabulary for seeded synthetic corpora; enough overlap that BM25 and
# vector rankings disagree and fusion has work to do
VOCABULARY = (
    "excavator loader hauler crusher screen conveyor drill dozer grader truck "
    "quarry mine pit site plant mill kiln terminal yard dredge "
    "granite limestone basalt sand gravel ore copper iron zinc coal "
    "uptime downtime fuel diesel maintenance service parts warranty rebuild telemetry "
    "payload cycle shift operator safety training contract delivery blast fragmentation "
    "ventilation moisture grading blending routing dispatch stockpile weighbridge liner pump"
).split()


def make_mock_embedder(dimension: int = 32, seed: int = 0):
    return make_embedder(EmbedderConfig(
        backend="mock", model_id=f"mock-{dimension}", dimension=dimension, seed=seed,
    ))


def make_corpus_documents(count: int, seed: int = 42) -> list[DocumentRecord]:
    """Seeded documents of 20-60 vocabulary words each."""
    rng = random.Random(seed)
    categories = list(Category)
    documents = []
    for i in range(count):
        words = rng.choices(VOCABULARY, k=rng.randint(20, 60))
        documents.append(DocumentRecord(
            id=f"doc{i:04d}",
            title=f"Document {i}",
            category=categories[i % len(categories)],
            content=" ".join(words),
        ))
    return documents


def make_queries(count: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    return [" ".join(rng.sample(VOCABULARY, rng.randint(2, 4))) for _ in range(count)]


@pytest.fixture(scope="session")
def corpus200() -> tuple[SearchIndex, list[DocumentRecord]]:
    """200 seeded documents in one index, shared across read-only tests."""
    documents = make_corpus_documents(200)
    index = SearchIndex(make_mock_embedder(), IndexConfig(dimension=32))
    index.upsert_documents(documents)
    return index, documents


@pytest.fixture()
def small_index() -> SearchIndex:
    index = SearchIndex(make_mock_embedder(), IndexConfig(dimension=32))
    index.upsert_documents([
        DocumentRecord(id="p1", title="Persona Marta", category=Category.PERSONA,
                       content="quarry owner values uptime and fast parts delivery"),
        DocumentRecord(id="s1", title="Story one", category=Category.SUCCESS_STORY,
                       content="excavator fleet cut fuel costs at the granite quarry"),
        DocumentRecord(id="s2", title="Story two", category=Category.SUCCESS_STORY,
                       content="haul truck payload telemetry extended tire life"),
        DocumentRecord(id="g1", title="Guide", category=Category.GENERAL_INFORMATION,
                       content="crusher maintenance and liner wear scheduling guide"),
    ])
    return index


@pytest.fixture()
def scripted_client() -> ScriptedLLMClient:
    return ScriptedLLMClient()


@pytest.fixture()
def system_config() -> SystemMessageConfig:
    return SystemMessageConfig(
        role_instructions="You answer questions about customers.",
        tone="professional",
        answer_guidelines=("Cite sources.", "Stay grounded."),
        source_file="inline",
    )


@pytest.fixture()
def sample_story() -> SuccessStory:
    return SuccessStory(
        story_id="s1",
        source_url="https://dealer.example.com/news/customers/s1/",
        segment=Segment.QUARRYING,
        paragraphs=(
            "A quarry operator with 40 employees runs 12 machines.",
            "They needed better uptime and fast parts delivery.",
        ),
    )


@pytest.fixture()
def example_personas() -> tuple[Persona, ...]:
    def build(i: int) -> Persona:
        return Persona(
            name=f"Example Persona {i}", role="Owner", number_of_employees="10",
            fleet_size="4", short_story=f"Example story {i}.",
            what_is_important=("uptime",), challenges=("costs",),
            expectations=("support",), buying_considerations=("price",),
            provenance=Provenance.VERIFIED,
        )

    return tuple(build(i) for i in range(3))
