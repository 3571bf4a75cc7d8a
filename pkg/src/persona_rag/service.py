"""HTTP facade over the index, chat, generation, and report modules.

Routes:

* ``POST /chat``: session chat; creates a session when none is supplied
  and echoes the pre-answer history length in ``X-History-Length``;
* ``GET /search``: hybrid, keyword, or vector retrieval; hits carry the
  stored document body so clients can render sources without extra calls;
* ``POST /documents``: batch upsert into the shared index;
* ``POST /personas/generate``: one persona from a story via either strategy;
* ``GET /reports/generation``: per-strategy efficiency means;
* ``GET /healthz``: build info plus index document counts.

Every JSON body carries ``schema_version``. The index is shared behind a
reader-writer lock: searches and chats read concurrently, document writes
are briefly exclusive. Sessions live in memory with a TTL and at most one
in-flight answer each; chat exchanges append to a JSONL transcript log when
a path is configured.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import __version__
from .chat import (
    ChatSession,
    SystemMessageConfig,
    answer,
    new_session,
)
from .corpus import Persona, Segment, SuccessStory
from .errors import (
    DuplicateId,
    EmptyBatch,
    EmptyIndex,
    EmptyQuery,
    EmptyStory,
    EmptyText,
    GenerationFailed,
    PersonaRagError,
)
from .evalstats import efficiency_summary
from .index import Category, DocumentRecord, ScoredHit, SearchIndex
from .llm import LLMClient
from .personagen import (
    GenerationRecord,
    PromptStrategy,
    generate_persona,
    record_to_dict,
)
from .retrieval import (
    DEFAULT_PER_METHOD_DEPTH,
    DEFAULT_TOP_K,
    RetrievalConfig,
    hybrid_search,
)

SCHEMA_VERSION = 1
DEFAULT_SESSION_TTL_SECONDS = 3600.0
HISTORY_LENGTH_HEADER = "X-History-Length"
SEARCH_MODES = ("hybrid", "keyword", "vector")


class _ReadWriteLock:
    """Many concurrent readers or one writer; writers wait for drain."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True
        try:
            yield
        finally:
            with self._cond:
                self._writing = False
                self._cond.notify_all()


@dataclass
class _SessionEntry:
    session: ChatSession
    deadline: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """In-memory sessions with a TTL; expired entries purge on access."""

    def __init__(self, ttl_seconds: float = DEFAULT_SESSION_TTL_SECONDS,
                 now: Callable[[], float] = time.monotonic):
        self.ttl_seconds = ttl_seconds
        self._now = now
        self._entries: dict[str, _SessionEntry] = {}
        self._lock = threading.Lock()

    def _purge(self) -> None:
        now = self._now()
        expired = [sid for sid, entry in self._entries.items() if entry.deadline <= now]
        for sid in expired:
            del self._entries[sid]

    def get_or_create(self, session_id: str | None) -> _SessionEntry:
        with self._lock:
            self._purge()
            if session_id is not None and session_id in self._entries:
                entry = self._entries[session_id]
            else:
                session = new_session(session_id)
                entry = _SessionEntry(session=session, deadline=0.0)
                self._entries[session.session_id] = entry
            entry.deadline = self._now() + self.ttl_seconds
            return entry

    def __len__(self) -> int:
        with self._lock:
            self._purge()
            return len(self._entries)


@dataclass
class ServiceState:
    """Everything the routes share; tests inject mocks here directly."""

    index: SearchIndex
    llm_client: LLMClient
    system_config: SystemMessageConfig
    retrieval_config: RetrievalConfig = field(default_factory=RetrievalConfig)
    examples: tuple[Persona, ...] = ()
    stories: Mapping[str, SuccessStory] = field(default_factory=dict)
    api_key: str | None = None
    cors_origins: tuple[str, ...] = ()
    transcript_path: str | Path | None = None
    session_ttl_seconds: float = DEFAULT_SESSION_TTL_SECONDS
    clock: Callable[[], float] = time.monotonic

    def __post_init__(self):
        self.sessions = SessionStore(self.session_ttl_seconds, now=self.clock)
        self.index_lock = _ReadWriteLock()
        self.generation_records: list[GenerationRecord] = []
        self._transcript_lock = threading.Lock()

    def log_exchange(self, session_id: str, query: str, result_answer: str,
                     citations: list[dict[str, str]]) -> None:
        if self.transcript_path is None:
            return
        line = json.dumps({
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "session_id": session_id,
            "query": query,
            "answer": result_answer,
            "citations": citations,
        }, sort_keys=True)
        with self._transcript_lock:
            with open(self.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def _json(payload: dict, status_code: int = 200, headers: dict | None = None) -> JSONResponse:
    body = {"schema_version": SCHEMA_VERSION}
    body.update(payload)
    return JSONResponse(body, status_code=status_code, headers=headers)


def _error(status_code: int, code: str, message: str) -> JSONResponse:
    return _json({"error": {"code": code, "message": message}}, status_code=status_code)


def _hit_payload(hit: ScoredHit, content: str) -> dict:
    return {
        "doc_id": hit.doc_id,
        "title": hit.title,
        "category": hit.category.value,
        "score": hit.score,
        "rank": hit.rank,
        "content": content,
    }


async def _read_json_object(request: Request) -> dict | JSONResponse:
    try:
        body = await request.json()
    except json.JSONDecodeError:
        return _error(400, "invalid_json", "request body must be valid JSON")
    if not isinstance(body, dict):
        return _error(400, "invalid_body", "request body must be a JSON object")
    return body


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="persona-rag", version=__version__, docs_url=None, redoc_url=None)
    if state.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(state.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )
    app.state.service = state

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if state.api_key is not None and request.url.path != "/healthz":
            if request.method != "OPTIONS" and request.headers.get("X-Api-Key") != state.api_key:
                return _error(401, "unauthorized", "missing or invalid API key")
        return await call_next(request)

    @app.get("/healthz")
    def healthz() -> Response:
        with state.index_lock.read():
            by_category = {
                category.value: len(state.index.list_documents(category))
                for category in Category
            }
            count = len(state.index)
        return _json({
            "status": "ok",
            "version": __version__,
            "model_id": state.llm_client.model_id,
            "document_count": count,
            "documents_by_category": by_category,
            "active_sessions": len(state.sessions),
        })

    @app.post("/chat")
    async def chat_endpoint(request: Request) -> Response:
        body = await _read_json_object(request)
        if isinstance(body, JSONResponse):
            return body
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            return _error(400, "empty_query", "query must be a non-empty string")
        session_id = body.get("session_id")
        if session_id is not None and not isinstance(session_id, str):
            return _error(400, "invalid_session", "session_id must be a string")
        entry = state.sessions.get_or_create(session_id)
        with entry.lock:
            history_length = len(entry.session.turns)
            try:
                with state.index_lock.read():
                    result = answer(
                        entry.session,
                        query,
                        state.index,
                        state.retrieval_config,
                        state.llm_client,
                        state.system_config,
                    )
            except GenerationFailed as exc:
                return _error(502, "generation_failed", str(exc))
        citations = [{"doc_id": doc_id, "title": title} for doc_id, title in result.citations]
        state.log_exchange(entry.session.session_id, query, result.answer_text, citations)
        return _json(
            {
                "session_id": entry.session.session_id,
                "answer": result.answer_text,
                "citations": citations,
            },
            headers={HISTORY_LENGTH_HEADER: str(history_length)},
        )

    @app.get("/search")
    def search_endpoint(q: str = "", mode: str = "hybrid", k: str = "") -> Response:
        if not q.strip():
            return _error(400, "empty_query", "q must be a non-empty string")
        if mode not in SEARCH_MODES:
            return _error(400, "invalid_mode", f"mode must be one of {', '.join(SEARCH_MODES)}")
        if k == "":
            top_k = DEFAULT_TOP_K
        else:
            try:
                top_k = int(k)
            except ValueError:
                return _error(400, "invalid_k", "k must be an integer")
            if top_k < 1:
                return _error(400, "invalid_k", "k must be at least 1")
        try:
            with state.index_lock.read():
                if mode == "hybrid":
                    config = RetrievalConfig(
                        top_k=top_k,
                        per_method_depth=max(DEFAULT_PER_METHOD_DEPTH, top_k),
                        rrf_k=state.retrieval_config.rrf_k,
                    )
                    fused = hybrid_search(state.index, q, config)
                    hits = [
                        {
                            "doc_id": hit.doc_id,
                            "title": hit.title,
                            "category": hit.category.value,
                            "score": hit.fused_score,
                            "rank": rank,
                            "keyword_rank": hit.keyword_rank,
                            "vector_rank": hit.vector_rank,
                            "content": state.index.docs[hit.doc_id].content,
                        }
                        for rank, hit in enumerate(fused, start=1)
                    ]
                elif mode == "keyword":
                    hits = [
                        _hit_payload(h, state.index.docs[h.doc_id].content)
                        for h in state.index.keyword_search(q, top_k)
                    ]
                else:
                    vector, _ = state.index.embedder.embed_document(q)
                    hits = [
                        _hit_payload(h, state.index.docs[h.doc_id].content)
                        for h in state.index.vector_search(vector, top_k)
                    ]
        except EmptyIndex:
            hits = []
        except EmptyQuery:
            return _error(400, "empty_query", "query has no searchable tokens")
        return _json({"query": q, "mode": mode, "k": top_k, "hits": hits})

    @app.post("/documents")
    async def documents_endpoint(request: Request) -> Response:
        body = await _read_json_object(request)
        if isinstance(body, JSONResponse):
            return body
        raw_documents = body.get("documents")
        if not isinstance(raw_documents, list):
            return _error(400, "invalid_documents", "documents must be a JSON array")
        records = []
        for position, item in enumerate(raw_documents):
            if not isinstance(item, dict):
                return _error(400, "invalid_document", f"documents[{position}] must be an object")
            try:
                doc_id = item["id"]
                title = item["title"]
                category = Category(item["category"])
                content = item["content"]
            except KeyError as exc:
                return _error(
                    400, "missing_field", f"documents[{position}] missing field {exc.args[0]!r}"
                )
            except ValueError:
                return _error(
                    400, "invalid_category",
                    f"documents[{position}] category must be one of "
                    + ", ".join(c.value for c in Category),
                )
            if not isinstance(doc_id, str) or not isinstance(title, str) \
                    or not isinstance(content, str):
                return _error(
                    400, "invalid_document", f"documents[{position}] fields must be strings"
                )
            records.append(
                DocumentRecord(id=doc_id, title=title, category=category, content=content)
            )
        try:
            with state.index_lock.write():
                upserted = state.index.upsert_documents(records)
                count = len(state.index)
        except DuplicateId as exc:
            return _error(409, "duplicate_id", str(exc))
        except (EmptyBatch, EmptyText, PersonaRagError) as exc:
            return _error(400, type(exc).__name__.lower(), str(exc))
        return _json({"upserted": upserted, "document_count": count})

    @app.post("/personas/generate")
    async def generate_endpoint(request: Request) -> Response:
        body = await _read_json_object(request)
        if isinstance(body, JSONResponse):
            return body
        strategy_raw = body.get("strategy")
        try:
            strategy = PromptStrategy(strategy_raw)
        except ValueError:
            return _error(
                400, "invalid_strategy",
                "strategy must be one of " + ", ".join(s.value for s in PromptStrategy),
            )
        story_id = body.get("story_id")
        story_text = body.get("story_text")
        if story_text is not None:
            if not isinstance(story_text, str) or not story_text.strip():
                return _error(400, "empty_story", "story_text must be a non-empty string")
            try:
                segment = Segment(body.get("segment", Segment.QUARRYING.value))
            except ValueError:
                return _error(
                    400, "invalid_segment",
                    "segment must be one of " + ", ".join(s.value for s in Segment),
                )
            story = SuccessStory(
                story_id=story_id if isinstance(story_id, str) and story_id
                else f"adhoc-{uuid.uuid4().hex[:12]}",
                source_url="",
                segment=segment,
                paragraphs=tuple(
                    p.strip() for p in story_text.split("\n\n") if p.strip()
                ),
            )
        elif isinstance(story_id, str) and story_id:
            story = state.stories.get(story_id)
            if story is None:
                return _error(400, "unknown_story", f"no story with id {story_id!r}")
        else:
            return _error(400, "missing_story", "provide story_id or story_text")
        try:
            record = generate_persona(
                story,
                strategy,
                state.llm_client,
                examples=state.examples,
            )
        except GenerationFailed as exc:
            return _error(502, "generation_failed", str(exc))
        except (EmptyStory, PersonaRagError) as exc:
            return _error(400, type(exc).__name__.lower(), str(exc))
        state.generation_records.append(record)
        return _json({"record": record_to_dict(record)})

    @app.get("/reports/generation")
    def generation_report() -> Response:
        records = list(state.generation_records)
        strategies = {}
        if records:
            for strategy, row in efficiency_summary(records).items():
                strategies[strategy.value] = {
                    "mean_elapsed_seconds": row.mean_elapsed_seconds,
                    "mean_total_tokens": row.mean_total_tokens,
                    "count": row.count,
                }
        return _json({"count": len(records), "strategies": strategies})

    return app
