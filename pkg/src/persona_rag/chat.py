"""Grounded chat: top-3 hybrid retrieval feeding a cited answer.

Each answer call retrieves context for the raw query, assembles a prompt
from the system message, the labeled document contents, bounded history,
and the query, then asks the LLM client. Citations are exactly the
documents whose content made it into the prompt, so every rendered source
is traceable to the retrieval that produced it.

The session is only mutated after the model call succeeds; a failed call
leaves the turn list untouched.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .errors import EmptyIndex, EmptyQuery, GenerationFailed, MissingSection, PersonaRagError
from .index import SearchIndex
from .llm import LLMClient
from .retrieval import FusedHit, RetrievalConfig, hybrid_search

DEFAULT_HISTORY_TURNS = 10
DEFAULT_CONTEXT_BUDGET_CHARS = 24000

NO_CONTEXT_NOTE = (
    "No context documents are available for this question. Say so and answer "
    "only from general knowledge the guidelines permit."
)


@dataclass(frozen=True)
class Turn:
    role: str                                   # "user" | "assistant"
    text: str
    cited_doc_ids: tuple[str, ...] = ()


@dataclass
class ChatSession:
    session_id: str
    turns: list[Turn] = field(default_factory=list)
    created_at: str = ""


def new_session(session_id: str | None = None) -> ChatSession:
    return ChatSession(
        session_id=session_id or uuid.uuid4().hex,
        turns=[],
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


@dataclass(frozen=True)
class SystemMessageConfig:
    role_instructions: str
    tone: str
    answer_guidelines: tuple[str, ...]
    source_file: str


def load_system_message(path: str | Path) -> SystemMessageConfig:
    """Parse a system-message file with [role], [tone], [guidelines] sections."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]") and len(stripped) > 2:
            current = sections.setdefault(stripped[1:-1].lower(), [])
        elif current is not None:
            current.append(line)
    role = "\n".join(sections.get("role", [])).strip()
    tone = "\n".join(sections.get("tone", [])).strip()
    guidelines = tuple(
        line.strip() for line in sections.get("guidelines", []) if line.strip()
    )
    for name, value in (("role", role), ("tone", tone), ("guidelines", guidelines)):
        if not value:
            raise MissingSection(name)
    return SystemMessageConfig(
        role_instructions=role,
        tone=tone,
        answer_guidelines=guidelines,
        source_file=str(path),
    )


def render_system_message(cfg: SystemMessageConfig) -> str:
    guidelines = "\n".join(f"- {g}" for g in cfg.answer_guidelines)
    return f"{cfg.role_instructions}\n\nTone: {cfg.tone}\n\nGuidelines:\n{guidelines}"


@dataclass(frozen=True)
class ChatAnswer:
    answer_text: str
    citations: tuple[tuple[str, str], ...]      # (doc_id, title)


def _assemble_context(
    index: SearchIndex, hits: Sequence[FusedHit], budget: int
) -> tuple[str, list[tuple[str, str]]]:
    """Labeled document blocks within the character budget.

    Contents are truncated proportionally to their length when over budget.
    Documents that would get no content are dropped from the tail; the
    top-ranked document always stays.
    """
    if not hits:
        return "", []
    kept = list(hits)
    while kept:
        labels = [f"Source [{i}] {hit.title}:\n" for i, hit in enumerate(kept, start=1)]
        contents = [index.docs[hit.doc_id].content for hit in kept]
        overhead = sum(len(label) for label in labels) + 2 * (len(kept) - 1)
        total_content = sum(len(c) for c in contents)
        room = budget - overhead
        if room >= total_content:
            allowances = [len(c) for c in contents]
        elif room >= len(kept):
            allowances = [max(1, room * len(c) // total_content) for c in contents]
            # rounding up to 1 can overshoot; trim tail-first, floor 1 each
            excess = sum(allowances) - room
            for i in range(len(allowances) - 1, -1, -1):
                if excess <= 0:
                    break
                take = min(excess, allowances[i] - 1)
                allowances[i] -= take
                excess -= take
        elif len(kept) > 1:
            kept.pop()
            continue
        else:
            # budget smaller than the label itself: keep whatever prefix fits
            block = (labels[0] + contents[0])[: max(budget, 0)]
            citations = [(kept[0].doc_id, kept[0].title)] if block else []
            return block, citations
        blocks = [
            label + content[:allowance]
            for label, content, allowance in zip(labels, contents, allowances)
        ]
        context = "\n\n".join(blocks)
        citations = [(hit.doc_id, hit.title) for hit in kept]
        return context, citations
    return "", []


def answer(
    session: ChatSession,
    query: str,
    index: SearchIndex,
    retrieval_cfg: RetrievalConfig,
    client: LLMClient,
    sys_cfg: SystemMessageConfig,
    history_turns: int = DEFAULT_HISTORY_TURNS,
    context_budget: int = DEFAULT_CONTEXT_BUDGET_CHARS,
) -> ChatAnswer:
    """Answer one query with retrieved context; appends both turns on success."""
    if not query.strip():
        raise EmptyQuery("chat query is empty")
    try:
        hits = hybrid_search(index, query, retrieval_cfg)
    except (EmptyIndex, EmptyQuery):
        # empty index, or a query with no searchable terms: answer without
        # context rather than refusing, the guidelines govern the wording
        hits = []
    context, citations = _assemble_context(index, hits, context_budget)

    system = render_system_message(sys_cfg)
    if context:
        system = f"{system}\n\nContext documents:\n\n{context}"
    else:
        system = f"{system}\n\n{NO_CONTEXT_NOTE}"
    messages = [{"role": "system", "content": system}]
    for turn in session.turns[-history_turns:]:
        messages.append({"role": turn.role, "content": turn.text})
    messages.append({"role": "user", "content": query})

    try:
        result = client.complete(messages)
    except PersonaRagError as exc:
        raise GenerationFailed(f"answer generation failed: {exc}") from exc

    session.turns.append(Turn(role="user", text=query))
    session.turns.append(
        Turn(
            role="assistant",
            text=result.text,
            cited_doc_ids=tuple(doc_id for doc_id, _ in citations),
        )
    )
    return ChatAnswer(answer_text=result.text, citations=tuple(citations))
