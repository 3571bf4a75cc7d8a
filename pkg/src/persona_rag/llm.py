"""Chat-completion clients behind one small interface.

Two backends:

* ``scripted_mock``: a pure function of the message sequence. Responses
  come from a replay table keyed by a content hash of the messages, then
  from an optional fallback, then from a built-in persona synthesizer that
  derives a plausible persona deterministically from the story text. Token
  counts are whitespace token counts, so the accounting identity
  total = prompt + completion is exact.
* ``remote``: an HTTPS chat-completion endpoint configured through the
  ``LLM_ENDPOINT``, ``LLM_MODEL``, and ``LLM_API_KEY`` environment
  variables.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import textwrap
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .errors import RemoteUnavailable

Message = Mapping[str, str]


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def messages_digest(messages: Sequence[Message]) -> str:
    """Stable content hash of a message sequence, for replay keying.

    Fields are length-prefixed so distinct message sequences can never
    serialize to the same byte stream, whatever their contents.
    """
    digest = hashlib.sha256()
    for message in messages:
        for field in (message["role"], message["content"]):
            data = field.encode("utf-8")
            digest.update(len(data).to_bytes(8, "big"))
            digest.update(data)
    return digest.hexdigest()


class LLMClient:
    """Interface: complete(messages, params) -> CompletionResult."""

    model_id: str = ""

    def complete(
        self, messages: Sequence[Message], params: Mapping[str, object] | None = None
    ) -> CompletionResult:
        raise NotImplementedError


# vocabulary for the deterministic persona synthesizer
_FIRST_NAMES = ("Marta", "Jonas", "Priya", "Tomas", "Elin", "Carlos", "Aino", "Viktor")
_LAST_NAMES = ("Lindqvist", "Keränen", "Oliveira", "Novak", "Sandberg", "Petrov", "Haapala", "Berg")
_ROLES = (
    "Site Manager",
    "Operations Director",
    "Fleet Manager",
    "Quarry Owner",
    "Production Supervisor",
    "Managing Director",
)
_IMPORTANT = (
    "maximizing machine uptime",
    "predictable cost per tonne",
    "operator safety on site",
    "fuel efficiency across the fleet",
    "fast access to spare parts",
    "long-term supplier relationships",
)
_CHALLENGES = (
    "aging equipment driving maintenance costs up",
    "meeting production targets in harsh weather",
    "finding skilled operators",
    "tight margins on aggregate contracts",
    "unplanned downtime at the primary crusher",
    "rising energy and fuel prices",
)
_EXPECTATIONS = (
    "responsive local service and support",
    "honest advice on machine configuration",
    "training for the operator team",
    "clear total cost of ownership figures",
    "delivery on the promised schedule",
    "telemetry that integrates with existing systems",
)
_BUYING = (
    "total cost of ownership over ten years",
    "resale value of the machines",
    "availability of financing",
    "references from similar operations",
    "dealer proximity for service",
    "warranty terms and parts pricing",
)

STORY_MARKER = "Success story:"


def _pick(options: tuple[str, ...], digest: bytes, index: int, count: int = 1) -> list[str]:
    start = digest[index % len(digest)]
    return [options[(start + i) % len(options)] for i in range(count)]


def synthesize_persona_response(messages: Sequence[Message]) -> str:
    """Deterministic persona JSON derived from the prompt's story text.

    A pure function of the message sequence: the story text after the last
    story marker seeds every field choice. Prompts whose system message asks
    for step-by-step reasoning get reasoning prose before the JSON, which
    exercises the trailing-object parse path.
    """
    user_text = ""
    system_text = ""
    for message in messages:
        if message["role"] == "user":
            user_text = message["content"]
        elif message["role"] == "system":
            system_text = message["content"]
    story = user_text.rsplit(STORY_MARKER, 1)[-1].strip()
    digest = hashlib.sha256(story.encode("utf-8")).digest()
    summary = textwrap.shorten(story, width=200, placeholder="...") or "unknown"
    persona = {
        "name": f"{_pick(_FIRST_NAMES, digest, 0)[0]} {_pick(_LAST_NAMES, digest, 1)[0]}",
        "role": _pick(_ROLES, digest, 2)[0],
        "number_of_employees": str(20 + digest[3] % 480),
        "fleet_size": f"{5 + digest[4] % 60} machines",
        "short_story": summary,
        "what_is_important": _pick(_IMPORTANT, digest, 5, 2),
        "challenges": _pick(_CHALLENGES, digest, 6, 2),
        "expectations": _pick(_EXPECTATIONS, digest, 7, 2),
        "buying_considerations": _pick(_BUYING, digest, 8, 2),
    }
    body = json.dumps(persona, indent=2, ensure_ascii=False)
    if "step" in system_text.lower():
        lead = (
            "Step 1: The story describes the customer's operation and equipment needs.\n"
            "Step 2: Their business context shapes what they value in a supplier.\n"
            "Step 3: The challenges, expectations, and buying considerations follow.\n"
            "Step 4: The structured persona:\n\n"
        )
        return lead + "```json\n" + body + "\n```"
    return "```json\n" + body + "\n```"


_SOURCE_LABEL = re.compile(r"Source \[(\d+)\] (.*?):\n((?:.|\n)*?)(?=\n\nSource \[|\Z)")


def synthesize_chat_response(messages: Sequence[Message]) -> str:
    """Deterministic grounded answer built from the context in the system message.

    Leads with the opening of the top-ranked source and cites every supplied
    source by number, so transcripts read like retrieval-grounded chat.
    """
    system_text = ""
    for message in messages:
        if message["role"] == "system":
            system_text = message["content"]
            break
    sources = _SOURCE_LABEL.findall(system_text)
    if not sources:
        return "The available sources do not cover this question."
    number, title, body = sources[0]
    opening = " ".join(body.split())
    cut = opening.find(". ")
    if 0 <= cut < 200:
        opening = opening[: cut + 1]
    else:
        opening = textwrap.shorten(opening, width=200, placeholder="...")
    lines = [f"{opening} [{number}]"]
    if len(sources) > 1:
        rest = ", ".join(f"{t} [{n}]" for n, t, _ in sources[1:])
        lines.append(f"Related material: {rest}.")
    return " ".join(lines)


def synthesize_response(messages: Sequence[Message]) -> str:
    """Route to persona or chat synthesis by the story marker in the last user turn."""
    user_text = ""
    for message in messages:
        if message["role"] == "user":
            user_text = message["content"]
    if STORY_MARKER in user_text:
        return synthesize_persona_response(messages)
    return synthesize_chat_response(messages)


class ScriptedLLMClient(LLMClient):
    """Replay-by-content-hash mock; a pure function of the message sequence."""

    def __init__(
        self,
        replay: Mapping[str, str] | None = None,
        fallback: Callable[[Sequence[Message]], str] | None = None,
        model_id: str = "scripted-mock",
    ):
        self.replay = dict(replay or {})
        self.fallback = fallback
        self.model_id = model_id

    def complete(
        self, messages: Sequence[Message], params: Mapping[str, object] | None = None
    ) -> CompletionResult:
        digest = messages_digest(messages)
        if digest in self.replay:
            text = self.replay[digest]
        elif self.fallback is not None:
            text = self.fallback(messages)
        else:
            text = synthesize_response(messages)
        return CompletionResult(
            text=text,
            prompt_tokens=sum(whitespace_tokens(m["content"]) for m in messages),
            completion_tokens=whitespace_tokens(text),
        )


class RemoteLLMClient(LLMClient):
    """Client for an HTTPS chat-completion endpoint."""

    def __init__(self, model_id: str | None = None, transport=None):
        self.model_id = model_id or os.environ.get("LLM_MODEL", "")
        self._endpoint = os.environ.get("LLM_ENDPOINT", "")
        self._api_key = os.environ.get("LLM_API_KEY", "")
        self._transport = transport

    def complete(
        self, messages: Sequence[Message], params: Mapping[str, object] | None = None
    ) -> CompletionResult:
        import httpx

        if not self._endpoint:
            raise RemoteUnavailable("LLM_ENDPOINT is not configured")
        payload: dict[str, object] = {
            "model": self.model_id,
            "messages": [dict(m) for m in messages],
        }
        if params:
            payload.update(params)
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        try:
            with httpx.Client(transport=self._transport, timeout=120.0) as client:
                resp = client.post(self._endpoint, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise RemoteUnavailable(f"chat completion request failed: {exc}") from exc
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After")
            raise RemoteUnavailable(
                "chat provider rate limited",
                retry_after=float(retry) if retry else None,
            )
        if resp.status_code != 200:
            raise RemoteUnavailable(f"chat provider returned {resp.status_code}")
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
        usage = data.get("usage", {})
        prompt_tokens = int(
            usage.get("prompt_tokens", sum(whitespace_tokens(m["content"]) for m in messages))
        )
        completion_tokens = int(usage.get("completion_tokens", whitespace_tokens(text)))
        return CompletionResult(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
        )
