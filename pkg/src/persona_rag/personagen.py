"""Persona generation: prompt building, output parsing, timing, batching.

Two prompting strategies compete. Few-shot prompts carry exactly three
complete example personas; chain-of-thought prompts carry four ordered
reasoning steps and no examples. Both end with the same nine-key output
schema, and both are byte-stable for fixed inputs.

Each run is metered with a monotonic clock and whitespace-token counts and
recorded as a :class:`GenerationRecord`, persisted as JSONL with the raw
model output kept verbatim.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import (
    PERSONA_KEYS,
    PERSONA_LIST_KEYS,
    PERSONA_SCALAR_KEYS,
    Persona,
    Provenance,
    SuccessStory,
    UNKNOWN,
    persona_from_mapping,
    persona_to_json,
)
from .errors import (
    EmptyStory,
    GenerationFailed,
    IncompleteExample,
    MissingAttribute,
    MissingSection,
    NoJsonFound,
    PersonaRagError,
    TypeMismatch,
    WrongExampleCount,
)
from .llm import LLMClient, Message


class PromptStrategy(str, Enum):
    FEW_SHOT = "few_shot"
    COT = "cot"


FEW_SHOT_EXAMPLE_COUNT = 3
MIN_REASONING_STEPS = 4

OUTPUT_FORMAT = (
    "The persona is a JSON object with exactly these keys, in this order:\n"
    "{\n"
    '  "name": string,\n'
    '  "role": string,\n'
    '  "number_of_employees": string,\n'
    '  "fleet_size": string,\n'
    '  "short_story": string,\n'
    '  "what_is_important": [strings],\n'
    '  "challenges": [strings],\n'
    '  "expectations": [strings],\n'
    '  "buying_considerations": [strings]\n'
    "}\n"
    'Use the string "unknown" for anything the story does not reveal.'
)

REPAIR_INSTRUCTION = (
    "The previous reply could not be parsed as a persona. Respond again with "
    "only one JSON object containing exactly the nine required keys."
)


@dataclass(frozen=True)
class PromptTemplate:
    """Parsed template: shared scaffolding plus strategy-specific parts."""

    kind: PromptStrategy
    system_instructions: str
    task_definition: str
    output_format: str
    user_scaffold: str
    examples: tuple[Persona, ...] = ()
    reasoning_steps: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind is PromptStrategy.FEW_SHOT:
            if len(self.examples) != FEW_SHOT_EXAMPLE_COUNT:
                raise WrongExampleCount(
                    f"few-shot template needs exactly {FEW_SHOT_EXAMPLE_COUNT} "
                    f"examples, got {len(self.examples)}"
                )
            for example in self.examples:
                if not example.is_complete():
                    raise IncompleteExample(f"example persona {example.name!r} has empty attributes")
        else:
            if len(self.reasoning_steps) < MIN_REASONING_STEPS:
                raise ValueError(
                    f"chain-of-thought template needs at least {MIN_REASONING_STEPS} "
                    f"reasoning steps, got {len(self.reasoning_steps)}"
                )
            if self.examples:
                raise ValueError("chain-of-thought templates carry no example personas")


_SECTION = re.compile(r"^\[(system|task|user)\]\s*$")
_NUMBERED = re.compile(r"^\s*\d+\.\s+(.*\S)\s*$")


@lru_cache(maxsize=8)
def _template_sections(path_text: str | None, kind_value: str) -> Mapping[str, str]:
    if path_text is None:
        raw = (resources.files(__package__) / "templates" / f"{kind_value}.txt").read_text(
            encoding="utf-8"
        )
    else:
        raw = Path(path_text).read_text(encoding="utf-8")
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in raw.splitlines():
        match = _SECTION.match(line)
        if match:
            current = sections.setdefault(match.group(1), [])
        elif current is not None:
            current.append(line)
    out = {name: "\n".join(lines).strip() for name, lines in sections.items()}
    for required in ("system", "task", "user"):
        if not out.get(required):
            raise MissingSection(required)
    return out


def load_template(
    kind: PromptStrategy,
    examples: Sequence[Persona] = (),
    path: str | Path | None = None,
) -> PromptTemplate:
    """Load and validate the prompt template for one strategy."""
    sections = _template_sections(str(path) if path is not None else None, kind.value)
    steps = tuple(
        match.group(1)
        for line in sections["task"].splitlines()
        if (match := _NUMBERED.match(line))
    )
    return PromptTemplate(
        kind=kind,
        system_instructions=sections["system"],
        task_definition=sections["task"],
        output_format=OUTPUT_FORMAT,
        user_scaffold=sections["user"],
        examples=tuple(examples) if kind is PromptStrategy.FEW_SHOT else (),
        reasoning_steps=steps if kind is PromptStrategy.COT else (),
    )


def _render(template: PromptTemplate, story: SuccessStory) -> list[dict[str, str]]:
    system = template.system_instructions + "\n\n" + template.task_definition
    system = system.replace("{{output_format}}", template.output_format)
    examples_text = "\n\n".join(
        persona_to_json(example, include_provenance=False) for example in template.examples
    )
    user = template.user_scaffold
    user = user.replace("{{examples}}", examples_text)
    user = user.replace("{{story}}", story.full_text)
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]


def build_few_shot_prompt(
    story: SuccessStory,
    examples: Sequence[Persona],
    template_path: str | Path | None = None,
) -> list[dict[str, str]]:
    """Messages for the few-shot strategy: three worked examples, then the story."""
    if not story.full_text.strip():
        raise EmptyStory(f"story {story.story_id!r} has no text")
    template = load_template(PromptStrategy.FEW_SHOT, examples, template_path)
    return _render(template, story)


def build_cot_prompt(
    story: SuccessStory,
    template_path: str | Path | None = None,
) -> list[dict[str, str]]:
    """Messages for the chain-of-thought strategy: ordered steps, no examples."""
    if not story.full_text.strip():
        raise EmptyStory(f"story {story.story_id!r} has no text")
    template = load_template(PromptStrategy.COT, (), template_path)
    return _render(template, story)


# -- output parsing ---------------------------------------------------------


def _json_objects(raw: str) -> list[dict]:
    """Top-level JSON objects in reading order; nested objects stay nested."""
    decoder = json.JSONDecoder()
    objects: list[dict] = []
    pos = 0
    while True:
        start = raw.find("{", pos)
        if start < 0:
            break
        try:
            obj, end = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            objects.append(obj)
        pos = end
    return objects


def _coerce_fields(obj: dict) -> dict:
    out = dict(obj)
    for key in PERSONA_SCALAR_KEYS:
        if key in out:
            value = out[key]
            if value is None:
                out[key] = UNKNOWN
            elif isinstance(value, (int, float)):
                out[key] = str(value)
    for key in PERSONA_LIST_KEYS:
        if key in out:
            value = out[key]
            if value is None:
                out[key] = [UNKNOWN]
            elif isinstance(value, (str, int, float)):
                out[key] = [str(value)]
            elif isinstance(value, list):
                out[key] = [str(v) if isinstance(v, (int, float)) else v for v in value]
    return out


def parse_persona_output(raw: str) -> Persona:
    """Extract a synthetic persona from model output.

    Accepts a bare JSON object, a fenced code block, or reasoning prose
    followed by the object. Of the top-level JSON objects found, the last
    one carrying persona keys wins (falling back to the last object), so a
    stray fragment after the persona does not mask it. Scalars in list
    positions are coerced to one-element lists.
    """
    if not raw.strip():
        raise NoJsonFound("model output is empty")
    objects = _json_objects(raw)
    if not objects:
        raise NoJsonFound("no JSON object in model output")
    chosen = objects[-1]
    for obj in reversed(objects):
        if any(key in obj for key in PERSONA_KEYS):
            chosen = obj
            break
    prepared = _coerce_fields(chosen)
    prepared["provenance"] = Provenance.SYNTHETIC.value
    return persona_from_mapping(prepared, default_provenance=Provenance.SYNTHETIC)


# -- metered generation -----------------------------------------------------


@dataclass(frozen=True)
class GenerationRecord:
    """One persona-generation run with its timing and token accounting."""

    record_id: str
    story_id: str
    strategy: PromptStrategy
    prompt_text: str
    raw_response: str
    persona: Persona
    elapsed_seconds: float
    prompt_tokens: int
    completion_tokens: int
    total_tokens: int
    model_id: str
    created_at: str
    params_hash: str = ""

    def __post_init__(self):
        if self.elapsed_seconds < 0:
            raise ValueError("elapsed_seconds cannot be negative")
        if self.total_tokens != self.prompt_tokens + self.completion_tokens:
            raise ValueError("total_tokens must equal prompt_tokens + completion_tokens")


@dataclass(frozen=True)
class BatchFailure:
    story_id: str
    strategy: PromptStrategy
    message: str


@dataclass(frozen=True)
class BatchResult:
    records: tuple[GenerationRecord, ...]
    failures: tuple[BatchFailure, ...]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _render_messages(messages: Sequence[Message]) -> str:
    return "\n\n".join(f"[{m['role']}]\n{m['content']}" for m in messages)


def _params_hash(params: Mapping[str, object] | None) -> str:
    return hashlib.sha256(
        json.dumps(dict(params or {}), sort_keys=True).encode("utf-8")
    ).hexdigest()


def generate_persona(
    story: SuccessStory,
    strategy: PromptStrategy,
    client: LLMClient,
    clock: Callable[[], float] = time.monotonic,
    examples: Sequence[Persona] = (),
    params: Mapping[str, object] | None = None,
    now: Callable[[], str] = _utc_now,
    template_path: str | Path | None = None,
) -> GenerationRecord:
    """Build the prompt, call the client, parse, and meter one persona run.

    A parse failure triggers exactly one retry with a repair instruction
    appended to the conversation; timing and token counts accumulate over
    both attempts.
    """
    if strategy is PromptStrategy.FEW_SHOT:
        messages = build_few_shot_prompt(story, examples, template_path)
    else:
        messages = build_cot_prompt(story, template_path)

    elapsed = 0.0
    prompt_tokens = 0
    completion_tokens = 0
    raw = ""
    persona: Persona | None = None
    for attempt in range(2):
        started = clock()
        try:
            result = client.complete(messages, params)
        except PersonaRagError as exc:
            raise GenerationFailed(f"model call failed: {exc}", raw_response=raw or None) from exc
        elapsed += max(0.0, clock() - started)
        prompt_tokens += result.prompt_tokens
        completion_tokens += result.completion_tokens
        raw = result.text
        try:
            persona = parse_persona_output(raw)
            break
        except (NoJsonFound, MissingAttribute, TypeMismatch) as exc:
            if attempt == 1:
                raise GenerationFailed(
                    f"unparseable persona output after retry: {exc}", raw_response=raw
                ) from exc
            messages = list(messages) + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": REPAIR_INSTRUCTION},
            ]
    assert persona is not None
    return GenerationRecord(
        record_id=f"{story.story_id}:{strategy.value}",
        story_id=story.story_id,
        strategy=strategy,
        prompt_text=_render_messages(messages),
        raw_response=raw,
        persona=persona,
        elapsed_seconds=elapsed,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        total_tokens=prompt_tokens + completion_tokens,
        model_id=client.model_id,
        created_at=now(),
        params_hash=_params_hash(params),
    )


def batch_generate(
    stories: Sequence[SuccessStory],
    strategies: Sequence[PromptStrategy],
    client: LLMClient,
    examples: Sequence[Persona] = (),
    parallelism: int = 1,
    clock: Callable[[], float] = time.monotonic,
    now: Callable[[], str] = _utc_now,
    template_path: str | Path | None = None,
) -> BatchResult:
    """One generation attempt per (story, strategy), in input order.

    Failures are collected per item and never abort the batch. With
    ``parallelism`` > 1 the items run on a thread pool; results still merge
    in input order.
    """
    pairs = [(story, strategy) for story in stories for strategy in strategies]

    def run(pair: tuple[SuccessStory, PromptStrategy]):
        story, strategy = pair
        try:
            return generate_persona(
                story, strategy, client,
                clock=clock, examples=examples, now=now, template_path=template_path,
            )
        except (GenerationFailed, PersonaRagError) as exc:
            return BatchFailure(story_id=story.story_id, strategy=strategy, message=str(exc))

    if parallelism > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run, pairs))
    else:
        outcomes = [run(pair) for pair in pairs]

    records = tuple(o for o in outcomes if isinstance(o, GenerationRecord))
    failures = tuple(o for o in outcomes if isinstance(o, BatchFailure))
    return BatchResult(records=records, failures=failures)


# -- JSONL persistence ------------------------------------------------------


def record_to_dict(record: GenerationRecord) -> dict:
    persona_payload = json.loads(persona_to_json(record.persona))
    return {
        "record_id": record.record_id,
        "story_id": record.story_id,
        "strategy": record.strategy.value,
        "prompt_text": record.prompt_text,
        "raw_response": record.raw_response,
        "persona": persona_payload,
        "elapsed_seconds": record.elapsed_seconds,
        "prompt_tokens": record.prompt_tokens,
        "completion_tokens": record.completion_tokens,
        "total_tokens": record.total_tokens,
        "model_id": record.model_id,
        "created_at": record.created_at,
        "params_hash": record.params_hash,
    }


def record_from_dict(payload: dict) -> GenerationRecord:
    return GenerationRecord(
        record_id=payload["record_id"],
        story_id=payload["story_id"],
        strategy=PromptStrategy(payload["strategy"]),
        prompt_text=payload["prompt_text"],
        raw_response=payload["raw_response"],
        persona=persona_from_mapping(payload["persona"]),
        elapsed_seconds=float(payload["elapsed_seconds"]),
        prompt_tokens=int(payload["prompt_tokens"]),
        completion_tokens=int(payload["completion_tokens"]),
        total_tokens=int(payload["total_tokens"]),
        model_id=payload["model_id"],
        created_at=payload["created_at"],
        params_hash=payload.get("params_hash", ""),
    )


def write_generation_records(records: Sequence[GenerationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")


def read_generation_records(path: str | Path) -> list[GenerationRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(record_from_dict(json.loads(line)))
    return records
