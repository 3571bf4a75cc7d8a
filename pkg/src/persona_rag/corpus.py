"""Corpus ingestion: success stories, personas, and segment knowledge.

Three data types feed the search index:

* success stories scraped from HTML article pages,
* personas as structured JSON (nine textual attributes),
* segment knowledge as Markdown, split into heading-scoped chunks.

All functions here are pure over immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from pathlib import Path
from typing import Sequence

from .errors import (
    DuplicateId,
    EmptyExtraction,
    MalformedRow,
    MissingAttribute,
    NoContainerFound,
    TypeMismatch,
)

DEFAULT_CONTAINER_SELECTOR = ".newsArticle-2023"
DEFAULT_PARAGRAPH_TAG = "p"
PARAGRAPH_SEPARATOR = "\n\n"
DEFAULT_MAX_CHUNK_CHARS = 4000

# Attribute keys in canonical serialization order.
PERSONA_SCALAR_KEYS = ("name", "role", "number_of_employees", "fleet_size", "short_story")
PERSONA_LIST_KEYS = ("what_is_important", "challenges", "expectations", "buying_considerations")
PERSONA_KEYS = PERSONA_SCALAR_KEYS + PERSONA_LIST_KEYS

UNKNOWN = "unknown"


class Segment(str, Enum):
    QUARRYING = "quarrying"
    MINING = "mining"
    AGGREGATES = "aggregates"


class Provenance(str, Enum):
    VERIFIED = "verified"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class SuccessStory:
    """One customer success story, reduced to its paragraph texts."""

    story_id: str
    source_url: str
    segment: Segment
    paragraphs: tuple[str, ...]

    def __post_init__(self):
        if not self.paragraphs:
            raise EmptyExtraction(f"story {self.story_id!r} has no paragraphs")

    @property
    def full_text(self) -> str:
        return PARAGRAPH_SEPARATOR.join(self.paragraphs)


@dataclass(frozen=True)
class Persona:
    """Nine textual attributes describing one customer.

    Absent knowledge is carried as the literal string ``"unknown"`` (scalar
    fields) or ``["unknown"]`` (list fields) so every serialization has all
    nine keys.
    """

    name: str = UNKNOWN
    role: str = UNKNOWN
    number_of_employees: str = UNKNOWN
    fleet_size: str = UNKNOWN
    short_story: str = UNKNOWN
    what_is_important: tuple[str, ...] = (UNKNOWN,)
    challenges: tuple[str, ...] = (UNKNOWN,)
    expectations: tuple[str, ...] = (UNKNOWN,)
    buying_considerations: tuple[str, ...] = (UNKNOWN,)
    provenance: Provenance = Provenance.VERIFIED

    def attribute(self, key: str) -> str | tuple[str, ...]:
        return getattr(self, key)

    def is_complete(self) -> bool:
        """True when no attribute is empty (the "unknown" sentinel counts as filled)."""
        for key in PERSONA_SCALAR_KEYS:
            if not str(getattr(self, key)).strip():
                return False
        for key in PERSONA_LIST_KEYS:
            items = getattr(self, key)
            if not items or any(not item.strip() for item in items):
                return False
        return True

    def content_text(self) -> str:
        """Flatten to ``key: value`` lines in attribute order, for embedding."""
        lines = []
        for key in PERSONA_KEYS:
            value = getattr(self, key)
            if isinstance(value, tuple):
                value = "; ".join(value)
            lines.append(f"{key}: {value}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Chunk:
    """A heading-scoped slice of a Markdown document.

    ``heading_line`` records the verbatim heading that opened the chunk
    (empty for preamble and for continuation chunks produced by length
    splitting) so the original non-blank lines can be reconstructed.
    """

    chunk_id: str
    source_id: str
    heading_path: tuple[str, ...]
    body: str
    order_index: int
    heading_line: str = ""


# ---------------------------------------------------------------------------
# HTML paragraph extraction
# ---------------------------------------------------------------------------

_WS = re.compile(r"\s+")

# elements whose subtree never contributes story text
_SKIPPED_SUBTREES = frozenset({"figure", "figcaption", "script", "style", "nav", "aside"})


def collapse_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _parse_selector(selector: str) -> tuple[str | None, str | None, str | None]:
    """Split ``tag.class`` / ``.class`` / ``#id`` / ``tag`` into parts."""
    tag = cls = elem_id = None
    rest = selector.strip()
    if "#" in rest:
        rest, elem_id = rest.split("#", 1)
    if "." in rest:
        rest, cls = rest.split(".", 1)
    if rest:
        tag = rest.lower()
    return tag, cls, elem_id


class _ParagraphExtractor(HTMLParser):
    """Collects paragraph texts inside the first container matching a selector.

    The selector supports a tag name, ``#id``, and a ``.class`` part that must
    equal the element's class attribute exactly. Headings, figures, and
    captions inside the container are ignored.
    """

    def __init__(self, selector: str, paragraph_tag: str):
        super().__init__(convert_charrefs=True)
        self._want_tag, self._want_class, self._want_id = _parse_selector(selector)
        self._paragraph_tag = paragraph_tag.lower()
        self.found_container = False
        self._container_depth = 0     # >0 while inside the matched container
        self._done = False            # first matching container only
        self._skip_depth = 0
        self._p_depth = 0
        self._current: list[str] = []
        self.paragraphs: list[str] = []

    def _matches(self, tag: str, attrs: list[tuple[str, str | None]]) -> bool:
        if self._want_tag is not None and tag != self._want_tag:
            return False
        attr_map = {k: (v or "") for k, v in attrs}
        if self._want_class is not None and attr_map.get("class") != self._want_class:
            return False
        if self._want_id is not None and attr_map.get("id") != self._want_id:
            return False
        return True

    def handle_starttag(self, tag, attrs):
        if self._done:
            return
        if self._container_depth == 0:
            if self._matches(tag, attrs):
                self.found_container = True
                self._container_depth = 1
            return
        self._container_depth += 1
        if self._skip_depth:
            self._skip_depth += 1
            return
        if tag in _SKIPPED_SUBTREES:
            self._skip_depth = 1
            return
        if tag == self._paragraph_tag:
            self._p_depth += 1
            self._current = []

    def handle_endtag(self, tag):
        if self._done or self._container_depth == 0:
            return
        if self._skip_depth:
            self._skip_depth -= 1
            self._container_depth -= 1
            return
        if tag == self._paragraph_tag and self._p_depth:
            self._p_depth -= 1
            if self._p_depth == 0:
                text = collapse_whitespace("".join(self._current))
                if text:
                    self.paragraphs.append(text)
        self._container_depth -= 1
        if self._container_depth == 0:
            self._done = True

    def handle_data(self, data):
        if self._p_depth and not self._skip_depth and not self._done:
            self._current.append(data)


def extract_story_text(
    html: str,
    container_selector: str = DEFAULT_CONTAINER_SELECTOR,
    paragraph_tag: str = DEFAULT_PARAGRAPH_TAG,
) -> list[str]:
    """Extract cleaned paragraph texts from the story container of a page.

    Returns the text content of every paragraph element inside the first
    container matching ``container_selector``, in document order, with runs
    of whitespace collapsed. Raises :class:`NoContainerFound` when the
    selector matches nothing and :class:`EmptyExtraction` when the container
    holds no paragraphs.
    """
    parser = _ParagraphExtractor(container_selector, paragraph_tag)
    parser.feed(html)
    parser.close()
    if not parser.found_container:
        raise NoContainerFound(f"no element matches selector {container_selector!r}")
    if not parser.paragraphs:
        raise EmptyExtraction(f"container {container_selector!r} holds no paragraph text")
    return parser.paragraphs


def apply_patch(paragraphs: list[str], patch_text: str) -> list[str]:
    """Append hand-maintained correction paragraphs to an extracted story.

    Patch files carry one paragraph per non-blank line and are appended
    verbatim (after whitespace collapse, matching extracted text).
    """
    patched = list(paragraphs)
    for line in patch_text.splitlines():
        cleaned = collapse_whitespace(line)
        if cleaned:
            patched.append(cleaned)
    return patched


def story_id_from_url(url: str) -> str:
    """Slug from the last non-empty path segment of the URL."""
    path = url.split("//", 1)[-1].split("?", 1)[0].rstrip("/")
    last = path.rsplit("/", 1)[-1]
    slug = re.sub(r"[^a-z0-9]+", "-", last.lower()).strip("-")
    return slug or "story"


# ---------------------------------------------------------------------------
# Story URL CSV
# ---------------------------------------------------------------------------

STORY_CSV_HEADER = ["story_id", "url", "segment"]


def load_story_urls(csv_path: str | Path) -> list[tuple[str, str, Segment]]:
    """Read the ``story_id,url,segment`` CSV listing stories to ingest."""
    rows: list[tuple[str, str, Segment]] = []
    seen: set[str] = set()
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STORY_CSV_HEADER:
            raise MalformedRow(f"expected header {STORY_CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"line {lineno}: expected 3 columns, got {len(row)}")
            story_id, url, segment_raw = (cell.strip() for cell in row)
            if not story_id or not url:
                raise MalformedRow(f"line {lineno}: empty story_id or url")
            try:
                segment = Segment(segment_raw)
            except ValueError:
                raise MalformedRow(
                    f"line {lineno}: segment {segment_raw!r} not one of "
                    f"{[s.value for s in Segment]}"
                ) from None
            if story_id in seen:
                raise DuplicateId(f"line {lineno}: duplicate story_id {story_id!r}")
            seen.add(story_id)
            rows.append((story_id, url, segment))
    return rows


def story_to_dict(story: SuccessStory) -> dict:
    return {
        "story_id": story.story_id,
        "source_url": story.source_url,
        "segment": story.segment.value,
        "paragraphs": list(story.paragraphs),
    }


def story_from_dict(obj: dict) -> SuccessStory:
    try:
        return SuccessStory(
            story_id=obj["story_id"],
            source_url=obj["source_url"],
            segment=Segment(obj["segment"]),
            paragraphs=tuple(obj["paragraphs"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedRow(f"bad story record: {exc}") from None


def write_stories_jsonl(stories: Sequence[SuccessStory], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for story in stories:
            fh.write(json.dumps(story_to_dict(story), ensure_ascii=False) + "\n")


def read_stories_jsonl(path: str | Path) -> list[SuccessStory]:
    stories = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                stories.append(story_from_dict(json.loads(line)))
    return stories


# ---------------------------------------------------------------------------
# Persona JSON
# ---------------------------------------------------------------------------


def persona_to_json(p: Persona, include_provenance: bool = True) -> str:
    """Serialize with the nine attribute keys in fixed order, byte-stable.

    ``include_provenance=False`` drops the metadata key; prompts show models
    only the nine attributes they are asked to produce.
    """
    payload: dict[str, object] = {}
    for key in PERSONA_KEYS:
        value = getattr(p, key)
        payload[key] = list(value) if isinstance(value, tuple) else value
    if include_provenance:
        payload["provenance"] = p.provenance.value
    return json.dumps(payload, indent=2, ensure_ascii=False)


def persona_from_mapping(obj: dict, default_provenance: Provenance = Provenance.VERIFIED) -> Persona:
    """Build a Persona from a decoded JSON object, validating the nine keys."""
    missing = [key for key in PERSONA_KEYS if key not in obj]
    if missing:
        raise MissingAttribute(missing)
    kwargs: dict[str, object] = {}
    for key in PERSONA_SCALAR_KEYS:
        value = obj[key]
        if isinstance(value, (list, dict)):
            raise TypeMismatch(f"{key}: expected string, got {type(value).__name__}")
        kwargs[key] = str(value)
    for key in PERSONA_LIST_KEYS:
        value = obj[key]
        if not isinstance(value, list):
            raise TypeMismatch(f"{key}: expected array, got {type(value).__name__}")
        items = tuple(str(v) for v in value if str(v).strip())
        kwargs[key] = items or (UNKNOWN,)
    provenance = obj.get("provenance", default_provenance)
    kwargs["provenance"] = Provenance(provenance)
    return Persona(**kwargs)


def parse_persona_json(text: str) -> Persona:
    """Inverse of :func:`persona_to_json`; round-trip is the identity."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TypeMismatch(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise TypeMismatch(f"expected JSON object, got {type(obj).__name__}")
    return persona_from_mapping(obj)


def load_persona_file(path: str | Path) -> Persona:
    return parse_persona_json(Path(path).read_text(encoding="utf-8"))


def load_persona_dir(path: str | Path) -> list[tuple[str, Persona]]:
    """Load every ``*.json`` persona in a directory, sorted by filename."""
    out = []
    for file in sorted(Path(path).glob("*.json")):
        out.append((file.stem, load_persona_file(file)))
    return out


# ---------------------------------------------------------------------------
# Markdown chunking
# ---------------------------------------------------------------------------

_HEADING = re.compile(r"^(#{1,6})\s+(.*?)\s*$")

SPLIT_HEADING_LEVEL = 2


def _split_oversized(body_lines: list[str], max_chars: int) -> list[list[str]]:
    """Split a body at paragraph boundaries so each piece fits max_chars.

    A single paragraph longer than the budget stays whole; paragraph
    boundaries are the only legal split points.
    """
    paragraphs: list[list[str]] = []
    current: list[str] = []
    for line in body_lines:
        if line.strip():
            current.append(line)
        elif current:
            paragraphs.append(current)
            current = []
    if current:
        paragraphs.append(current)

    pieces: list[list[str]] = []
    buf: list[str] = []
    size = 0
    for para in paragraphs:
        para_len = sum(len(line) + 1 for line in para) + 1
        if buf and size + para_len > max_chars:
            pieces.append(buf)
            buf = []
            size = 0
        buf.extend(para)
        buf.append("")  # paragraph separator
        size += para_len
    if buf:
        pieces.append(buf)
    return pieces or [[]]


def chunk_markdown(
    doc_text: str,
    source_id: str,
    max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
) -> list[Chunk]:
    """Split Markdown into chunks at headings of level <= 2.

    Text before the first heading becomes chunk 0 with an empty heading
    path. Deeper headings stay inside their enclosing chunk body. Chunks
    longer than ``max_chunk_chars`` are split at paragraph boundaries,
    continuations sharing the heading path. Joining heading lines and
    bodies in order reproduces every non-blank input line exactly once.
    """
    # sections: (heading_path, heading_line, body lines)
    sections: list[tuple[tuple[str, ...], str, list[str]]] = []
    stack: list[tuple[int, str]] = []  # (level, title)
    current_lines: list[str] = []
    current_line_for_heading = ""

    def flush():
        path = tuple(title for _, title in stack)
        sections.append((path, current_line_for_heading, current_lines))

    for line in doc_text.splitlines():
        match = _HEADING.match(line)
        level = len(match.group(1)) if match else 0
        if match and level <= SPLIT_HEADING_LEVEL:
            if current_lines or current_line_for_heading or sections or stack:
                flush()
            while stack and stack[-1][0] >= level:
                stack.pop()
            stack.append((level, match.group(2)))
            current_lines = []
            current_line_for_heading = line
        else:
            current_lines.append(line)
    flush()

    # Drop an empty leading preamble (no text before the first heading).
    if sections and not sections[0][1] and not any(l.strip() for l in sections[0][2]):
        sections = sections[1:]

    chunks: list[Chunk] = []
    order = 0
    for path, heading_line, body_lines in sections:
        pieces = _split_oversized(body_lines, max_chunk_chars)
        for i, piece in enumerate(pieces):
            body = "\n".join(piece).strip("\n")
            if not body and not heading_line:
                continue
            chunks.append(
                Chunk(
                    chunk_id=f"{source_id}:{order:04d}",
                    source_id=source_id,
                    heading_path=path,
                    body=body,
                    order_index=order,
                    heading_line=heading_line if i == 0 else "",
                )
            )
            order += 1
    return chunks


def reconstruct_nonblank_lines(chunks: list[Chunk]) -> list[str]:
    """Non-blank lines recovered from chunks, for the losslessness check."""
    lines: list[str] = []
    for chunk in sorted(chunks, key=lambda c: c.order_index):
        if chunk.heading_line:
            lines.append(chunk.heading_line)
        for line in chunk.body.splitlines():
            if line.strip():
                lines.append(line)
    return lines
