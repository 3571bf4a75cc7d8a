"""Exception types shared across the package.

Every operational failure raises a subclass of :class:`PersonaRagError` so
callers (CLI, service) can map errors to exit codes / HTTP statuses in one
place.
"""

from __future__ import annotations


class PersonaRagError(Exception):
    """Base class for all errors raised by this package."""


# ingestion / corpus

class NoContainerFound(PersonaRagError):
    """The HTML container selector matched nothing."""


class EmptyExtraction(PersonaRagError):
    """The matched container holds zero paragraph elements."""


class MalformedRow(PersonaRagError):
    """A CSV row has the wrong shape or an invalid field value."""


class DuplicateId(PersonaRagError):
    """An identifier that must be unique appeared twice."""


class MissingAttribute(PersonaRagError):
    """A persona object lacks one or more required attribute keys."""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__(f"missing persona attributes: {', '.join(self.missing)}")


class TypeMismatch(PersonaRagError):
    """A persona field has the wrong JSON type (e.g. list field not an array)."""


# embedding

class EmptyText(PersonaRagError):
    """Text to embed is empty after whitespace trim."""


class RemoteUnavailable(PersonaRagError):
    """The remote provider failed; carries an optional retry-after hint."""

    def __init__(self, message: str, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(message)


class DimensionMismatch(PersonaRagError):
    """Vector dimension does not match the configured dimension."""


class ZeroVector(PersonaRagError):
    """Cosine similarity is undefined for a zero vector."""


# index

class EmptyBatch(PersonaRagError):
    """upsert was called with an empty document batch."""


class EmptyQuery(PersonaRagError):
    """A search query is empty after normalization."""


class EmptyIndex(PersonaRagError):
    """The operation requires at least one indexed document."""


class FormatVersionMismatch(PersonaRagError):
    """An index file was written by an incompatible format version."""


class CorruptFile(PersonaRagError):
    """An index file failed its checksum or is truncated."""


# retrieval

class DuplicateInList(PersonaRagError):
    """A ranked input list passed to fusion contains a repeated id."""


# persona generation

class WrongExampleCount(PersonaRagError):
    """Few-shot prompts require exactly three example personas."""


class IncompleteExample(PersonaRagError):
    """A few-shot example persona has an empty attribute."""


class EmptyStory(PersonaRagError):
    """The success story text is empty."""


class NoJsonFound(PersonaRagError):
    """No well-formed JSON object could be located in the model output."""


class GenerationFailed(PersonaRagError):
    """Persona or answer generation failed; preserves the raw response."""

    def __init__(self, message: str, raw_response: str | None = None):
        self.raw_response = raw_response
        super().__init__(message)


# chat

class MissingSection(PersonaRagError):
    """A system-message template file lacks a required section."""

    def __init__(self, section: str):
        self.section = section
        super().__init__(f"system message file missing [{section}] section")


# evaluation statistics

class UnpairedJudgment(PersonaRagError):
    """A judgment exists for one method but not the other."""

    def __init__(self, keys: list[tuple[str, str]]):
        self.keys = list(keys)
        shown = ", ".join(f"{e}/{s}" for e, s in self.keys[:5])
        super().__init__(f"unpaired judgments for (evaluator, story): {shown}")


class NoDiscordantPairs(PersonaRagError):
    """McNemar tests are undefined when b + c = 0."""


class SubsetTooLarge(PersonaRagError):
    """Requested evaluation subset exceeds the available stories."""


class NoResponses(PersonaRagError):
    """No survey responses exist for the requested question."""


class NoRecords(PersonaRagError):
    """No generation records were provided."""
