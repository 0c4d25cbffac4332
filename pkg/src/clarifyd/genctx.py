"""Context assembly and answer generation backends.

A context packages one retrieved answer with enough surrounding report
text for a generator to rephrase it toward the asked question. Backends
are swappable; the extractive one simply returns the retrieved answer,
and doubles as the fallback when a remote generator misbehaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import requests

from .corpus import BugReport
from .retrieval import RankedAnswer

CONTEXT_MODES = (1, 2)


@dataclass(slots=True)
class Segment:
    label: str
    text: str


@dataclass(slots=True)
class Context:
    """Generator input: ordered text segments plus provenance.

    answer_text keeps the retrieved answer untruncated even when the
    rendered segments were cut to fit a budget.
    """

    mode: int
    segments: list[Segment]
    answer_text: str
    source_entry_id: str
    source_slot: str

    def render(self) -> str:
        return "\n".join(s.text for s in self.segments if s.text)


def _fit_to_budget(segments: list[Segment], max_chars: int) -> list[Segment]:
    """Shrink segments until the rendered join fits max_chars.

    Each pass cuts the longest text (ties go to the later, less important
    segment) by the current overflow. A segment cut to nothing stops
    costing its separator, so the loop runs at most len(segments)+1 times.
    """
    if max_chars < 0:
        raise ValueError(f"max_chars must be non-negative, got {max_chars}")
    texts = [s.text for s in segments]

    def rendered_length() -> int:
        return len("\n".join(t for t in texts if t))

    while rendered_length() > max_chars:
        longest = max(range(len(texts)), key=lambda i: (len(texts[i]), i))
        overflow = rendered_length() - max_chars
        keep = max(0, len(texts[longest]) - overflow)
        texts[longest] = texts[longest][:keep]
    return [Segment(s.label, t) for s, t in zip(segments, texts)]


def build_context(
    mode: int,
    deficient: BugReport,
    top: RankedAnswer,
    source: BugReport,
    max_chars: int | None = None,
) -> Context:
    """Assemble the generator context for one retrieved answer.

    Mode 1 carries the answer and its source report's title and
    description. Mode 2 appends the deficient report's own title and
    description so the generator sees both sides.
    """
    if mode not in CONTEXT_MODES:
        raise ValueError(f"context mode must be one of {CONTEXT_MODES}")
    segments = [
        Segment("answer", top.answer),
        Segment("source-title", source.title),
        Segment("source-description", source.description),
    ]
    if mode == 2:
        segments.append(Segment("deficient-title", deficient.title))
        segments.append(Segment("deficient-description", deficient.description))
    if max_chars is not None:
        segments = _fit_to_budget(segments, max_chars)
    return Context(
        mode=mode,
        segments=segments,
        answer_text=top.answer,
        source_entry_id=top.entry_id,
        source_slot=top.slot,
    )


class GenerationBackend(Protocol):
    tag: str

    def generate(self, question: str, context: Context) -> str: ...


class BackendError(RuntimeError):
    pass


class ExtractiveBackend:
    """Returns the retrieved answer verbatim; never fails."""

    tag = "extractive"

    def generate(self, question: str, context: Context) -> str:
        return context.answer_text


class ServiceBackend:
    """Delegates generation to the HTTP service's /generate endpoint."""

    def __init__(
        self,
        base_url: str,
        *,
        max_new_tokens: int = 64,
        timeout: float = 60.0,
        session=None,
    ):
        self._base = base_url.rstrip("/")
        self._max_new_tokens = max_new_tokens
        self._timeout = timeout
        self._session = session if session is not None else requests.Session()
        self.tag = f"service:{self._base}"

    def generate(self, question: str, context: Context) -> str:
        try:
            response = self._session.post(
                f"{self._base}/generate",
                json={
                    "question": question,
                    "context": context.render(),
                    "max_new_tokens": self._max_new_tokens,
                },
                timeout=self._timeout,
            )
            response.raise_for_status()
            payload = response.json()
            return payload["answer"]
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise BackendError(f"generation service failed: {exc}") from exc


@dataclass(slots=True)
class GeneratedAnswer:
    text: str
    backend_tag: str
    entry_id: str
    slot: str


class GenerationError(RuntimeError):
    def __init__(self, causes: list[str]):
        super().__init__(
            "generation failed for "
            f"{len(causes)} context(s): " + "; ".join(causes)
        )
        self.causes = causes


def generate_answers(
    question: str,
    contexts: list[Context],
    backend: GenerationBackend,
    k: int,
    *,
    fallback: bool = True,
) -> list[GeneratedAnswer]:
    """One generated answer per context, up to k.

    With fallback enabled a failing context degrades to its retrieved
    answer text instead of sinking the batch. With fallback disabled, all
    contexts are attempted and a single error reports every failure.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    answers: list[GeneratedAnswer] = []
    causes: list[str] = []
    for context in contexts[:k]:
        try:
            text = backend.generate(question, context)
            tag = backend.tag
        except Exception as exc:
            if not fallback:
                causes.append(
                    f"{context.source_entry_id}/{context.source_slot}: {exc}"
                )
                continue
            text = context.answer_text
            tag = "extractive-fallback"
        answers.append(
            GeneratedAnswer(
                text=text,
                backend_tag=tag,
                entry_id=context.source_entry_id,
                slot=context.source_slot,
            )
        )
    if causes:
        raise GenerationError(causes)
    return answers
