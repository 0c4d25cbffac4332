"""Bug report domain model and line-oriented corpus storage.

A corpus is a JSON-lines file, one report per line. Membership requires a
follow-up question and all three candidate answers; records that fail that
bar are dropped (and counted) at load rather than poisoning the ranker.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .textprep import clean

logger = logging.getLogger(__name__)

LANGUAGE_TAGS = ("Python", "Java", "JavaScript", "C++", "other")
ANSWER_SLOTS = ("ca1", "ca2", "ca3")

_RECORD_KEYS = (
    "id",
    "repo",
    "title",
    "description",
    "question",
    "ca1",
    "ca2",
    "ca3",
    "labels",
    "author",
    "created_at",
    "closed_at",
    "lang",
)


class CorpusFormatError(ValueError):
    """A storage-level defect: bad JSON, bad schema, or a duplicate id."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


def _as_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def parse_timestamp(raw: str) -> datetime:
    """Parse an ISO-8601 timestamp ('Z' suffix accepted) to aware UTC."""
    return _as_utc(datetime.fromisoformat(raw.replace("Z", "+00:00")))


def format_timestamp(value: datetime) -> str:
    return _as_utc(value).isoformat().replace("+00:00", "Z")


@dataclass(slots=True)
class BugReport:
    """One issue: the report text, optional follow-up QA material, metadata."""

    id: str
    repo: str
    title: str
    description: str
    author: str
    created_at: datetime
    closed_at: datetime | None = None
    followup_question: str | None = None
    ca1: str | None = None
    ca2: str | None = None
    ca3: str | None = None
    labels: set[str] = field(default_factory=set)
    language_tag: str = "other"
    # Held-out rows may carry the slot accepted by annotator votes.
    gold: str | None = None

    def __post_init__(self) -> None:
        self.created_at = _as_utc(self.created_at)
        if self.closed_at is not None:
            self.closed_at = _as_utc(self.closed_at)

    @property
    def candidate_answers(self) -> tuple[str | None, str | None, str | None]:
        return (self.ca1, self.ca2, self.ca3)

    def answer(self, slot: str) -> str | None:
        if slot not in ANSWER_SLOTS:
            raise ValueError(f"unknown answer slot: {slot!r}")
        return getattr(self, slot)


@dataclass(slots=True)
class Comment:
    comment_id: str
    issue_id: str
    author: str
    body: str
    time: datetime

    def __post_init__(self) -> None:
        self.time = _as_utc(self.time)


@dataclass(slots=True)
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)


@dataclass(slots=True)
class Corpus:
    """Ordered, immutable-after-load collection of complete entries."""

    entries: list[BugReport] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(slots=True)
class DropNote:
    """Why a record was excluded from corpus membership at load time."""

    line_number: int
    entry_id: str | None
    reason: str


def validate_report(report: BugReport) -> ValidationResult:
    """Check BugReport invariants; violations are data, not exceptions."""
    violations: list[str] = []
    if not report.id:
        violations.append("empty id")
    if not clean(report.title):
        violations.append("title empty after cleaning")
    if (
        report.closed_at is not None
        and report.closed_at < report.created_at
    ):
        violations.append("time order: closed_at before created_at")
    if report.language_tag not in LANGUAGE_TAGS:
        violations.append(f"unknown language tag: {report.language_tag!r}")
    return ValidationResult(ok=not violations, violations=violations)


def membership_problem(report: BugReport) -> str | None:
    """Why a report cannot be a corpus entry, or None if it qualifies."""
    result = validate_report(report)
    if not result.ok:
        return "; ".join(result.violations)
    if report.followup_question is None or not report.followup_question.strip():
        return "missing follow-up question"
    if any(a is None for a in report.candidate_answers):
        return "missing candidate answer"
    if not any(a.strip() for a in report.candidate_answers):
        return "all candidate answers blank"
    return None


def report_to_record(report: BugReport) -> dict:
    record = {
        "id": report.id,
        "repo": report.repo,
        "title": report.title,
        "description": report.description,
        "question": report.followup_question,
        "ca1": report.ca1,
        "ca2": report.ca2,
        "ca3": report.ca3,
        "labels": sorted(report.labels),
        "author": report.author,
        "created_at": format_timestamp(report.created_at),
        "closed_at": (
            format_timestamp(report.closed_at)
            if report.closed_at is not None
            else None
        ),
        "lang": report.language_tag,
    }
    if report.gold is not None:
        record["gold"] = report.gold
    return record


def record_to_report(record: dict, line_number: int | None = None) -> BugReport:
    if not isinstance(record, dict):
        raise CorpusFormatError(
            f"record at line {line_number} is not a JSON object", line_number
        )
    missing = [k for k in _RECORD_KEYS if k not in record]
    if missing:
        raise CorpusFormatError(
            f"record at line {line_number} missing keys: {', '.join(missing)}",
            line_number,
        )
    unknown = [k for k in record if k not in _RECORD_KEYS and k != "gold"]
    if unknown:
        raise CorpusFormatError(
            f"record at line {line_number} has unknown keys: {', '.join(unknown)}",
            line_number,
        )
    gold = record.get("gold")
    if gold is not None and gold not in ANSWER_SLOTS:
        raise CorpusFormatError(
            f"record at line {line_number} has invalid gold slot {gold!r}",
            line_number,
        )
    try:
        return BugReport(
            id=record["id"],
            repo=record["repo"],
            title=record["title"],
            description=record["description"] or "",
            followup_question=record["question"],
            ca1=record["ca1"],
            ca2=record["ca2"],
            ca3=record["ca3"],
            labels=set(record["labels"]),
            author=record["author"],
            created_at=parse_timestamp(record["created_at"]),
            closed_at=(
                parse_timestamp(record["closed_at"])
                if record["closed_at"] is not None
                else None
            ),
            language_tag=record["lang"],
            gold=gold,
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise CorpusFormatError(
            f"record at line {line_number} is malformed: {exc}", line_number
        ) from exc


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write one JSON record per line; whole-file replace via temp rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for report in corpus.entries:
            handle.write(
                json.dumps(
                    report_to_record(report),
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            handle.write("\n")
    os.replace(tmp, path)


def load_corpus_report(path: str | Path) -> tuple[Corpus, list[DropNote]]:
    """Load a corpus, returning it with drop notes for excluded records.

    Raises:
        CorpusFormatError: malformed JSON/schema (carries the line number)
            or a duplicate entry id.
    """
    path = Path(path)
    entries: list[BugReport] = []
    drops: list[DropNote] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(
                    f"invalid JSON at line {line_number}: {exc.msg}",
                    line_number,
                ) from exc
            report = record_to_report(record, line_number)
            if report.id in seen_ids:
                raise CorpusFormatError(
                    f"duplicate id {report.id!r} at line {line_number}",
                    line_number,
                )
            seen_ids.add(report.id)
            problem = membership_problem(report)
            if problem is not None:
                drops.append(DropNote(line_number, report.id or None, problem))
                logger.warning(
                    "dropped record at line %d (%s): %s",
                    line_number,
                    report.id or "<no id>",
                    problem,
                )
                continue
            entries.append(report)
    return Corpus(entries), drops


def load_corpus(path: str | Path) -> Corpus:
    corpus, _ = load_corpus_report(path)
    return corpus


def load_reports(path: str | Path) -> list[BugReport]:
    """Load raw report records without corpus-membership filtering.

    Used for held-out files and single deficient-report inputs, where
    entries legitimately carry gold slots or partial answer sets.
    """
    path = Path(path)
    reports: list[BugReport] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(
                    f"invalid JSON at line {line_number}: {exc.msg}",
                    line_number,
                ) from exc
            report = record_to_report(record, line_number)
            if report.id in seen_ids:
                raise CorpusFormatError(
                    f"duplicate id {report.id!r} at line {line_number}",
                    line_number,
                )
            seen_ids.add(report.id)
            reports.append(report)
    return reports
