"""Mining corpus entries out of issue threads.

A thread yields an entry when a non-reporter comment asks a follow-up
question and three candidate answers can be pulled from the remaining
comments. Quality filters inspect the raw comment text, since cleaning
strips the very markers they look for.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import (
    ANSWER_SLOTS,
    BugReport,
    Comment,
    Corpus,
    membership_problem,
)
from .textprep import (
    clean,
    contains_image_or_video,
    contains_stack_trace,
    find_long_fenced_block,
    preprocess,
)

logger = logging.getLogger(__name__)

INTERROGATIVES = frozenset(
    {
        "what",
        "why",
        "how",
        "when",
        "where",
        "which",
        "who",
        "can",
        "could",
        "would",
        "do",
        "does",
        "did",
        "is",
        "are",
    }
)

_REQUEST_PHRASES = ("please", "can you", "could you", "would you")
_REQUEST_RE = re.compile(
    r"\b(?:" + "|".join(p.replace(" ", r"\s+") for p in _REQUEST_PHRASES) + r")\b",
    re.IGNORECASE,
)

MAX_FENCED_LINES = 10


@dataclass(slots=True)
class QuestionPick:
    comment: Comment
    reason: str


@dataclass(slots=True)
class CandidateTriple:
    ca1: Comment | None
    ca2: Comment | None
    ca3: Comment | None

    def all_present(self) -> bool:
        return None not in (self.ca1, self.ca2, self.ca3)


def question_reason(body: str) -> str | None:
    """Classify why a comment counts as a follow-up question, or None.

    Exactly one reason applies per body: an interrogative opener with a
    trailing question mark wins; otherwise a request phrase with a trailing
    question mark; otherwise a bare request phrase.
    """
    stripped = body.strip()
    if not stripped:
        return None
    first = re.match(r"\w+", stripped.lower())
    starts_interrogative = bool(first) and first.group() in INTERROGATIVES
    ends_question = stripped.endswith("?")
    has_request = bool(_REQUEST_RE.search(stripped))
    if starts_interrogative and ends_question:
        return "interrogative-start"
    if has_request and ends_question:
        return "question-mark"
    if has_request:
        return "request-phrase"
    return None


def detect_followup_question(
    comments: list[Comment], reporter: str
) -> QuestionPick | None:
    """First non-reporter comment that reads as a clarification request."""
    for comment in comments:
        if comment.author == reporter:
            continue
        reason = question_reason(comment.body)
        if reason is not None:
            return QuestionPick(comment, reason)
    return None


def _bm25_pick(comments: list[Comment], query_tokens: list[str]) -> Comment | None:
    """Highest-scoring comment against the question; earliest wins ties.

    Returns None when every comment scores zero.
    """
    if not comments:
        return None
    docs = [preprocess(c.body) for c in comments]
    counts = [Counter(d) for d in docs]
    df: Counter = Counter()
    for c in counts:
        for token in c:
            df[token] += 1
    n = len(docs)
    avg = sum(len(d) for d in docs) / n
    k1, b = 1.2, 0.75
    best_idx = None
    best_score = 0.0
    for idx, c in enumerate(counts):
        score = 0.0
        for token in query_tokens:
            tf = c.get(token, 0)
            if tf == 0:
                continue
            idf = math.log(1.0 + (n - df[token] + 0.5) / (df[token] + 0.5))
            norm = k1 * (1.0 - b + b * len(docs[idx]) / avg)
            score += idf * (tf * (k1 + 1.0)) / (tf + norm)
        if score > best_score:
            best_score = score
            best_idx = idx
    if best_idx is None:
        return None
    return comments[best_idx]


def select_candidate_answers(
    comments: list[Comment], question: Comment, reporter: str
) -> CandidateTriple:
    """Pull the three candidate answers for a detected question.

    ca1: first later comment by anyone other than the asker.
    ca2: first later comment by the reporter.
    ca3: the comment (question excluded, any position) that scores highest
         against the question text.
    """
    question_pos = next(
        i for i, c in enumerate(comments) if c.comment_id == question.comment_id
    )
    after = comments[question_pos + 1 :]
    ca1 = next((c for c in after if c.author != question.author), None)
    ca2 = next((c for c in after if c.author == reporter), None)
    others = [c for c in comments if c.comment_id != question.comment_id]
    ca3 = _bm25_pick(others, preprocess(question.body))
    return CandidateTriple(ca1, ca2, ca3)


@dataclass(slots=True)
class MinedEntry:
    """Raw material for one corpus entry, pre-cleaning."""

    report: BugReport
    question: Comment
    answers: CandidateTriple


def apply_quality_filters(entry: MinedEntry) -> tuple[bool, list[str]]:
    """Check the raw question and answer texts for disqualifying content.

    Returns (keep, reasons); reasons are deduplicated in first-hit order.
    """
    reasons: list[str] = []
    texts = [entry.question.body] + [
        c.body
        for c in (entry.answers.ca1, entry.answers.ca2, entry.answers.ca3)
        if c is not None
    ]
    for text in texts:
        if contains_stack_trace(text):
            if "stack-trace" not in reasons:
                reasons.append("stack-trace")
        if find_long_fenced_block(text, MAX_FENCED_LINES) is not None:
            if "code-too-long" not in reasons:
                reasons.append("code-too-long")
        has_media, kind = contains_image_or_video(text)
        if has_media and kind not in reasons:
            reasons.append(kind)
    return (not reasons, reasons)


@dataclass(slots=True)
class MiningNote:
    issue_id: str
    stage: str
    detail: str


def build_entry(
    report: BugReport, comments: list[Comment]
) -> tuple[BugReport | None, MiningNote | None]:
    """Turn one issue thread into a corpus entry, or explain the skip."""
    pick = detect_followup_question(comments, report.author)
    if pick is None:
        return None, MiningNote(report.id, "question", "no follow-up question")
    triple = select_candidate_answers(comments, pick.comment, report.author)
    if not triple.all_present():
        missing = [
            slot
            for slot, c in zip(ANSWER_SLOTS, (triple.ca1, triple.ca2, triple.ca3))
            if c is None
        ]
        return None, MiningNote(
            report.id, "answers", f"missing {', '.join(missing)}"
        )
    keep, reasons = apply_quality_filters(MinedEntry(report, pick.comment, triple))
    if not keep:
        return None, MiningNote(report.id, "filters", ", ".join(reasons))
    cleaned = [clean(c.body) for c in (triple.ca1, triple.ca2, triple.ca3)]
    if not any(cleaned):
        return None, MiningNote(
            report.id, "answers", "all answers empty after cleaning"
        )
    entry = BugReport(
        id=report.id,
        repo=report.repo,
        title=clean(report.title),
        description=clean(report.description),
        author=report.author,
        created_at=report.created_at,
        closed_at=report.closed_at,
        followup_question=clean(pick.comment.body),
        ca1=cleaned[0],
        ca2=cleaned[1],
        ca3=cleaned[2],
        labels=set(report.labels),
        language_tag=report.language_tag,
    )
    problem = membership_problem(entry)
    if problem is not None:
        return None, MiningNote(report.id, "membership", problem)
    return entry, None


def mine_corpus(
    issues: list[tuple[BugReport, list[Comment]]]
) -> tuple[Corpus, list[MiningNote]]:
    entries: list[BugReport] = []
    notes: list[MiningNote] = []
    for report, comments in issues:
        entry, note = build_entry(report, comments)
        if entry is not None:
            entries.append(entry)
        else:
            notes.append(note)
            logger.info(
                "skipped issue %s at %s stage: %s",
                note.issue_id,
                note.stage,
                note.detail,
            )
    return Corpus(entries), notes


@dataclass(slots=True)
class VoteOutcome:
    status: str  # "accepted" | "needs-discussion"
    choice: str | None
    unanimous: bool


def aggregate_votes(votes: list[str]) -> VoteOutcome:
    """Majority decision over exactly three annotator choices."""
    if len(votes) != 3:
        raise ValueError(f"expected exactly 3 votes, got {len(votes)}")
    counts = Counter(votes)
    top, top_count = counts.most_common(1)[0]
    if top_count == 3:
        return VoteOutcome("accepted", top, True)
    if top_count == 2:
        return VoteOutcome("accepted", top, False)
    return VoteOutcome("needs-discussion", None, False)


def read_votes(path: str | Path) -> dict[str, list[str]]:
    """Parse the annotation CSV (issue_id, annotator, choice) per issue."""
    path = Path(path)
    votes: dict[str, list[str]] = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["issue_id", "annotator", "choice"]:
            raise ValueError(
                f"vote file must start with 'issue_id,annotator,choice', "
                f"got {header}"
            )
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"vote row needs 3 columns, got {row}")
            issue_id, _, choice = row
            votes.setdefault(issue_id, []).append(choice)
    return votes


def apply_votes(
    reports: list[BugReport], votes: dict[str, list[str]]
) -> tuple[int, list[MiningNote]]:
    """Stamp accepted gold slots onto reports; note every non-acceptance."""
    notes: list[MiningNote] = []
    stamped = 0
    by_id = {r.id: r for r in reports}
    for issue_id, choices in votes.items():
        report = by_id.get(issue_id)
        if report is None:
            notes.append(MiningNote(issue_id, "votes", "no matching entry"))
            continue
        outcome = aggregate_votes(choices)
        if outcome.status != "accepted":
            notes.append(MiningNote(issue_id, "votes", "needs discussion"))
            continue
        if outcome.choice not in ANSWER_SLOTS:
            notes.append(
                MiningNote(issue_id, "votes", f"invalid slot {outcome.choice!r}")
            )
            continue
        report.gold = outcome.choice
        stamped += 1
    return stamped, notes
