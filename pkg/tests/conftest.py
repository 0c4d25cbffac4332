"""Shared test fixtures and builders."""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest

from clarifyd.corpus import BugReport, Comment, Corpus
from clarifyd.rerank import EmbeddingStore

T0 = datetime(2024, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def make_report(
    rid: str,
    *,
    title: str = "a title",
    description: str = "a description",
    question: str | None = "what version is this?",
    ca1: str | None = "version one",
    ca2: str | None = "try version two",
    ca3: str | None = "the latest version",
    repo: str = "acme/widget",
    author: str = "reporter",
    labels: set[str] | None = None,
    language_tag: str = "Python",
    gold: str | None = None,
    created_at: datetime = T0,
    closed_at: datetime | None = None,
) -> BugReport:
    return BugReport(
        id=rid,
        repo=repo,
        title=title,
        description=description,
        author=author,
        created_at=created_at,
        closed_at=closed_at,
        followup_question=question,
        ca1=ca1,
        ca2=ca2,
        ca3=ca3,
        labels=labels if labels is not None else {"bug"},
        language_tag=language_tag,
        gold=gold,
    )


def make_comment(
    cid: str,
    author: str,
    body: str,
    *,
    issue_id: str = "acme/widget#1",
    minute: int = 0,
) -> Comment:
    return Comment(
        comment_id=cid,
        issue_id=issue_id,
        author=author,
        body=body,
        time=T0.replace(minute=minute % 60, hour=12 + minute // 60),
    )


def write_embeddings(path: Path, vectors: dict[str, list[float]]) -> Path:
    dim = len(next(iter(vectors.values())))
    lines = [f"{len(vectors)} {dim}"]
    for token, vec in vectors.items():
        lines.append(token + " " + " ".join(repr(x) for x in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def store_from(vectors: dict[str, list[float]]) -> EmbeddingStore:
    dim = len(next(iter(vectors.values())))
    return EmbeddingStore(
        dim, {t: np.array(v, dtype=np.float64) for t, v in vectors.items()}
    )


# ---------------------------------------------------------------------
# Planted retrieval fixture: 50 entries, 10 queries with known gold
# answers, plus lexical decoys for the first four queries whose answers
# share surface words with the query but point nowhere semantically.
# ---------------------------------------------------------------------

N_QUERIES = 10
N_DECOYS = 4
FIXTURE_DIM = 11


def _one_hot(i: int) -> list[float]:
    vec = [0.0] * FIXTURE_DIM
    vec[i] = 1.0
    return vec


def fixture_vectors() -> dict[str, list[float]]:
    vectors: dict[str, list[float]] = {}
    for i in range(1, N_QUERIES + 1):
        vectors[f"zeta{i}"] = _one_hot(i - 1)
        vectors[f"gamma{i}"] = _one_hot(i - 1)
    vectors["noisetok"] = _one_hot(FIXTURE_DIM - 1)
    return vectors


def planted_entry(i: int) -> BugReport:
    return make_report(
        f"E{i:02d}",
        title=f"alpha{i} failure zeta{i}",
        description=f"beta{i} broken zeta{i} pipeline",
        question=f"what zeta{i} configuration should gamma{i} use",
        ca1=f"set zeta{i} gamma{i} flag to resolve",
        ca2="thanks will try that",
        ca3=f"maybe check gamma{i} docs",
    )


def decoy_entry(i: int) -> BugReport:
    return make_report(
        f"E{40 + i}",
        title=f"alpha{i} failure zeta{i} zeta{i}",
        description=f"beta{i} broken zeta{i} zeta{i} zeta{i} pipeline",
        question=f"what zeta{i} zeta{i} configuration should zeta{i} use",
        ca1=(
            f"alpha{i} beta{i} failure broken pipeline configuration "
            "noisetok patch"
        ),
        ca2="noisetok workaround maybe",
        ca3="noisetok details attached",
    )


def background_entry(i: int) -> BugReport:
    return make_report(
        f"E{i:02d}",
        title=f"build error case {i}",
        description=f"the build fails with error code {i}",
        question="can you share the log file please",
        ca1=f"attached the log file {i}",
        ca2="see the build log",
        ca3="uploaded the logs here",
    )


def planted_corpus() -> Corpus:
    entries = [planted_entry(i) for i in range(1, N_QUERIES + 1)]
    entries += [background_entry(i) for i in range(11, 41)]
    entries += [decoy_entry(i) for i in range(1, N_DECOYS + 1)]
    entries += [background_entry(i) for i in range(45, 51)]
    return Corpus(entries)


def planted_queries() -> list[BugReport]:
    return [
        make_report(
            f"Q{i:02d}",
            title=f"alpha{i} failure zeta{i}",
            description=f"beta{i} broken zeta{i} pipeline",
            question=f"what zeta{i} configuration should gamma{i} use",
            gold="ca1",
        )
        for i in range(1, N_QUERIES + 1)
    ]


def gold_text(i: int) -> str:
    return f"set zeta{i} gamma{i} flag to resolve"


@pytest.fixture(scope="session")
def planted():
    """(corpus, queries, store) for the retrieval quality checks."""
    return planted_corpus(), planted_queries(), store_from(fixture_vectors())


# ---------------------------------------------------------------------
# Mining fixture: twelve issue threads covering every accept and skip
# path. M01-M03 yield entries; M04-M12 exercise one skip reason each.
# ---------------------------------------------------------------------

_LONG_FENCE = "```\n" + "\n".join(f"x{i}" for i in range(1, 12)) + "\n```"
_TRACE = (
    "Traceback (most recent call last):\n"
    '  File "app.py", line 3, in run\n'
    "ValueError: boom"
)


def _raw_report(rid: str, **overrides) -> BugReport:
    defaults = dict(question=None, ca1=None, ca2=None, ca3=None)
    defaults.update(overrides)
    return make_report(rid, **defaults)


def mining_threads() -> list[tuple[BugReport, list[Comment]]]:
    def c(rid, n, author, body):
        return make_comment(
            f"{rid}-c{n}", author, body, issue_id=rid, minute=n
        )

    threads = [
        ("M01", {}, [
            ("reporter", "I hit this too"),
            ("dev", "What version are you running?"),
            ("helper", "Probably version two"),
            ("reporter", "I am on version three"),
        ]),
        ("M02", {}, [
            ("reporter", "config seems off"),
            ("dev", "Please attach the config file?"),
            ("helper", "Here is a workaround for now"),
            ("reporter", "Config attached now"),
        ]),
        ("M03", {}, [
            ("dev", "Could you post the full log."),
            ("helper", "try verbose mode"),
            ("reporter", "log posted above"),
        ]),
        ("M04", {}, [
            ("reporter", "What should I do here?"),
            ("dev", "that looks broken to me"),
            ("dev", "agreed"),
        ]),
        ("M05", {}, [
            ("reporter", "still failing after update"),
            ("dev", "Which compiler version is this?"),
        ]),
        ("M06", {}, [
            ("dev", "What platform is this on?"),
            ("helper", "that platform is windows only"),
        ]),
        ("M07", {}, [
            ("dev", "Could you paste the error output?"),
            ("helper", _TRACE),
            ("reporter", "the error happens on startup"),
        ]),
        ("M08", {}, [
            ("dev", "Can you run this snippet?\n" + _LONG_FENCE),
            ("helper", "sure trying now"),
            ("reporter", "ran the snippet same crash"),
        ]),
        ("M09", {}, [
            ("dev", "Which browser did you use?"),
            ("helper", "![screen](https://img.example/s.png) looks like this"),
            ("reporter", "the browser is chrome"),
        ]),
        ("M10", {}, [
            ("dev", "When does the crash occur?"),
            ("helper",
             '<video src="https://files.example/demo.mp4"></video>'
             " recording attached"),
            ("reporter", "the crash occurs on save"),
        ]),
        ("M11", {}, [
            ("dev", "Could you share reproduction steps?"),
            ("helper", "https://gist.example/abc123"),
            ("reporter", "https://gist.example/def456"),
        ]),
        ("M12", {"title": "https://only.example/title"}, [
            ("dev", "Why does it fail?"),
            ("helper", "it will fail because of cache"),
            ("reporter", "rebooted and it failed again"),
        ]),
    ]
    return [
        (
            _raw_report(rid, **overrides),
            [c(rid, n, author, body)
             for n, (author, body) in enumerate(comments, start=1)],
        )
        for rid, overrides, comments in threads
    ]
