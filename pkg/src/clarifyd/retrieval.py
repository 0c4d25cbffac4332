"""Fielded BM25 index and candidate-answer relevance ranking.

Every corpus entry contributes eight searchable fields: title, description,
question, the title+description and title+description+question composites,
and the three candidate answers. A deficient report queries with five
component token lists (same composites, no answers), and each stored answer
is scored by summing component-vs-field BM25 over the full grid.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ANSWER_SLOTS, BugReport, Corpus
from .textprep import preprocess

K1 = 1.2
B = 0.75

QUERY_FIELDS = ("t", "d", "q", "td", "tdq")
FIELDS = QUERY_FIELDS + ANSWER_SLOTS
AGGREGATES = ("algorithm1", "algorithm1-normalized", "pairwise")
# Ranked-list sizes the downstream density statistic is calibrated for.
ALLOWED_LIST_SIZES = (10, 20, 25, 30, 50)


def entry_field_text(report: BugReport, field_name: str) -> str:
    if field_name == "t":
        return report.title
    if field_name == "d":
        return report.description
    if field_name == "q":
        return report.followup_question or ""
    if field_name == "td":
        return f"{report.title} {report.description}"
    if field_name == "tdq":
        return f"{report.title} {report.description} {report.followup_question or ''}"
    if field_name in ANSWER_SLOTS:
        return report.answer(field_name) or ""
    raise ValueError(f"unknown field: {field_name!r}")


@dataclass(slots=True)
class QueryBundle:
    """The five query-side token lists drawn from a deficient report."""

    components: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if len(self.components) != len(QUERY_FIELDS):
            raise ValueError(
                f"bundle needs {len(QUERY_FIELDS)} components, "
                f"got {len(self.components)}"
            )


def build_query_bundle(report: BugReport) -> QueryBundle:
    return QueryBundle(
        tuple(
            tuple(preprocess(entry_field_text(report, name)))
            for name in QUERY_FIELDS
        )
    )


class FieldedIndex:
    """Per-field BM25 statistics over a corpus, plus the entries themselves."""

    def __init__(self, corpus: Corpus):
        self.entry_ids: list[str] = [e.id for e in corpus.entries]
        self.entries: dict[str, BugReport] = {e.id: e for e in corpus.entries}
        self.n_entries: int = len(corpus.entries)
        self._tf: dict[str, dict[str, Counter]] = {f: {} for f in FIELDS}
        self._len: dict[str, dict[str, int]] = {f: {} for f in FIELDS}
        self._df: dict[str, Counter] = {f: Counter() for f in FIELDS}
        self._avg: dict[str, float] = {}
        for report in corpus.entries:
            for field_name in FIELDS:
                tokens = preprocess(entry_field_text(report, field_name))
                counts = Counter(tokens)
                self._tf[field_name][report.id] = counts
                self._len[field_name][report.id] = len(tokens)
                for token in counts:
                    self._df[field_name][token] += 1
        for field_name in FIELDS:
            total = sum(self._len[field_name].values())
            self._avg[field_name] = (
                total / self.n_entries if self.n_entries else 0.0
            )

    def idf(self, token: str, field_name: str) -> float:
        df = self._df[field_name][token]
        n = self.n_entries
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def lucene_score(
        self, query_tokens, entry_id: str, field_name: str
    ) -> float:
        """BM25 of a token list against one entry's field.

        Query tokens contribute per occurrence: a token repeated in the
        query adds its term weight once per repeat.
        """
        tf_map = self._tf[field_name][entry_id]
        score = 0.0
        for token in query_tokens:
            tf = tf_map.get(token, 0)
            if tf == 0:
                continue
            # tf > 0 implies field length > 0 implies avg > 0.
            norm = K1 * (
                1.0
                - B
                + B * self._len[field_name][entry_id] / self._avg[field_name]
            )
            score += self.idf(token, field_name) * (tf * (K1 + 1.0)) / (tf + norm)
        return score


def build_index(corpus: Corpus) -> FieldedIndex:
    return FieldedIndex(corpus)


def relevance_scores(
    index: FieldedIndex,
    bundle: QueryBundle,
    entry_id: str,
    *,
    aggregate: str = "algorithm1",
) -> dict[str, float]:
    """Score the entry's three candidate answers against the query bundle.

    Returns a slot -> score mapping. The default aggregate walks the full
    5x5 component-field grid and adds the component-vs-answer term inside
    the inner loop, so each answer term accumulates once per grid cell.
    """
    if aggregate not in AGGREGATES:
        raise ValueError(f"unknown aggregate: {aggregate!r}")
    if aggregate == "pairwise":
        return _pairwise_scores(index, bundle, entry_id)

    components = bundle.components
    grid = [
        [
            index.lucene_score(components[i], entry_id, FIELDS[j])
            for j in range(len(QUERY_FIELDS))
        ]
        for i in range(len(components))
    ]
    answer_terms = {
        slot: [
            index.lucene_score(components[i], entry_id, slot)
            for i in range(len(components))
        ]
        for slot in ANSWER_SLOTS
    }
    scores: dict[str, float] = {}
    for slot in ANSWER_SLOTS:
        total = 0.0
        if aggregate == "algorithm1":
            for i in range(len(components)):
                for j in range(len(QUERY_FIELDS)):
                    total = total + grid[i][j] + answer_terms[slot][i]
        else:  # algorithm1-normalized
            for i in range(len(components)):
                for j in range(len(QUERY_FIELDS)):
                    total = total + grid[i][j]
                total = total + answer_terms[slot][i]
        scores[slot] = total
    return scores


# Component set for the pairwise aggregate: composites only, no lone question.
_PAIRWISE = ("t", "d", "td", "tdq")


def _pairwise_scores(
    index: FieldedIndex, bundle: QueryBundle, entry_id: str
) -> dict[str, float]:
    """Alternative aggregate: unordered component pairs, both directions,
    plus one query-component-vs-answer term per component."""
    by_name = dict(zip(QUERY_FIELDS, bundle.components))
    names = _PAIRWISE
    scores: dict[str, float] = {}
    for slot in ANSWER_SLOTS:
        total = 0.0
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                total = total + index.lucene_score(
                    by_name[names[i]], entry_id, names[j]
                )
                total = total + index.lucene_score(
                    by_name[names[j]], entry_id, names[i]
                )
        for name in names:
            total = total + index.lucene_score(by_name[name], entry_id, slot)
        scores[slot] = total
    return scores


@dataclass(slots=True)
class RankedAnswer:
    """One candidate answer with its relevance placement.

    embed_sim and doi stay None until the re-ranking stage fills them.
    """

    entry_id: str
    slot: str
    answer: str
    relevance_score: float
    relevance_rank: int
    embed_sim: float | None = None
    doi: float | None = None


def rank_candidates(
    index: FieldedIndex,
    bundle: QueryBundle,
    n: int,
    *,
    aggregate: str = "algorithm1",
    allow_any_n: bool = False,
) -> list[RankedAnswer]:
    """Rank every stored candidate answer and keep the top n.

    Ties break by entry id then slot so ranking is a pure function of the
    corpus. Ranks are 1-based positions in the truncated list.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if n not in ALLOWED_LIST_SIZES and not allow_any_n:
        raise ValueError(
            f"list size {n} not in {ALLOWED_LIST_SIZES}; "
            "pass allow_any_n=True to override"
        )
    pool: list[RankedAnswer] = []
    for entry_id in index.entry_ids:
        scores = relevance_scores(index, bundle, entry_id, aggregate=aggregate)
        entry = index.entries[entry_id]
        for slot in ANSWER_SLOTS:
            pool.append(
                RankedAnswer(
                    entry_id=entry_id,
                    slot=slot,
                    answer=entry.answer(slot) or "",
                    relevance_score=scores[slot],
                    relevance_rank=0,
                )
            )
    pool.sort(key=lambda a: (-a.relevance_score, a.entry_id, a.slot))
    top = pool[:n]
    for position, ranked in enumerate(top, start=1):
        ranked.relevance_rank = position
    return top


def index_snapshot(index: FieldedIndex) -> dict:
    """Plain-data view of the index statistics, stable across runs."""
    return {
        "n_entries": index.n_entries,
        "entry_ids": list(index.entry_ids),
        "fields": {
            f: {
                "avg_len": index._avg[f],
                "df": dict(sorted(index._df[f].items())),
                "lengths": {
                    eid: index._len[f][eid] for eid in index.entry_ids
                },
                "tf": {
                    eid: dict(sorted(index._tf[f][eid].items()))
                    for eid in index.entry_ids
                },
            }
            for f in FIELDS
        },
    }


def save_index(index: FieldedIndex, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(
            index_snapshot(index),
            ensure_ascii=False,
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n",
        encoding="utf-8",
    )


def index_from_snapshot(snapshot: dict, corpus: Corpus) -> FieldedIndex:
    """Rebuild an index for a corpus, verifying it matches the snapshot."""
    ids = [e.id for e in corpus.entries]
    if snapshot.get("entry_ids") != ids:
        raise ValueError("index snapshot does not match the corpus")
    index = FieldedIndex(corpus)
    stored = snapshot.get("fields", {})
    for f in FIELDS:
        if f not in stored:
            raise ValueError(f"index snapshot missing field {f!r}")
        if stored[f]["df"] != {
            k: v for k, v in sorted(index._df[f].items())
        }:
            raise ValueError(f"index snapshot stale for field {f!r}")
    return index
