"""Word-vector store and similarity re-ranking of retrieved answers.

The relevance stage orders answers lexically; this stage reorders the top
list by embedding cosine against the question, using each answer's original
depth in the list (rank over list size) to settle near-ties.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .retrieval import RankedAnswer
from .textprep import preprocess

DEFAULT_SIM_TOLERANCE = 1e-6


class EmbeddingFormatError(ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class EmbeddingStore:
    """Token -> vector map parsed from the plain-text word2vec layout:
    a 'count dim' header line, then one 'token v1 ... vdim' row per token.
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        self.dim = dim
        self._vectors = vectors

    def get(self, token: str) -> np.ndarray | None:
        return self._vectors.get(token)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)


def load_embeddings(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    declared = None
    dim = None
    vectors: dict[str, np.ndarray] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if line_number == 1:
                if len(parts) != 2:
                    raise EmbeddingFormatError(
                        f"line 1: header must be 'count dim', got {line.strip()!r}",
                        1,
                    )
                try:
                    declared, dim = int(parts[0]), int(parts[1])
                except ValueError as exc:
                    raise EmbeddingFormatError(
                        f"line 1: non-integer header: {line.strip()!r}", 1
                    ) from exc
                if declared < 0 or dim < 1:
                    raise EmbeddingFormatError(
                        f"line 1: invalid header values {declared} {dim}", 1
                    )
                continue
            if declared is None:
                raise EmbeddingFormatError("missing header line", 1)
            if len(parts) != 1 + dim:
                raise EmbeddingFormatError(
                    f"line {line_number}: expected token plus {dim} values, "
                    f"got {len(parts) - 1}",
                    line_number,
                )
            token = parts[0]
            if token in vectors:
                raise EmbeddingFormatError(
                    f"line {line_number}: duplicate token {token!r}",
                    line_number,
                )
            try:
                vectors[token] = np.array(
                    [float(x) for x in parts[1:]], dtype=np.float64
                )
            except ValueError as exc:
                raise EmbeddingFormatError(
                    f"line {line_number}: non-numeric value in vector",
                    line_number,
                ) from exc
    if declared is None:
        raise EmbeddingFormatError("empty embeddings file", 1)
    if len(vectors) != declared:
        raise EmbeddingFormatError(
            f"header declares {declared} vectors, file holds {len(vectors)}"
        )
    return EmbeddingStore(dim, vectors)


def embed_text(tokens, store: EmbeddingStore) -> np.ndarray:
    """Mean of in-vocabulary token vectors; zero vector when none match."""
    found = [store.get(t) for t in tokens]
    found = [v for v in found if v is not None]
    if not found:
        return np.zeros(store.dim, dtype=np.float64)
    return np.mean(found, axis=0)


def cosine(u, v) -> float:
    """Cosine similarity with exact-equality fast path and [-1, 1] clamp.

    Mismatched dimensions are an error; a zero vector on either side
    yields 0.0 rather than NaN.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if np.array_equal(u, v):
        return 0.0 if not np.any(u) else 1.0
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    value = float(np.dot(u, v) / (nu * nv))
    return max(-1.0, min(1.0, value))


def doi(position: int, list_size: int) -> float:
    """Depth of a 1-based rank within a list: rank over size, in (0, 1]."""
    if list_size < 1:
        raise ValueError(f"list size must be positive, got {list_size}")
    if not 1 <= position <= list_size:
        raise ValueError(
            f"position {position} outside 1..{list_size}"
        )
    return position / list_size


def rerank(
    ranked: list[RankedAnswer],
    question_tokens,
    store: EmbeddingStore,
    *,
    sim_tolerance: float = DEFAULT_SIM_TOLERANCE,
) -> list[RankedAnswer]:
    """Reorder by cosine to the question, breaking near-ties by list depth.

    After the similarity sort, each run of answers whose similarity sits
    within sim_tolerance of the run's top answer is re-sorted by depth
    ascending, so an answer that was already ranked higher wins the tie.
    Input objects are not modified.
    """
    if not ranked:
        return []
    size = len(ranked)
    question_vec = embed_text(question_tokens, store)
    enriched = [
        replace(
            answer,
            embed_sim=cosine(
                embed_text(preprocess(answer.answer), store), question_vec
            ),
            doi=doi(answer.relevance_rank, size),
        )
        for answer in ranked
    ]
    enriched.sort(key=lambda a: (-a.embed_sim, a.doi))
    reordered: list[RankedAnswer] = []
    start = 0
    while start < len(enriched):
        anchor = enriched[start].embed_sim
        stop = start + 1
        while (
            stop < len(enriched)
            and anchor - enriched[stop].embed_sim <= sim_tolerance
        ):
            stop += 1
        group = sorted(enriched[start:stop], key=lambda a: a.doi)
        reordered.extend(group)
        start = stop
    return reordered
