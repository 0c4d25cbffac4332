"""Answer-quality metrics: n-gram overlap, alignment, transport, embedding.

All four metrics compare a generated answer against the accepted gold
answer. Token inputs come from tokenize(clean(text)); lemmatization is a
metric-internal concern (the alignment metric applies it in its second
matching stage).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import requests
from scipy.optimize import linprog

from .rerank import EmbeddingStore, cosine, embed_text
from .textprep import clean, lemmatize, preprocess, tokenize


def _ngrams(tokens, n: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )


def bleu(candidate_tokens, reference_tokens, max_n: int = 4) -> float:
    """Smoothed corpus-free BLEU on a single pair, scaled to [0, 100].

    Every order's precision is add-one smoothed, so short candidates score
    low rather than zero. An empty candidate is 0.0 outright.
    """
    candidate = list(candidate_tokens)
    reference = list(reference_tokens)
    if not candidate:
        return 0.0
    log_sum = 0.0
    weight = 1.0 / max_n
    for n in range(1, max_n + 1):
        cand_grams = _ngrams(candidate, n)
        ref_grams = _ngrams(reference, n)
        total = sum(cand_grams.values())
        clipped = sum(
            min(count, ref_grams[gram]) for gram, count in cand_grams.items()
        )
        log_sum += weight * math.log((clipped + 1) / (total + 1))
    c = len(candidate)
    r = len(reference)
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * brevity * math.exp(log_sum)


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Two-stage leftmost alignment: exact surface first, then lemma.

    Returns matched (candidate_pos, reference_pos) pairs in candidate order.
    """
    matched_ref: set[int] = set()
    pairs: dict[int, int] = {}
    for ci, token in enumerate(candidate):
        for ri, ref_token in enumerate(reference):
            if ri in matched_ref:
                continue
            if token == ref_token:
                pairs[ci] = ri
                matched_ref.add(ri)
                break
    cand_lemmas = lemmatize(candidate)
    ref_lemmas = lemmatize(reference)
    for ci, lemma in enumerate(cand_lemmas):
        if ci in pairs:
            continue
        for ri, ref_lemma in enumerate(ref_lemmas):
            if ri in matched_ref:
                continue
            if lemma == ref_lemma:
                pairs[ci] = ri
                matched_ref.add(ri)
                break
    return sorted(pairs.items())


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or not (ci == prev[0] + 1 and ri == prev[1] + 1):
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(candidate_tokens, reference_tokens) -> float:
    """Unigram alignment score in [0, 1]: recall-weighted harmonic mean of
    precision and recall, discounted by a fragmentation penalty."""
    candidate = list(candidate_tokens)
    reference = list(reference_tokens)
    if not candidate or not reference:
        return 0.0
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = (precision * recall) / (0.9 * precision + 0.1 * recall)
    chunks = _chunk_count(pairs)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


class WmdUndefinedError(ValueError):
    """Raised when a side has no in-vocabulary tokens to give mass to."""


def _distribution(tokens, store: EmbeddingStore):
    counts = Counter(t for t in tokens if t in store)
    if not counts:
        raise WmdUndefinedError("no in-vocabulary tokens")
    total = sum(counts.values())
    items = sorted(counts.items())
    weights = [Fraction(c, total) for _, c in items]
    return [t for t, _ in items], weights


def wmd(
    candidate_tokens,
    reference_tokens,
    store: EmbeddingStore,
    *,
    relaxed: bool = False,
) -> float:
    """Minimum-cost transport between the two bag-of-words distributions.

    Word mass is the normalized in-vocabulary token count; ground cost is
    Euclidean distance between word vectors. With relaxed=True, returns the
    cheaper-to-compute lower bound (each side ships every word to its
    nearest counterpart; the larger of the two totals).
    """
    cand_words, cand_weights = _distribution(candidate_tokens, store)
    ref_words, ref_weights = _distribution(reference_tokens, store)
    if cand_words == ref_words and cand_weights == ref_weights:
        return 0.0
    cost = np.zeros((len(cand_words), len(ref_words)), dtype=np.float64)
    for i, cw in enumerate(cand_words):
        for j, rw in enumerate(ref_words):
            cost[i, j] = float(np.linalg.norm(store.get(cw) - store.get(rw)))
    cand_mass = np.array([float(w) for w in cand_weights])
    ref_mass = np.array([float(w) for w in ref_weights])
    if relaxed:
        lower_cand = float(np.dot(cand_mass, cost.min(axis=1)))
        lower_ref = float(np.dot(ref_mass, cost.min(axis=0)))
        return max(0.0, max(lower_cand, lower_ref))
    n_c, n_r = len(cand_words), len(ref_words)
    # Flatten T[i, j] row-major; equality rows: per-i outflow, per-j inflow.
    a_eq = np.zeros((n_c + n_r, n_c * n_r))
    for i in range(n_c):
        a_eq[i, i * n_r : (i + 1) * n_r] = 1.0
    for j in range(n_r):
        a_eq[n_c + j, j::n_r] = 1.0
    b_eq = np.concatenate([cand_mass, ref_mass])
    result = linprog(
        cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs"
    )
    if not result.success:
        raise RuntimeError(f"transport solve failed: {result.message}")
    return max(0.0, float(result.fun))


class WordVectorProvider:
    """Sentence embedding by mean-pooling stored word vectors."""

    tag = "word-vectors"

    def __init__(self, store: EmbeddingStore):
        self._store = store

    def embed(self, text: str) -> np.ndarray:
        return embed_text(preprocess(text), self._store)


class ServiceEmbeddingProvider:
    """Sentence embedding fetched from the generation service's /embed."""

    def __init__(self, base_url: str, *, timeout: float = 30.0, session=None):
        self._base = base_url.rstrip("/")
        self._timeout = timeout
        self._session = session if session is not None else requests.Session()
        self.tag = f"service:{self._base}"

    def embed(self, text: str) -> np.ndarray:
        response = self._session.post(
            f"{self._base}/embed", json={"texts": [text]}, timeout=self._timeout
        )
        response.raise_for_status()
        payload = response.json()
        return np.asarray(payload["vectors"][0], dtype=np.float64)


def semsim(candidate_text: str, reference_text: str, provider) -> float:
    """Embedding cosine between whole texts, scaled to [-100, 100]."""
    return 100.0 * cosine(
        provider.embed(candidate_text), provider.embed(reference_text)
    )


def metric_tokens(text: str) -> list[str]:
    return tokenize(clean(text)).tokens


@dataclass(slots=True)
class MetricRow:
    """Best-of-K metric outcomes for one evaluated question."""

    query_id: str
    k: int
    bleu: float
    meteor: float
    semsim: float
    wmd: float | None


def evaluate_topk(
    generated: list[str],
    gold: str,
    k: int,
    *,
    store: EmbeddingStore,
    provider,
    query_id: str = "",
) -> MetricRow:
    """Score the best of the first k generated answers against the gold.

    Overlap and embedding metrics take the maximum across candidates;
    transport cost takes the minimum. Candidates whose transport cost is
    undefined are skipped for that metric only; if none is defined the
    row's wmd is None.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if not generated:
        raise ValueError("no generated answers to evaluate")
    pool = generated[:k]
    gold_tokens = metric_tokens(gold)
    best_bleu = 0.0
    best_meteor = 0.0
    best_semsim = -100.0
    best_wmd: float | None = None
    for text in pool:
        cand_tokens = metric_tokens(text)
        best_bleu = max(best_bleu, bleu(cand_tokens, gold_tokens))
        best_meteor = max(best_meteor, meteor(cand_tokens, gold_tokens))
        best_semsim = max(best_semsim, semsim(text, gold, provider))
        try:
            distance = wmd(cand_tokens, gold_tokens, store)
        except WmdUndefinedError:
            continue
        if best_wmd is None or distance < best_wmd:
            best_wmd = distance
    return MetricRow(
        query_id=query_id,
        k=k,
        bleu=best_bleu,
        meteor=best_meteor,
        semsim=best_semsim,
        wmd=best_wmd,
    )
