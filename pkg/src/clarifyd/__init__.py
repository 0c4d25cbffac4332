"""Recommend answers to follow-up questions on deficient bug reports.

The pipeline: ingest issue threads, mine question/answer corpus entries,
rank stored candidate answers for a new question with fielded BM25,
rerank the top list by embedding similarity, and hand the winners to a
generation backend. A metric suite scores results against gold answers.
"""

from .corpus import (
    BugReport,
    Comment,
    Corpus,
    CorpusFormatError,
    ValidationResult,
    load_corpus,
    load_corpus_report,
    load_reports,
    save_corpus,
    validate_report,
)
from .genctx import (
    Context,
    ExtractiveBackend,
    GeneratedAnswer,
    GenerationError,
    ServiceBackend,
    build_context,
    generate_answers,
)
from .metrics import (
    MetricRow,
    ServiceEmbeddingProvider,
    WmdUndefinedError,
    WordVectorProvider,
    bleu,
    evaluate_topk,
    meteor,
    semsim,
    wmd,
)
from .mine import (
    CandidateTriple,
    QuestionPick,
    VoteOutcome,
    aggregate_votes,
    apply_quality_filters,
    detect_followup_question,
    mine_corpus,
    select_candidate_answers,
)
from .rerank import (
    EmbeddingFormatError,
    EmbeddingStore,
    cosine,
    doi,
    embed_text,
    load_embeddings,
    rerank,
)
from .retrieval import (
    FieldedIndex,
    QueryBundle,
    RankedAnswer,
    build_index,
    build_query_bundle,
    rank_candidates,
    relevance_scores,
)
from .textprep import clean, lemmatize, preprocess, tokenize

__version__ = "0.1.0"

__all__ = [
    "BugReport",
    "Comment",
    "Corpus",
    "CorpusFormatError",
    "ValidationResult",
    "load_corpus",
    "load_corpus_report",
    "load_reports",
    "save_corpus",
    "validate_report",
    "Context",
    "ExtractiveBackend",
    "GeneratedAnswer",
    "GenerationError",
    "ServiceBackend",
    "build_context",
    "generate_answers",
    "MetricRow",
    "ServiceEmbeddingProvider",
    "WmdUndefinedError",
    "WordVectorProvider",
    "bleu",
    "evaluate_topk",
    "meteor",
    "semsim",
    "wmd",
    "CandidateTriple",
    "QuestionPick",
    "VoteOutcome",
    "aggregate_votes",
    "apply_quality_filters",
    "detect_followup_question",
    "mine_corpus",
    "select_candidate_answers",
    "EmbeddingFormatError",
    "EmbeddingStore",
    "cosine",
    "doi",
    "embed_text",
    "load_embeddings",
    "rerank",
    "FieldedIndex",
    "QueryBundle",
    "RankedAnswer",
    "build_index",
    "build_query_bundle",
    "rank_candidates",
    "relevance_scores",
    "clean",
    "lemmatize",
    "preprocess",
    "tokenize",
    "__version__",
]
