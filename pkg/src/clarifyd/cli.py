"""Command-line pipeline: ingest, mine, index, ask, evaluate."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import (
    BACKENDS,
    Settings,
    SettingsError,
    apply_overrides,
    artifact_lock,
    load_settings,
    stage,
    validate_settings,
)
from .corpus import (
    BugReport,
    Corpus,
    CorpusFormatError,
    load_corpus_report,
    load_reports,
    save_corpus,
)
from .genctx import (
    ExtractiveBackend,
    GenerationError,
    ServiceBackend,
    build_context,
    generate_answers,
)
from .ingest import (
    FetchSpec,
    FixtureTransport,
    HttpTransport,
    IngestError,
    IssueClient,
    load_threads,
    save_threads,
)
from .metrics import WordVectorProvider, evaluate_topk
from .mine import apply_votes, mine_corpus, read_votes
from .rerank import EmbeddingFormatError, load_embeddings, rerank
from .retrieval import (
    build_index,
    build_query_bundle,
    rank_candidates,
    save_index,
)
from .textprep import preprocess

_HANDLED = (
    SettingsError,
    CorpusFormatError,
    EmbeddingFormatError,
    IngestError,
    GenerationError,
    ValueError,
    OSError,
)

EVAL_KS = (1, 3, 5)


def _settings(config, **overrides) -> Settings:
    settings = load_settings(config)
    return apply_overrides(settings, **overrides)


def _dump(payload) -> str:
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


@click.group()
def main():
    """Recommend follow-up answers for deficient bug reports."""
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="[clarifyd] %(levelname)s %(message)s",
    )


@main.command("ingest")
@click.option("--config", type=click.Path(), default=None)
@click.option("--repo", required=True, help="owner/name repository slug")
@click.option("--labels", default="", help="comma-separated label filter (OR)")
@click.option("--max-issues", type=int, default=None)
@click.option("--lang", default="other", help="language tag for fetched issues")
@click.option(
    "--fixture-root",
    type=click.Path(),
    default=None,
    help="replay API responses from this directory instead of the network",
)
@click.option("--out", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def cmd_ingest(config, repo, labels, max_issues, lang, fixture_root, out, as_json):
    """Fetch issue threads from a repository into a JSONL file."""
    try:
        settings = _settings(config)
        if fixture_root is not None:
            transport = FixtureTransport(fixture_root)
        else:
            transport = HttpTransport(token=settings.token)
        client = IssueClient(transport)
        label_tuple = tuple(
            part.strip() for part in labels.split(",") if part.strip()
        )
        spec = FetchSpec(
            repo=repo,
            labels=label_tuple,
            max_issues=max_issues,
            language_tag=lang,
        )
        with stage("fetch"):
            threads = client.fetch_threads(spec)
        with stage("write"), artifact_lock(out):
            save_threads(threads, out)
    except _HANDLED as exc:
        raise click.ClickException(str(exc)) from exc
    summary = {
        "threads": len(threads),
        "comments": sum(len(c) for _, c in threads),
        "out": str(out),
    }
    click.echo(_dump(summary) if as_json else f"fetched {len(threads)} threads")


@main.command("mine")
@click.option("--config", type=click.Path(), default=None)
@click.option("--threads", "threads_path", type=click.Path(), required=True)
@click.option("--votes", "votes_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def cmd_mine(config, threads_path, votes_path, out, as_json):
    """Mine corpus entries out of fetched issue threads."""
    try:
        _settings(config)
        with stage("load-threads"):
            threads = load_threads(threads_path)
        with stage("mine"):
            corpus, notes = mine_corpus(threads)
        stamped = 0
        if votes_path is not None:
            votes = read_votes(votes_path)
            stamped, vote_notes = apply_votes(corpus.entries, votes)
            notes.extend(vote_notes)
        with stage("write"), artifact_lock(out):
            save_corpus(corpus, out)
    except _HANDLED as exc:
        raise click.ClickException(str(exc)) from exc
    summary = {
        "entries": len(corpus),
        "skipped": len(notes),
        "gold_stamped": stamped,
        "skips": [
            {"issue_id": n.issue_id, "stage": n.stage, "detail": n.detail}
            for n in notes
        ],
        "out": str(out),
    }
    click.echo(
        _dump(summary)
        if as_json
        else f"mined {len(corpus)} entries ({len(notes)} skipped)"
    )


@main.command("index")
@click.option("--config", type=click.Path(), default=None)
@click.option("--corpus", "corpus_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def cmd_index(config, corpus_path, out, as_json):
    """Build the fielded index and write its statistics snapshot."""
    try:
        settings = _settings(config, corpus_path=corpus_path)
        validate_settings(settings, need_corpus=True)
        with stage("load-corpus"):
            corpus, drops = load_corpus_report(settings.corpus_path)
        with stage("index"):
            index = build_index(corpus)
        with stage("write"), artifact_lock(out):
            save_index(index, out)
    except _HANDLED as exc:
        raise click.ClickException(str(exc)) from exc
    summary = {
        "entries": index.n_entries,
        "dropped_records": len(drops),
        "out": str(out),
    }
    click.echo(
        _dump(summary) if as_json else f"indexed {index.n_entries} entries"
    )


def _load_deficient(report_path: str) -> BugReport:
    reports = load_reports(report_path)
    if not reports:
        raise ValueError(f"no report found in {report_path}")
    report = reports[0]
    if not (report.followup_question or "").strip():
        raise ValueError(
            f"report {report.id!r} carries no follow-up question to answer"
        )
    return report


def _pipeline(settings: Settings, corpus: Corpus, deficient: BugReport):
    """Shared rank -> rerank -> generate flow; returns (reranked, answers)."""
    index = build_index(corpus)
    bundle = build_query_bundle(deficient)
    with stage("rank"):
        top = rank_candidates(
            index,
            bundle,
            settings.n,
            aggregate=settings.aggregate,
            allow_any_n=settings.allow_any_n,
        )
    store = load_embeddings(settings.embeddings_path)
    with stage("rerank"):
        reranked = rerank(
            top,
            preprocess(deficient.followup_question),
            store,
            sim_tolerance=settings.sim_tolerance,
        )
    top_k = reranked[: settings.k]
    contexts = [
        build_context(
            settings.context_mode,
            deficient,
            answer,
            index.entries[answer.entry_id],
            settings.max_context_chars,
        )
        for answer in top_k
    ]
    if settings.backend == "service":
        backend = ServiceBackend(settings.service_url)
    else:
        backend = ExtractiveBackend()
    with stage("generate"):
        answers = generate_answers(
            deficient.followup_question, contexts, backend, settings.k
        )
    return reranked, answers


_shared_options = [
    click.option("--config", type=click.Path(), default=None),
    click.option("--corpus", "corpus_path", type=click.Path(), default=None),
    click.option(
        "--embeddings", "embeddings_path", type=click.Path(), default=None
    ),
    click.option("--n", type=int, default=None),
    click.option("--k", type=int, default=None),
    click.option(
        "--context-mode",
        "context_mode",
        type=click.Choice(["1", "2"]),
        default=None,
    ),
    click.option(
        "--backend", type=click.Choice(list(BACKENDS)), default=None
    ),
    click.option("--service-url", "service_url", default=None),
    click.option("--json", "as_json", is_flag=True, default=False),
]


def _with_shared(command):
    for option in reversed(_shared_options):
        command = option(command)
    return command


@main.command("ask")
@click.argument("report_path", type=click.Path())
@_with_shared
def cmd_ask(
    report_path,
    config,
    corpus_path,
    embeddings_path,
    n,
    k,
    context_mode,
    backend,
    service_url,
    as_json,
):
    """Recommend answers for the follow-up question on one report."""
    try:
        settings = _settings(
            config,
            corpus_path=corpus_path,
            embeddings_path=embeddings_path,
            n=n,
            k=k,
            context_mode=int(context_mode) if context_mode else None,
            backend=backend,
            service_url=service_url,
        )
        validate_settings(settings, need_corpus=True, need_embeddings=True)
        deficient = _load_deficient(report_path)
        with stage("load-corpus"):
            corpus, _ = load_corpus_report(settings.corpus_path)
        if not corpus.entries:
            raise ValueError(f"corpus {settings.corpus_path} is empty")
        reranked, answers = _pipeline(settings, corpus, deficient)
    except _HANDLED as exc:
        raise click.ClickException(str(exc)) from exc
    by_position = {
        (r.entry_id, r.slot): i + 1 for i, r in enumerate(reranked)
    }
    if as_json:
        payload = {
            "question": deficient.followup_question,
            "n": settings.n,
            "k": settings.k,
            "answers": [
                {
                    "rank": i + 1,
                    "text": a.text,
                    "entry_id": a.entry_id,
                    "slot": a.slot,
                    "backend": a.backend_tag,
                }
                for i, a in enumerate(answers)
            ],
        }
        click.echo(_dump(payload))
    else:
        click.echo(f"question: {deficient.followup_question}")
        for i, a in enumerate(answers, start=1):
            click.echo(f"{i}. {a.text}")
            click.echo(
                f"   (from {a.entry_id}/{a.slot}, backend {a.backend_tag}, "
                f"position {by_position[(a.entry_id, a.slot)]})"
            )


@main.command("evaluate")
@click.argument("heldout_path", type=click.Path())
@click.option(
    "--out",
    "out_dir",
    type=click.Path(),
    default="./clarifyd-eval",
    show_default=True,
)
@_with_shared
def cmd_evaluate(
    heldout_path,
    out_dir,
    config,
    corpus_path,
    embeddings_path,
    n,
    k,
    context_mode,
    backend,
    service_url,
    as_json,
):
    """Score generated answers against gold answers on a held-out file."""
    try:
        settings = _settings(
            config,
            corpus_path=corpus_path,
            embeddings_path=embeddings_path,
            n=n,
            k=k,
            context_mode=int(context_mode) if context_mode else None,
            backend=backend,
            service_url=service_url,
        )
        validate_settings(settings, need_corpus=True, need_embeddings=True)
        with stage("load-corpus"):
            corpus, _ = load_corpus_report(settings.corpus_path)
        if not corpus.entries:
            raise ValueError(f"corpus {settings.corpus_path} is empty")
        heldout = load_reports(heldout_path)
        store = load_embeddings(settings.embeddings_path)
        provider = WordVectorProvider(store)
        ks = [kk for kk in EVAL_KS if kk <= settings.k]
        rows = []
        skipped = 0
        with stage("evaluate"):
            for report in heldout:
                gold_text = (
                    report.answer(report.gold) if report.gold else None
                )
                if not (report.followup_question or "").strip() or not (
                    gold_text or ""
                ).strip():
                    skipped += 1
                    continue
                _, answers = _pipeline(settings, corpus, report)
                texts = [a.text for a in answers]
                for kk in ks:
                    rows.append(
                        evaluate_topk(
                            texts,
                            gold_text,
                            kk,
                            store=store,
                            provider=provider,
                            query_id=report.id,
                        )
                    )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / "rows.jsonl"
        summary_path = out / "summary.json"
        per_k = {}
        for kk in ks:
            k_rows = [r for r in rows if r.k == kk]
            defined = [r.wmd for r in k_rows if r.wmd is not None]
            per_k[str(kk)] = {
                "queries": len(k_rows),
                "bleu": _mean([r.bleu for r in k_rows]),
                "meteor": _mean([r.meteor for r in k_rows]),
                "semsim": _mean([r.semsim for r in k_rows]),
                "wmd": _mean(defined) if defined else None,
                "wmd_defined": len(defined),
            }
        summary = {
            "queries": len(heldout) - skipped,
            "skipped_without_gold": skipped,
            "k_values": ks,
            "backend": settings.backend,
            "semsim_provider": provider.tag,
            "wmd_lower_is_better": True,
            "per_k": per_k,
        }
        with stage("write"), artifact_lock(rows_path):
            with rows_path.open("w", encoding="utf-8") as handle:
                for row in rows:
                    handle.write(
                        _dump(
                            {
                                "query_id": row.query_id,
                                "k": row.k,
                                "bleu": row.bleu,
                                "meteor": row.meteor,
                                "semsim": row.semsim,
                                "wmd": row.wmd,
                            }
                        )
                    )
                    handle.write("\n")
            summary_path.write_text(
                _dump(summary) + "\n", encoding="utf-8"
            )
    except _HANDLED as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        _dump(summary)
        if as_json
        else f"evaluated {summary['queries']} queries -> {rows_path}"
    )


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


if __name__ == "__main__":
    main()
