"""Context assembly, character budgets, and generation backends."""

from __future__ import annotations

import pytest
import requests

from clarifyd.genctx import (
    BackendError,
    Context,
    ExtractiveBackend,
    GenerationError,
    Segment,
    ServiceBackend,
    build_context,
    generate_answers,
)
from clarifyd.retrieval import RankedAnswer
from conftest import make_report


def ranked(answer="set the flag", entry_id="E01", slot="ca1"):
    return RankedAnswer(
        entry_id=entry_id,
        slot=slot,
        answer=answer,
        relevance_score=1.0,
        relevance_rank=1,
    )


DEFICIENT = make_report("Q01", title="query title", description="query desc")
SOURCE = make_report("E01", title="source title", description="source desc")


def test_mode1_segments():
    context = build_context(1, DEFICIENT, ranked(), SOURCE)
    assert [(s.label, s.text) for s in context.segments] == [
        ("answer", "set the flag"),
        ("source-title", "source title"),
        ("source-description", "source desc"),
    ]
    assert context.render() == "set the flag\nsource title\nsource desc"
    assert context.mode == 1
    assert context.source_entry_id == "E01" and context.source_slot == "ca1"


def test_mode2_appends_deficient_side():
    context = build_context(2, DEFICIENT, ranked(), SOURCE)
    assert [s.label for s in context.segments] == [
        "answer",
        "source-title",
        "source-description",
        "deficient-title",
        "deficient-description",
    ]
    assert context.render().endswith("query title\nquery desc")


def test_invalid_mode_rejected():
    with pytest.raises(ValueError, match="context mode"):
        build_context(3, DEFICIENT, ranked(), SOURCE)


def test_render_skips_empty_segments():
    context = Context(
        mode=1,
        segments=[Segment("a", "x"), Segment("b", ""), Segment("c", "y")],
        answer_text="x",
        source_entry_id="E01",
        source_slot="ca1",
    )
    assert context.render() == "x\ny"


# ------------------------------------------------------ budget fitting

def test_budget_cuts_longest_segment_first():
    context = build_context(
        1,
        DEFICIENT,
        ranked(answer="short"),
        make_report("E01", title="tiny", description="d" * 50),
        max_chars=30,
    )
    texts = [s.text for s in context.segments]
    assert texts[0] == "short" and texts[1] == "tiny"
    assert len(context.render()) <= 30
    # overflow was (5 + 1 + 4 + 1 + 50) - 30 = 31, taken off the description
    assert texts[2] == "d" * 19


def test_budget_tie_cuts_later_segment():
    context = build_context(
        1,
        DEFICIENT,
        ranked(answer="a" * 10),
        make_report("E01", title="t" * 10, description="s" * 10),
        max_chars=28,
    )
    texts = [s.text for s in context.segments]
    assert texts[0] == "a" * 10
    assert texts[1] == "t" * 10
    assert texts[2] == "s" * 6  # 32 rendered - 28 budget off the last tie
    assert len(context.render()) == 28


def test_budget_emptied_segment_stops_costing_separator():
    context = build_context(
        1,
        DEFICIENT,
        ranked(answer="abcdef"),
        make_report("E01", title="gh", description="z" * 100),
        max_chars=10,
    )
    assert len(context.render()) <= 10
    assert context.render() == "abcdef\ngh"  # description emptied entirely


def test_budget_zero_empties_everything():
    context = build_context(1, DEFICIENT, ranked(), SOURCE, max_chars=0)
    assert context.render() == ""
    assert len(context.segments) == 3  # structure survives, texts are empty


def test_budget_negative_rejected():
    with pytest.raises(ValueError, match="non-negative"):
        build_context(1, DEFICIENT, ranked(), SOURCE, max_chars=-1)


def test_budget_no_cut_when_it_fits():
    context = build_context(1, DEFICIENT, ranked(), SOURCE, max_chars=10_000)
    assert context.render() == "set the flag\nsource title\nsource desc"


def test_answer_text_survives_truncation():
    context = build_context(
        1, DEFICIENT, ranked(answer="x" * 200), SOURCE, max_chars=20
    )
    assert context.answer_text == "x" * 200
    assert len(context.render()) <= 20


# ----------------------------------------------------------- backends

def test_extractive_backend_returns_answer_text():
    backend = ExtractiveBackend()
    context = build_context(1, DEFICIENT, ranked(answer="verbatim"), SOURCE)
    assert backend.generate("ignored?", context) == "verbatim"
    assert backend.tag == "extractive"


class FakeGenSession:
    def __init__(self, payload=None, exc=None, status_exc=None):
        self.payload = payload
        self.exc = exc
        self.status_exc = status_exc
        self.calls = []

    def post(self, url, json=None, timeout=None):
        self.calls.append((url, json, timeout))
        if self.exc is not None:
            raise self.exc
        session = self

        class Reply:
            def raise_for_status(self):
                if session.status_exc is not None:
                    raise session.status_exc

            def json(self):
                return session.payload

        return Reply()


def test_service_backend_posts_rendered_context():
    session = FakeGenSession(payload={"answer": "generated text"})
    backend = ServiceBackend(
        "http://gen:9000/", max_new_tokens=48, session=session
    )
    context = build_context(1, DEFICIENT, ranked(), SOURCE)
    assert backend.generate("what flag?", context) == "generated text"
    assert backend.tag == "service:http://gen:9000"
    url, payload, _ = session.calls[0]
    assert url == "http://gen:9000/generate"
    assert payload == {
        "question": "what flag?",
        "context": "set the flag\nsource title\nsource desc",
        "max_new_tokens": 48,
    }


@pytest.mark.parametrize(
    "session",
    [
        FakeGenSession(exc=requests.ConnectionError("down")),
        FakeGenSession(status_exc=requests.HTTPError("503")),
        FakeGenSession(payload={"unexpected": "shape"}),
    ],
)
def test_service_backend_wraps_failures(session):
    backend = ServiceBackend("http://gen:9000", session=session)
    context = build_context(1, DEFICIENT, ranked(), SOURCE)
    with pytest.raises(BackendError, match="generation service failed"):
        backend.generate("q?", context)


# ----------------------------------------------------- generate_answers

class FlakyBackend:
    tag = "flaky"

    def __init__(self, bad_slots):
        self.bad_slots = bad_slots

    def generate(self, question, context):
        if context.source_slot in self.bad_slots:
            raise BackendError(f"refused {context.source_slot}")
        return f"ok:{context.answer_text}"


def contexts_for(n):
    return [
        build_context(
            1,
            DEFICIENT,
            ranked(answer=f"answer {i}", entry_id=f"E{i:02d}", slot="ca1"),
            SOURCE,
        )
        for i in range(1, n + 1)
    ]


def test_generate_answers_truncates_to_k():
    answers = generate_answers("q?", contexts_for(5), ExtractiveBackend(), 3)
    assert [a.text for a in answers] == ["answer 1", "answer 2", "answer 3"]
    assert {a.backend_tag for a in answers} == {"extractive"}
    assert [a.entry_id for a in answers] == ["E01", "E02", "E03"]


def test_generate_answers_fallback_tags_degraded_rows():
    contexts = contexts_for(3)
    contexts[1] = build_context(
        1, DEFICIENT, ranked(answer="bad ctx", entry_id="E09", slot="ca2"), SOURCE
    )
    answers = generate_answers(
        "q?", contexts, FlakyBackend({"ca2"}), 3, fallback=True
    )
    assert [a.backend_tag for a in answers] == [
        "flaky",
        "extractive-fallback",
        "flaky",
    ]
    assert answers[1].text == "bad ctx"  # retrieved answer, untruncated


def test_generate_answers_no_fallback_collects_all_causes():
    contexts = contexts_for(4)
    with pytest.raises(GenerationError) as info:
        generate_answers(
            "q?",
            contexts,
            FlakyBackend({"ca1"}),
            3,
            fallback=False,
        )
    assert len(info.value.causes) == 3  # only the first k are attempted
    assert "E01/ca1" in info.value.causes[0]


def test_generate_answers_rejects_bad_k():
    with pytest.raises(ValueError, match="positive"):
        generate_answers("q?", contexts_for(1), ExtractiveBackend(), 0)


def test_generate_answers_empty_contexts():
    assert generate_answers("q?", [], ExtractiveBackend(), 5) == []
