"""Transport plumbing, paging, retry, rate limits, thread persistence."""

from __future__ import annotations

import json

import pytest
import requests

from clarifyd.corpus import CorpusFormatError
from clarifyd.ingest import (
    CredentialError,
    FetchSpec,
    FixtureTransport,
    HttpTransport,
    IngestError,
    IssueClient,
    NotFoundError,
    RateLimitError,
    TransportReply,
    load_threads,
    save_threads,
)
from conftest import mining_threads


def issue_record(
    number,
    *,
    title="a title",
    body="a body",
    author="alice",
    labels=(),
    created="2024-03-01T12:00:00Z",
    closed=None,
    pull=False,
):
    record = {
        "number": number,
        "title": title,
        "body": body,
        "user": {"login": author},
        "created_at": created,
        "closed_at": closed,
        "labels": [{"name": name} for name in labels],
    }
    if pull:
        record["pull_request"] = {"url": "https://example.test/pr"}
    return record


def comment_record(cid, *, author="bob", body="text", created="2024-03-01T12:05:00Z"):
    return {"id": cid, "user": {"login": author}, "body": body, "created_at": created}


def write_fixture(root, name, payload):
    (root / name).write_text(json.dumps(payload), encoding="utf-8")


# --------------------------------------------------- FixtureTransport

def test_fixture_transport_maps_path_and_page(tmp_path):
    write_fixture(tmp_path, "repos__o__r__issues__page1.json", [{"k": 1}])
    transport = FixtureTransport(tmp_path)
    reply = transport.get("/repos/o/r/issues", {"page": 1})
    assert reply.status == 200 and reply.payload == [{"k": 1}]
    assert transport.get("/repos/o/r/issues", {"page": 2}).payload == []


def test_fixture_transport_defaults_to_page_one(tmp_path):
    write_fixture(tmp_path, "repos__o__r__issues__page1.json", ["x"])
    assert FixtureTransport(tmp_path).get("/repos/o/r/issues", {}).payload == ["x"]


# ------------------------------------------------------ HttpTransport

class FakeResponse:
    status_code = 200
    content = b"[]"
    headers = {"X-Marker": "1"}

    def json(self):
        return []


class FakeHttpSession:
    def __init__(self):
        self.calls = []

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append((url, params, headers, timeout))
        return FakeResponse()


def test_http_transport_headers_and_url():
    session = FakeHttpSession()
    transport = HttpTransport(
        "https://api.example.test/", token="sekrit", session=session
    )
    reply = transport.get("/repos/o/r/issues", {"page": 1})
    url, params, headers, timeout = session.calls[0]
    assert url == "https://api.example.test/repos/o/r/issues"
    assert params == {"page": 1}
    assert headers["Accept"] == "application/vnd.github+json"
    assert headers["Authorization"] == "Bearer sekrit"
    assert timeout == 30.0
    assert reply.status == 200 and reply.payload == []
    assert reply.header("x-marker") == "1"


def test_http_transport_omits_auth_without_token():
    session = FakeHttpSession()
    HttpTransport("https://api.example.test", session=session).get("/x", {})
    _, _, headers, _ = session.calls[0]
    assert "Authorization" not in headers


# ----------------------------------------------------- paging / specs

def pages_fixture(tmp_path, *, with_pulls=False):
    first = [issue_record(n) for n in range(1, 31)]
    if with_pulls:
        first[3] = issue_record(4, pull=True)
        first[7] = issue_record(8, pull=True)
    write_fixture(tmp_path, "repos__o__r__issues__page1.json", first)
    write_fixture(
        tmp_path,
        "repos__o__r__issues__page2.json",
        [issue_record(n) for n in range(31, 43)],
    )
    return IssueClient(FixtureTransport(tmp_path))


def test_fetch_issues_paginates_until_short_page(tmp_path):
    client = pages_fixture(tmp_path)
    reports = client.fetch_issues(FetchSpec("o/r", page_size=30))
    assert len(reports) == 42
    assert reports[0].id == "o/r#1" and reports[-1].id == "o/r#42"
    assert all(r.repo == "o/r" for r in reports)


def test_fetch_issues_respects_max_issues(tmp_path):
    client = pages_fixture(tmp_path)
    reports = client.fetch_issues(FetchSpec("o/r", page_size=30, max_issues=40))
    assert len(reports) == 40
    assert reports[-1].id == "o/r#40"


def test_fetch_issues_skips_pull_requests(tmp_path):
    client = pages_fixture(tmp_path, with_pulls=True)
    reports = client.fetch_issues(FetchSpec("o/r", page_size=30))
    ids = {r.id for r in reports}
    assert len(reports) == 40
    assert "o/r#4" not in ids and "o/r#8" not in ids


def test_fetch_issues_maps_fields(tmp_path):
    write_fixture(
        tmp_path,
        "repos__o__r__issues__page1.json",
        [
            issue_record(
                7,
                title="it broke",
                body=None,
                labels=("Bug", "P1"),
                closed="2024-03-02T08:00:00Z",
            )
        ],
    )
    client = IssueClient(FixtureTransport(tmp_path))
    (report,) = client.fetch_issues(FetchSpec("o/r", language_tag="Java"))
    assert report.id == "o/r#7"
    assert report.description == ""
    assert report.labels == {"bug", "p1"}
    assert report.language_tag == "Java"
    assert report.closed_at is not None and report.closed_at.tzinfo is not None


class RecordingTransport:
    def __init__(self, payload=()):
        self.payload = list(payload)
        self.calls = []

    def get(self, path, params):
        self.calls.append((path, dict(params)))
        return TransportReply(200, {}, self.payload)


def test_label_filter_is_client_side_or(tmp_path):
    write_fixture(
        tmp_path,
        "repos__o__r__issues__page1.json",
        [
            issue_record(1, labels=("bug",)),
            issue_record(2, labels=("crash", "ui")),
            issue_record(3, labels=("docs",)),
            issue_record(4),
        ],
    )
    client = IssueClient(FixtureTransport(tmp_path))
    reports = client.fetch_issues(FetchSpec("o/r", labels=("BUG", "crash")))
    assert [r.id for r in reports] == ["o/r#1", "o/r#2"]


def test_labels_param_only_for_single_label():
    transport = RecordingTransport()
    client = IssueClient(transport)
    client.fetch_issues(FetchSpec("o/r", labels=("bug",)))
    client.fetch_issues(FetchSpec("o/r", labels=("bug", "crash")))
    client.fetch_issues(FetchSpec("o/r"))
    single, multi, none = (params for _, params in transport.calls)
    assert single["labels"] == "bug"
    assert "labels" not in multi and "labels" not in none
    assert single["per_page"] == 100 and single["page"] == 1


def test_fetch_issues_rejects_non_list_payload():
    transport = RecordingTransport()
    transport.payload = {"oops": True}
    with pytest.raises(IngestError, match="not a list"):
        IssueClient(transport).fetch_issues(FetchSpec("o/r"))


# ------------------------------------------------- retry / rate limit

class ScriptedTransport:
    def __init__(self, script):
        self.script = list(script)
        self.calls = 0

    def get(self, path, params):
        self.calls += 1
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def ok(payload=()):
    return TransportReply(200, {}, list(payload))


def client_with(script, sleeps, **kwargs):
    return IssueClient(
        ScriptedTransport(script), sleeper=sleeps.append, **kwargs
    )


def test_credential_error_mentions_token_env():
    client = client_with([TransportReply(401, {}, None)], [])
    with pytest.raises(CredentialError, match="CLARIFYD_TOKEN"):
        client.fetch_issues(FetchSpec("o/r"))


def test_not_found_error():
    client = client_with([TransportReply(404, {}, None)], [])
    with pytest.raises(NotFoundError, match="/repos/o/r/issues"):
        client.fetch_issues(FetchSpec("o/r"))


def test_unexpected_status():
    client = client_with([TransportReply(418, {}, None)], [])
    with pytest.raises(IngestError, match="unexpected status 418"):
        client.fetch_issues(FetchSpec("o/r"))


def test_server_errors_retry_with_doubling_backoff():
    sleeps = []
    client = client_with(
        [TransportReply(500, {}, None), TransportReply(502, {}, None), ok()],
        sleeps,
    )
    assert client.fetch_issues(FetchSpec("o/r")) == []
    assert sleeps == [0.5, 1.0]


def test_server_errors_exhaust_retries():
    sleeps = []
    client = client_with([TransportReply(500, {}, None)] * 4, sleeps)
    with pytest.raises(IngestError, match="after 3 retries"):
        client.fetch_issues(FetchSpec("o/r"))
    assert sleeps == [0.5, 1.0, 2.0]


def test_connection_errors_retry_then_succeed():
    sleeps = []
    client = client_with(
        [requests.ConnectionError("boom"), requests.ConnectionError("boom"), ok()],
        sleeps,
    )
    assert client.fetch_issues(FetchSpec("o/r")) == []
    assert sleeps == [0.5, 1.0]


def test_connection_errors_exhaust_retries():
    sleeps = []
    client = client_with([requests.ConnectionError("boom")] * 4, sleeps)
    with pytest.raises(IngestError, match="kept failing"):
        client.fetch_issues(FetchSpec("o/r"))
    assert sleeps == [0.5, 1.0, 2.0]


def test_rate_limit_honors_retry_after():
    sleeps = []
    client = client_with(
        [TransportReply(429, {"Retry-After": "30"}, None), ok()], sleeps
    )
    assert client.fetch_issues(FetchSpec("o/r")) == []
    assert sleeps == [30.0]


def test_rate_limit_403_with_zero_remaining():
    sleeps = []
    client = client_with(
        [
            TransportReply(
                403,
                {"x-ratelimit-remaining": "0", "retry-after": "5"},
                None,
            ),
            ok(),
        ],
        sleeps,
    )
    assert client.fetch_issues(FetchSpec("o/r")) == []
    assert sleeps == [5.0]


def test_plain_403_is_not_rate_limit():
    client = client_with([TransportReply(403, {}, None)], [])
    with pytest.raises(IngestError, match="unexpected status 403"):
        client.fetch_issues(FetchSpec("o/r"))


def test_rate_limit_default_wait_is_sixty():
    sleeps = []
    client = client_with([TransportReply(429, {}, None), ok()], sleeps)
    client.fetch_issues(FetchSpec("o/r"))
    assert sleeps == [60.0]


def test_rate_limit_over_budget_raises_with_hint():
    sleeps = []
    client = client_with(
        [
            TransportReply(429, {"Retry-After": "30"}, None),
            TransportReply(429, {"Retry-After": "30"}, None),
        ],
        sleeps,
        rate_limit_budget=50.0,
    )
    with pytest.raises(RateLimitError, match="re-run later"):
        client.fetch_issues(FetchSpec("o/r"))
    assert sleeps == [30.0]


# ------------------------------------------------------ comments

def test_fetch_comments_sorted_stably(tmp_path):
    write_fixture(
        tmp_path,
        "repos__o__r__issues__5__comments__page1.json",
        [
            comment_record(11, created="2024-03-01T12:10:00Z"),
            comment_record(12, created="2024-03-01T12:10:00Z"),
            comment_record(10, created="2024-03-01T12:01:00Z", body=None),
        ],
    )
    client = IssueClient(FixtureTransport(tmp_path))
    comments = client.fetch_comments("o/r", 5)
    assert [c.comment_id for c in comments] == ["10", "11", "12"]
    assert comments[0].body == ""
    assert all(c.issue_id == "o/r#5" for c in comments)


def test_fetch_threads_pairs_issue_with_comments(tmp_path):
    write_fixture(
        tmp_path, "repos__o__r__issues__page1.json", [issue_record(1)]
    )
    write_fixture(
        tmp_path,
        "repos__o__r__issues__1__comments__page1.json",
        [comment_record(90)],
    )
    client = IssueClient(FixtureTransport(tmp_path))
    threads = client.fetch_threads(FetchSpec("o/r"))
    assert len(threads) == 1
    report, comments = threads[0]
    assert report.id == "o/r#1"
    assert [c.comment_id for c in comments] == ["90"]


# -------------------------------------------------- thread persistence

def test_threads_round_trip(tmp_path):
    threads = mining_threads()[:3]
    path = tmp_path / "threads.jsonl"
    save_threads(threads, path)
    loaded = load_threads(path)
    assert loaded == threads


def test_save_threads_is_deterministic(tmp_path):
    threads = mining_threads()
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_threads(threads, a)
    save_threads(threads, b)
    assert a.read_bytes() == b.read_bytes()


def test_load_threads_reports_bad_json_line(tmp_path):
    threads = mining_threads()[:1]
    path = tmp_path / "threads.jsonl"
    save_threads(threads, path)
    with path.open("a", encoding="utf-8") as handle:
        handle.write("not json\n")
    with pytest.raises(CorpusFormatError) as info:
        load_threads(path)
    assert info.value.line_number == 2


def test_load_threads_requires_report_and_comments(tmp_path):
    path = tmp_path / "threads.jsonl"
    path.write_text('{"report": {}}\n', encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="'report' and 'comments'"):
        load_threads(path)


def test_load_threads_rejects_malformed_comment(tmp_path):
    threads = mining_threads()[:1]
    path = tmp_path / "threads.jsonl"
    save_threads(threads, path)
    record = json.loads(path.read_text(encoding="utf-8"))
    del record["comments"][0]["author"]
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="malformed"):
        load_threads(path)
