"""Issue-tracker ingestion over a swappable transport.

HttpTransport speaks to a live GitHub-style REST API; FixtureTransport
replays JSON files from disk so pipelines can run and be tested offline.
The client owns paging, retry, and rate-limit behavior; transports only
move bytes.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

from .corpus import (
    BugReport,
    Comment,
    CorpusFormatError,
    format_timestamp,
    parse_timestamp,
    record_to_report,
    report_to_record,
)

logger = logging.getLogger(__name__)

DEFAULT_PAGE_SIZE = 100


class IngestError(RuntimeError):
    pass


class CredentialError(IngestError):
    pass


class NotFoundError(IngestError):
    pass


class RateLimitError(IngestError):
    pass


@dataclass(slots=True)
class TransportReply:
    status: int
    headers: dict[str, str]
    payload: object

    def header(self, name: str) -> str | None:
        for key, value in self.headers.items():
            if key.lower() == name.lower():
                return value
        return None


class Transport(Protocol):
    def get(self, path: str, params: dict) -> TransportReply: ...


class HttpTransport:
    """Real HTTP GETs with optional bearer auth."""

    def __init__(
        self,
        base_url: str = "https://api.github.com",
        token: str | None = None,
        *,
        timeout: float = 30.0,
        session=None,
    ):
        self._base = base_url.rstrip("/")
        self._token = token
        self._timeout = timeout
        self._session = session if session is not None else requests.Session()

    def get(self, path: str, params: dict) -> TransportReply:
        headers = {"Accept": "application/vnd.github+json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        response = self._session.get(
            f"{self._base}{path}",
            params=params,
            headers=headers,
            timeout=self._timeout,
        )
        try:
            payload = response.json() if response.content else None
        except ValueError:
            payload = None
        return TransportReply(
            status=response.status_code,
            headers=dict(response.headers),
            payload=payload,
        )


class FixtureTransport:
    """Replays responses from files named after the request path.

    '/repos/o/r/issues' page 2 maps to 'repos__o__r__issues__page2.json'
    under the fixture root. A missing file is an empty 200 page, which
    terminates pagination naturally.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def get(self, path: str, params: dict) -> TransportReply:
        page = params.get("page", 1)
        name = path.strip("/").replace("/", "__") + f"__page{page}.json"
        target = self.root / name
        if not target.exists():
            return TransportReply(200, {}, [])
        return TransportReply(
            200, {}, json.loads(target.read_text(encoding="utf-8"))
        )


@dataclass(slots=True)
class FetchSpec:
    """What to pull: a repo, optional label filter, optional cap."""

    repo: str
    labels: tuple[str, ...] = ()
    max_issues: int | None = None
    language_tag: str = "other"
    page_size: int = DEFAULT_PAGE_SIZE


class IssueClient:
    """Paging, retry, and rate-limit handling over a Transport.

    Transient failures (5xx, connection drops) retry with doubling backoff.
    Rate-limit responses honor Retry-After while it fits the remaining
    sleep budget, then fail with a hint.
    """

    def __init__(
        self,
        transport: Transport,
        *,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        rate_limit_budget: float = 120.0,
        sleeper=time.sleep,
    ):
        self._transport = transport
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._rate_limit_budget = rate_limit_budget
        self._sleeper = sleeper

    def _is_rate_limited(self, reply: TransportReply) -> bool:
        if reply.status == 429:
            return True
        return (
            reply.status == 403
            and reply.header("X-RateLimit-Remaining") == "0"
        )

    def _request(self, path: str, params: dict):
        attempts = 0
        slept = 0.0
        while True:
            try:
                reply = self._transport.get(path, params)
            except requests.RequestException as exc:
                attempts += 1
                if attempts > self._max_retries:
                    raise IngestError(
                        f"connection to {path} kept failing: {exc}"
                    ) from exc
                delay = self._backoff_base * (2 ** (attempts - 1))
                logger.warning(
                    "retry %d for %s after connection error", attempts, path
                )
                self._sleeper(delay)
                continue
            if reply.status == 200:
                return reply.payload
            if reply.status == 401:
                raise CredentialError(
                    "authentication failed; set CLARIFYD_TOKEN to a valid "
                    "API token"
                )
            if reply.status == 404:
                raise NotFoundError(f"not found: {path}")
            if self._is_rate_limited(reply):
                retry_after = float(reply.header("Retry-After") or 60.0)
                if slept + retry_after <= self._rate_limit_budget:
                    logger.warning(
                        "rate limited on %s; sleeping %.1fs", path, retry_after
                    )
                    self._sleeper(retry_after)
                    slept += retry_after
                    continue
                raise RateLimitError(
                    f"rate limited on {path} and Retry-After {retry_after:.0f}s "
                    "exceeds the wait budget; re-run later or use an "
                    "authenticated token for a higher quota"
                )
            if 500 <= reply.status < 600:
                attempts += 1
                if attempts > self._max_retries:
                    raise IngestError(
                        f"server error {reply.status} on {path} after "
                        f"{self._max_retries} retries"
                    )
                delay = self._backoff_base * (2 ** (attempts - 1))
                logger.warning(
                    "retry %d for %s after status %d", attempts, path, reply.status
                )
                self._sleeper(delay)
                continue
            raise IngestError(f"unexpected status {reply.status} on {path}")

    def fetch_issues(self, spec: FetchSpec) -> list[BugReport]:
        """Pull issue records (no follow-up material yet) from one repo.

        Pull requests are skipped. With multiple labels the filter is a
        client-side OR; the API's labels parameter only expresses AND, so
        it is sent only for a single-label spec.
        """
        wanted = {label.lower() for label in spec.labels}
        reports: list[BugReport] = []
        page = 1
        while True:
            params: dict = {"per_page": spec.page_size, "page": page}
            if len(spec.labels) == 1:
                params["labels"] = spec.labels[0]
            records = self._request(f"/repos/{spec.repo}/issues", params)
            if not isinstance(records, list):
                raise IngestError(
                    f"issue listing for {spec.repo} was not a list"
                )
            for record in records:
                if "pull_request" in record:
                    continue
                labels = {
                    item["name"].lower() for item in record.get("labels", [])
                }
                if wanted and not (labels & wanted):
                    continue
                reports.append(
                    BugReport(
                        id=f"{spec.repo}#{record['number']}",
                        repo=spec.repo,
                        title=record.get("title") or "",
                        description=record.get("body") or "",
                        author=record["user"]["login"],
                        created_at=parse_timestamp(record["created_at"]),
                        closed_at=(
                            parse_timestamp(record["closed_at"])
                            if record.get("closed_at")
                            else None
                        ),
                        labels=labels,
                        language_tag=spec.language_tag,
                    )
                )
                if (
                    spec.max_issues is not None
                    and len(reports) >= spec.max_issues
                ):
                    return reports[: spec.max_issues]
            if len(records) < spec.page_size:
                return reports
            page += 1

    def fetch_comments(self, repo: str, issue_number: int | str) -> list[Comment]:
        """All comments on one issue, ascending by time (stable)."""
        comments: list[Comment] = []
        page = 1
        while True:
            records = self._request(
                f"/repos/{repo}/issues/{issue_number}/comments",
                {"per_page": DEFAULT_PAGE_SIZE, "page": page},
            )
            if not isinstance(records, list):
                raise IngestError(
                    f"comment listing for {repo}#{issue_number} was not a list"
                )
            for record in records:
                comments.append(
                    Comment(
                        comment_id=str(record["id"]),
                        issue_id=f"{repo}#{issue_number}",
                        author=record["user"]["login"],
                        body=record.get("body") or "",
                        time=parse_timestamp(record["created_at"]),
                    )
                )
            if len(records) < DEFAULT_PAGE_SIZE:
                break
            page += 1
        comments.sort(key=lambda c: c.time)
        return comments

    def fetch_threads(
        self, spec: FetchSpec
    ) -> list[tuple[BugReport, list[Comment]]]:
        threads = []
        for report in self.fetch_issues(spec):
            number = report.id.rsplit("#", 1)[1]
            threads.append(
                (report, self.fetch_comments(spec.repo, number))
            )
        return threads


def save_threads(
    threads: list[tuple[BugReport, list[Comment]]], path: str | Path
) -> None:
    """Persist fetched threads as JSONL for the mining step."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for report, comments in threads:
            handle.write(
                json.dumps(
                    {
                        "report": report_to_record(report),
                        "comments": [
                            {
                                "comment_id": c.comment_id,
                                "issue_id": c.issue_id,
                                "author": c.author,
                                "body": c.body,
                                "time": format_timestamp(c.time),
                            }
                            for c in comments
                        ],
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            handle.write("\n")


def load_threads(path: str | Path) -> list[tuple[BugReport, list[Comment]]]:
    path = Path(path)
    threads: list[tuple[BugReport, list[Comment]]] = []
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
            if (
                not isinstance(record, dict)
                or "report" not in record
                or "comments" not in record
            ):
                raise CorpusFormatError(
                    f"thread record at line {line_number} needs "
                    "'report' and 'comments'",
                    line_number,
                )
            report = record_to_report(record["report"], line_number)
            try:
                comments = [
                    Comment(
                        comment_id=c["comment_id"],
                        issue_id=c["issue_id"],
                        author=c["author"],
                        body=c["body"],
                        time=parse_timestamp(c["time"]),
                    )
                    for c in record["comments"]
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(
                    f"comment record at line {line_number} is malformed: {exc}",
                    line_number,
                ) from exc
            threads.append((report, comments))
    return threads
