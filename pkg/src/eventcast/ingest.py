"""Access-log ingestion: canonical JSONL records, CLF readers, day-based splits.

The canonical input format is one JSON object per line with fields
``ts`` (RFC 3339), ``method``, ``uri`` and optional ``app``/``actor``.
Common Log Format and Combined Log Format files are supported as a
convenience reader; both map onto the same :class:`RawRequest` value.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Iterable, Iterator

from .errors import ConfigurationError, ParseError, SchemaError

_METHOD_RE = re.compile(r"^[A-Z]+$")

# host ident authuser [date] "request" status bytes ["referer" "agent"]
_CLF_RE = re.compile(
    r'^(?P<host>\S+)\s+(?P<ident>\S+)\s+(?P<user>\S+)\s+\[(?P<time>[^\]]+)\]\s+'
    r'"(?P<request>[^"]*)"\s+(?P<status>\d{3})\s+(?P<size>\S+)'
    r'(?:\s+"(?P<referer>[^"]*)"\s+"(?P<agent>[^"]*)")?\s*$'
)


def _count_query_params(query: str) -> int:
    """Number of non-empty ``&``-separated key[=value] segments."""
    if not query:
        return 0
    return sum(1 for part in query.split("&") if part)


def split_uri(uri: str) -> tuple[str, int]:
    """Split a URI at the first ``?`` into (path, query_param_count)."""
    path, sep, query = uri.partition("?")
    if not path:
        path = "/"
    return path, _count_query_params(query)


@dataclass(frozen=True)
class RawRequest:
    """One parsed HTTP log record.

    Only the fields the pipeline consumes are kept: method, URI path,
    the number of query parameters, a timestamp and app/actor labels.
    """

    timestamp: datetime
    method: str
    path: str
    query_param_count: int
    app_id: str = "default"
    actor_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if not _METHOD_RE.match(self.method):
            raise ParseError(f"invalid HTTP method {self.method!r}")
        path = self.path or "/"
        if not path.startswith("/"):
            raise ParseError(f"path must start with '/': {self.path!r}")
        object.__setattr__(self, "path", path)
        if self.query_param_count < 0:
            raise ParseError("query_param_count must be non-negative")
        ts = self.timestamp
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "timestamp", ts.astimezone(timezone.utc))

    @property
    def day(self) -> date:
        """Calendar date in UTC; the unit of train/valid/test splitting."""
        return self.timestamp.date()

    def to_json_line(self) -> str:
        """Serialize to the canonical record format.

        The original query string is not retained, so a synthetic
        ``p0=&p1=...`` query with the same parameter count is emitted;
        re-parsing the line yields a value equal to this one.
        """
        uri = self.path
        if self.query_param_count:
            uri += "?" + "&".join(f"p{i}=" for i in range(self.query_param_count))
        record = {
            "ts": self.timestamp.isoformat().replace("+00:00", "Z"),
            "method": self.method,
            "uri": uri,
            "app": self.app_id,
        }
        if self.actor_id is not None:
            record["actor"] = self.actor_id
        return json.dumps(record, separators=(",", ":"), sort_keys=True)


def _parse_rfc3339(value: str, line_number: int | None) -> datetime:
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, TypeError):
        raise ParseError(f"bad timestamp {value!r}", line_number) from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_jsonl(line: str, line_number: int | None = None) -> RawRequest:
    """Parse one canonical JSONL record into a :class:`RawRequest`."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", line_number) from None
    if not isinstance(record, dict):
        raise ParseError("record is not an object", line_number)
    for name in ("ts", "method", "uri"):
        if name not in record:
            raise SchemaError(f"missing mandatory field {name!r}", line_number)
    path, n_params = split_uri(str(record["uri"]))
    try:
        return RawRequest(
            timestamp=_parse_rfc3339(record["ts"], line_number),
            method=str(record["method"]),
            path=path,
            query_param_count=n_params,
            app_id=str(record.get("app", "default")),
            actor_id=None if record.get("actor") is None else str(record["actor"]),
        )
    except ParseError as exc:
        if exc.line_number is None and line_number is not None:
            raise ParseError(str(exc), line_number) from None
        raise


def parse_clf(line: str, line_number: int | None = None, app_id: str = "default") -> RawRequest:
    """Parse one Common/Combined Log Format line."""
    match = _CLF_RE.match(line)
    if match is None:
        raise ParseError("line does not match common/combined log format", line_number)
    request = match.group("request").split()
    if len(request) < 2:
        raise ParseError(f"bad request field {match.group('request')!r}", line_number)
    method, uri = request[0], request[1]
    try:
        ts = datetime.strptime(match.group("time"), "%d/%b/%Y:%H:%M:%S %z")
    except ValueError:
        raise ParseError(f"bad timestamp {match.group('time')!r}", line_number) from None
    path, n_params = split_uri(uri)
    user = match.group("user")
    return RawRequest(
        timestamp=ts.astimezone(timezone.utc),
        method=method,
        path=path,
        query_param_count=n_params,
        app_id=app_id,
        actor_id=None if user == "-" else user,
    )


def read_log(
    lines: Iterable[str],
    fmt: str = "jsonl",
    on_error: str = "raise",
    app_id: str = "default",
) -> Iterator[RawRequest]:
    """Yield RawRequests from an iterable of lines, preserving order.

    ``on_error="skip"`` silently drops unparseable lines (blank lines are
    always skipped); anything else re-raises with the line number attached.
    """
    if fmt not in ("jsonl", "clf"):
        raise ConfigurationError(f"unknown log format {fmt!r}")
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            if fmt == "jsonl":
                yield parse_jsonl(line, number)
            else:
                yield parse_clf(line, number, app_id=app_id)
        except ParseError:
            if on_error != "skip":
                raise


def filter_requests(
    requests: Iterable[RawRequest],
    exclude_actors: Iterable[str] = (),
    exclude_path_prefixes: Iterable[str] = (),
) -> Iterator[RawRequest]:
    """Drop machine traffic by explicit actor/path deny lists.

    No heuristics: callers supply the lists (e.g. heartbeat endpoints,
    service accounts) in configuration.
    """
    actors = set(exclude_actors)
    prefixes = tuple(exclude_path_prefixes)
    for req in requests:
        if req.actor_id is not None and req.actor_id in actors:
            continue
        if prefixes and req.path.startswith(prefixes):
            continue
        yield req


@dataclass(frozen=True)
class DatasetSplit:
    """Pairwise-disjoint day sets assigning every request to a split."""

    train_days: frozenset[date]
    valid_days: frozenset[date]
    test_days: frozenset[date]
    unused_days: frozenset[date] = field(default_factory=frozenset)

    def __post_init__(self):
        if (
            self.train_days & self.valid_days
            or self.train_days & self.test_days
            or self.valid_days & self.test_days
        ):
            raise ConfigurationError("split day-sets must be pairwise disjoint")

    def assign(self, request: RawRequest) -> str | None:
        """Split name for a request, or None for a day outside the split."""
        day = request.day
        if day in self.train_days:
            return "train"
        if day in self.valid_days:
            return "valid"
        if day in self.test_days:
            return "test"
        return None

    def partition(
        self, requests: Iterable[RawRequest]
    ) -> dict[str, list[RawRequest]]:
        """Partition a request stream into train/valid/test lists by date."""
        parts: dict[str, list[RawRequest]] = {"train": [], "valid": [], "test": []}
        for req in requests:
            name = self.assign(req)
            if name is not None:
                parts[name].append(req)
        return parts


def split_by_day(
    requests: Iterable[RawRequest], train_n: int, valid_n: int, test_n: int
) -> DatasetSplit:
    """Assign the earliest days to train, the next to valid, the last to test.

    Assignment is by calendar date (UTC), never by record index.  Raises
    :class:`ConfigurationError` when fewer distinct dates exist than the
    three counts require.  If more dates exist, the days between the
    validation block and the final ``test_n`` days are reported as unused.
    """
    if min(train_n, valid_n, test_n) < 0:
        raise ConfigurationError("split sizes must be non-negative")
    days = sorted({req.day for req in requests})
    needed = train_n + valid_n + test_n
    if len(days) < needed:
        raise ConfigurationError(
            f"need at least {needed} distinct days, found {len(days)}"
        )
    train = days[:train_n]
    valid = days[train_n : train_n + valid_n]
    test = days[len(days) - test_n :] if test_n else []
    unused = days[train_n + valid_n : len(days) - test_n]
    return DatasetSplit(
        train_days=frozenset(train),
        valid_days=frozenset(valid),
        test_days=frozenset(test),
        unused_days=frozenset(unused),
    )
