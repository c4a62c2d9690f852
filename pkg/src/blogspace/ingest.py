"""Event-log ingestion: parsing, validation, filtering and serialization.

A log is a flat list of post and comment events.  Two line formats are
accepted:

JSON lines::

    {"id": "c17", "type": "comment", "user": "u4", "post": "p2", "parent": "c9", "ts": 123456}

TSV, one event per row with columns ``id type user post parent ts`` where a
missing parent is written as ``-``.  A header row starting with ``id`` is
optional.

Timestamps are integer minutes; fractional values are floored.
"""

from __future__ import annotations

import enum
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .errors import EmptyDataError, LogFormatError, LogValidationError

TSV_COLUMNS = ("id", "type", "user", "post", "parent", "ts")


class Kind(str, enum.Enum):
    POST = "post"
    COMMENT = "comment"


@dataclass(frozen=True, slots=True)
class EventRecord:
    event_id: str
    kind: Kind
    actor: str
    post: str
    parent: str | None
    ts: int

    @property
    def is_post(self) -> bool:
        return self.kind is Kind.POST


class EventLog:
    """Events sorted by ``(ts, event_id)`` with per-user and per-post indexes.

    The constructor does not check referential integrity; use
    :func:`validate_log` for that.  Instances are treated as immutable.
    """

    def __init__(self, events: Iterable[EventRecord], source_out_of_order: int = 0):
        self.events: tuple[EventRecord, ...] = tuple(
            sorted(events, key=lambda e: (e.ts, e.event_id))
        )
        self.source_out_of_order = source_out_of_order
        by_user: dict[str, list[int]] = defaultdict(list)
        by_post: dict[str, list[int]] = defaultdict(list)
        for i, ev in enumerate(self.events):
            by_user[ev.actor].append(i)
            by_post[ev.post].append(i)
        self.by_user: dict[str, tuple[int, ...]] = {u: tuple(v) for u, v in by_user.items()}
        self.by_post: dict[str, tuple[int, ...]] = {p: tuple(v) for p, v in by_post.items()}
        self.by_id: dict[str, EventRecord] = {ev.event_id: ev for ev in self.events}

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self.events)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.events == other.events

    def __repr__(self) -> str:
        return (
            f"EventLog(n_users={self.n_users}, n_posts={self.n_posts}, "
            f"n_comments={self.n_comments})"
        )

    @property
    def posts(self) -> list[EventRecord]:
        return [ev for ev in self.events if ev.kind is Kind.POST]

    @property
    def comments(self) -> list[EventRecord]:
        return [ev for ev in self.events if ev.kind is Kind.COMMENT]

    @property
    def n_users(self) -> int:
        return len(self.by_user)

    @property
    def n_posts(self) -> int:
        return sum(1 for ev in self.events if ev.kind is Kind.POST)

    @property
    def n_comments(self) -> int:
        return len(self.events) - self.n_posts

    def counts(self) -> dict[str, int]:
        return {"n_users": self.n_users, "n_posts": self.n_posts, "n_comments": self.n_comments}

    def comment_counts(self) -> dict[str, int]:
        """Number of comments per post id (posts with none map to 0)."""
        counts = {ev.post: 0 for ev in self.events if ev.kind is Kind.POST}
        for ev in self.events:
            if ev.kind is Kind.COMMENT and ev.post in counts:
                counts[ev.post] += 1
        return counts

    def user_events(self, user: str) -> list[EventRecord]:
        return [self.events[i] for i in self.by_user.get(user, ())]

    def post_comments(self, post: str) -> list[EventRecord]:
        return [self.events[i] for i in self.by_post.get(post, ()) if self.events[i].kind is Kind.COMMENT]


@dataclass
class ValidationReport:
    orphans: list[str] = field(default_factory=list)
    bad_parents: list[str] = field(default_factory=list)
    cycles: list[list[str]] = field(default_factory=list)
    early_comments: list[str] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)
    out_of_order: int = 0

    @property
    def ok(self) -> bool:
        """True when there is nothing that invalidates the log.

        ``out_of_order`` is informational only since parsing sorts events.
        """
        return not (
            self.orphans or self.bad_parents or self.cycles or self.early_comments or self.duplicates
        )

    def offending(self) -> set[str]:
        ids = set(self.orphans) | set(self.bad_parents) | set(self.early_comments)
        for cyc in self.cycles:
            ids.update(cyc)
        return ids

    def summary(self) -> str:
        return (
            f"{len(self.orphans)} orphans, {len(self.bad_parents)} bad parents, "
            f"{len(self.cycles)} cycles, {len(self.early_comments)} early comments, "
            f"{len(self.duplicates)} duplicates, {self.out_of_order} out of order"
        )

    def to_dict(self) -> dict:
        return {
            "orphans": self.orphans,
            "bad_parents": self.bad_parents,
            "cycles": self.cycles,
            "early_comments": self.early_comments,
            "duplicates": self.duplicates,
            "out_of_order": self.out_of_order,
        }


def validate_log(log: EventLog) -> ValidationReport:
    """Check referential integrity of ``log`` without modifying it."""
    report = ValidationReport(out_of_order=log.source_out_of_order)
    id_counts = Counter(ev.event_id for ev in log.events)
    report.duplicates = sorted(i for i, c in id_counts.items() if c > 1)

    post_ts = {ev.event_id: ev.ts for ev in log.events if ev.kind is Kind.POST}
    comments = {ev.event_id: ev for ev in log.events if ev.kind is Kind.COMMENT}

    resolved: dict[str, str] = {}  # comment id -> parent comment id
    for ev in log.events:
        if ev.kind is not Kind.COMMENT:
            continue
        if ev.post not in post_ts:
            report.orphans.append(ev.event_id)
            continue
        if ev.ts < post_ts[ev.post]:
            report.early_comments.append(ev.event_id)
        if ev.parent is None:
            continue
        parent = comments.get(ev.parent)
        if parent is None or parent.post != ev.post:
            report.bad_parents.append(ev.event_id)
        else:
            resolved[ev.event_id] = ev.parent

    # parent chains: 0 unvisited, 1 on current path, 2 done
    state: dict[str, int] = {}
    for start in resolved:
        if state.get(start):
            continue
        path: list[str] = []
        node: str | None = start
        while node is not None and not state.get(node):
            state[node] = 1
            path.append(node)
            node = resolved.get(node)
        if node is not None and state.get(node) == 1:
            report.cycles.append(path[path.index(node):])
        for p in path:
            state[p] = 2
    return report


def _record_from_fields(
    event_id, kind, actor, post, parent, ts, lineno: int | None
) -> EventRecord:
    for name, value in (("id", event_id), ("user", actor), ("post", post)):
        if not isinstance(value, str) or not value or any(c.isspace() for c in value):
            raise LogFormatError(f"field {name!r} must be a non-empty string without whitespace", lineno)
    try:
        kind = Kind(kind)
    except ValueError:
        raise LogFormatError(f"unknown event type {kind!r}", lineno) from None
    if parent is not None and (not isinstance(parent, str) or not parent or any(c.isspace() for c in parent)):
        raise LogFormatError("field 'parent' must be a non-empty string or absent", lineno)
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
        raise LogFormatError(f"timestamp {ts!r} is not a number", lineno)
    ts = math.floor(ts)
    if ts < 0:
        raise LogFormatError("timestamp is negative", lineno)
    if kind is Kind.POST:
        if parent is not None:
            raise LogFormatError("a post cannot have a parent", lineno)
        if event_id != post:
            raise LogFormatError("a post's id must equal its post field", lineno)
    return EventRecord(event_id, kind, actor, post, parent, int(ts))


def _parse_json_line(line: str, lineno: int) -> EventRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise LogFormatError("expected a JSON object", lineno)
    missing = [k for k in ("id", "type", "user", "post", "ts") if k not in obj]
    if missing:
        raise LogFormatError(f"missing field(s) {', '.join(missing)}", lineno)
    return _record_from_fields(
        obj["id"], obj["type"], obj["user"], obj["post"], obj.get("parent"), obj["ts"], lineno
    )


def _parse_tsv_line(line: str, lineno: int) -> EventRecord:
    cols = line.split("\t")
    if len(cols) != len(TSV_COLUMNS):
        raise LogFormatError(f"expected {len(TSV_COLUMNS)} columns, got {len(cols)}", lineno)
    event_id, kind, actor, post, parent, ts = cols
    try:
        ts_val: float = int(ts)
    except ValueError:
        try:
            ts_val = float(ts)
        except ValueError:
            raise LogFormatError(f"timestamp {ts!r} is not a number", lineno) from None
    return _record_from_fields(
        event_id, kind, actor, post, None if parent == "-" else parent, ts_val, lineno
    )


def _lines(stream) -> Iterator[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        if isinstance(raw, (bytes, bytearray)):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise LogFormatError("input is not valid UTF-8") from None
        yield raw.rstrip("\r\n")


def parse_event_log(stream, format: str = "jsonl", lenient: bool = False) -> EventLog:
    """Parse a JSON-lines or TSV event stream into an :class:`EventLog`.

    ``stream`` may be a binary or text file object, ``bytes`` or ``str``.
    Duplicate ids and malformed lines always raise.  Referential problems
    (orphans, bad parents, cycles, comments before their post) raise
    :class:`LogValidationError` unless ``lenient`` is set, in which case the
    offending comments, and any replies that lose their parent as a result,
    are dropped.
    """
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown log format {format!r}")
    parse_line = _parse_json_line if format == "jsonl" else _parse_tsv_line
    records: list[EventRecord] = []
    seen: set[str] = set()
    out_of_order = 0
    prev_key = None
    for lineno, line in enumerate(_lines(stream), start=1):
        if not line.strip():
            continue
        if format == "tsv" and line.split("\t", 1)[0] == "id":
            continue
        rec = parse_line(line, lineno)
        if rec.event_id in seen:
            raise LogFormatError(f"duplicate event id {rec.event_id!r}", lineno)
        seen.add(rec.event_id)
        key = (rec.ts, rec.event_id)
        if prev_key is not None and key < prev_key:
            out_of_order += 1
        prev_key = key
        records.append(rec)

    log = EventLog(records, source_out_of_order=out_of_order)
    report = validate_log(log)
    if report.ok:
        return log
    if not lenient:
        raise LogValidationError(report)
    while not report.ok:
        drop = report.offending()
        log = EventLog((ev for ev in log.events if ev.event_id not in drop), out_of_order)
        report = validate_log(log)
    return log


def read_event_log(path: str | Path, format: str | None = None, lenient: bool = False) -> EventLog:
    """Parse a log file; the format defaults from the extension (``.tsv`` or JSON lines)."""
    path = Path(path)
    if format is None:
        format = "tsv" if path.suffix.lower() == ".tsv" else "jsonl"
    with open(path, "rb") as fh:
        return parse_event_log(fh, format=format, lenient=lenient)


def format_event(ev: EventRecord, format: str = "jsonl") -> str:
    if format == "tsv":
        return "\t".join(
            (ev.event_id, ev.kind.value, ev.actor, ev.post, ev.parent or "-", str(ev.ts))
        )
    obj = {"id": ev.event_id, "type": ev.kind.value, "user": ev.actor, "post": ev.post}
    if ev.parent is not None:
        obj["parent"] = ev.parent
    obj["ts"] = ev.ts
    return json.dumps(obj, separators=(",", ":"))


def write_event_log(log: EventLog | Sequence[EventRecord], stream: IO[str], format: str = "jsonl") -> None:
    """Write events in canonical order; ``parse_event_log`` inverts this."""
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown log format {format!r}")
    events = log.events if isinstance(log, EventLog) else log
    if format == "tsv":
        stream.write("\t".join(TSV_COLUMNS) + "\n")
    for ev in events:
        stream.write(format_event(ev, format) + "\n")


def filter_events(
    log: EventLog,
    min_comments: int | None = None,
    max_comments: float | None = None,
    time_window: tuple[int | None, int | None] | None = None,
) -> EventLog:
    """Keep posts whose comment count lies in ``[min_comments, max_comments]``.

    With a ``time_window`` ``(start, end)`` (half open, either side may be
    None) only events inside the window are considered; comments whose post
    or parent falls outside it are dropped before counting.
    """
    if min_comments is not None and max_comments is not None and min_comments > max_comments:
        raise ValueError(f"min_comments ({min_comments}) exceeds max_comments ({max_comments})")
    lo = -math.inf if min_comments is None else min_comments
    hi = math.inf if max_comments is None else max_comments

    events = list(log.events)
    if time_window is not None:
        start, end = time_window
        events = [
            ev for ev in events
            if (start is None or ev.ts >= start) and (end is None or ev.ts < end)
        ]
    posts = {ev.event_id for ev in events if ev.kind is Kind.POST}
    kept = {ev.event_id for ev in events if ev.kind is Kind.COMMENT and ev.post in posts}
    # drop replies whose parent is gone, until stable
    while True:
        lost = {
            ev.event_id for ev in events
            if ev.event_id in kept and ev.parent is not None and ev.parent not in kept
        }
        if not lost:
            break
        kept -= lost

    counts = dict.fromkeys(posts, 0)
    for ev in events:
        if ev.event_id in kept:
            counts[ev.post] += 1
    selected = {p for p, c in counts.items() if lo <= c <= hi}
    out = [
        ev for ev in events
        if ev.post in selected and (ev.kind is Kind.POST or ev.event_id in kept)
    ]
    return EventLog(out, source_out_of_order=0)


def require_nonempty(log: EventLog) -> EventLog:
    if len(log) == 0:
        raise EmptyDataError("empty log")
    return log
