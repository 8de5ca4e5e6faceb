"""Parsing of CERT-style audit logs into normalized events, plus sessionization
and time-window bucketing.

The five CERT sources (logon, device, file, email, http) share the leading
``id,date,user,pc`` columns; the rest is source specific. Column names are
configuration: pass a ``column_map`` to adapt to other releases.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import IO, Iterable, Mapping

from .errors import EmptyInput, MissingColumn

logger = logging.getLogger(__name__)

DATE_FORMAT = "%m/%d/%Y %H:%M:%S"


class EventKind(str, enum.Enum):
    LOGON = "Logon"
    LOGOFF = "Logoff"
    DEVICE_CONNECT = "DeviceConnect"
    DEVICE_DISCONNECT = "DeviceDisconnect"
    FILE_OP = "FileOp"
    EMAIL = "Email"
    HTTP = "Http"


class Granularity(str, enum.Enum):
    WEEK = "week"
    DAY = "day"
    SESSION = "session"


GRANULARITIES = (Granularity.WEEK, Granularity.DAY, Granularity.SESSION)

SOURCES = ("logon", "device", "file", "email", "http")

# logical field -> CSV header, CERT r4.2 layout
DEFAULT_COLUMN_MAPS: dict[str, dict[str, str]] = {
    "logon": {"id": "id", "date": "date", "user": "user", "pc": "pc", "activity": "activity"},
    "device": {"id": "id", "date": "date", "user": "user", "pc": "pc", "activity": "activity"},
    "file": {"id": "id", "date": "date", "user": "user", "pc": "pc", "filename": "filename", "content": "content"},
    "email": {
        "id": "id", "date": "date", "user": "user", "pc": "pc", "to": "to", "cc": "cc",
        "bcc": "bcc", "from": "from", "size": "size", "attachments": "attachments", "content": "content",
    },
    "http": {"id": "id", "date": "date", "user": "user", "pc": "pc", "url": "url", "content": "content"},
}

# columns whose absence is tolerated (content is never inspected)
_OPTIONAL = {"content", "cc", "bcc"}

_REQUIRED_PAYLOAD = {
    EventKind.FILE_OP: ("filename",),
    EventKind.HTTP: ("url",),
    EventKind.EMAIL: ("attachment_count", "attachment_total_size_bytes"),
}


@dataclass(frozen=True)
class LogEvent:
    kind: EventKind
    timestamp: datetime
    user: str
    pc: str
    payload: dict = field(default_factory=dict)
    event_id: str = ""

    def __post_init__(self):
        for key in _REQUIRED_PAYLOAD.get(self.kind, ()):
            if key not in self.payload:
                raise ValueError(f"{self.kind.value} event missing payload key {key!r}")
        if self.kind is EventKind.EMAIL:
            if self.payload["attachment_count"] < 0 or self.payload["attachment_total_size_bytes"] < 0:
                raise ValueError("attachment statistics must be non-negative")

    @property
    def source(self) -> str:
        return _KIND_SOURCE[self.kind]

    def to_json(self) -> dict:
        return {
            "id": self.event_id,
            "kind": self.kind.value,
            "timestamp": self.timestamp.isoformat(),
            "user": self.user,
            "pc": self.pc,
            "payload": self.payload,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LogEvent":
        return cls(
            kind=EventKind(obj["kind"]),
            timestamp=datetime.fromisoformat(obj["timestamp"]),
            user=obj["user"],
            pc=obj["pc"],
            payload=dict(obj.get("payload", {})),
            event_id=obj.get("id", ""),
        )


_KIND_SOURCE = {
    EventKind.LOGON: "logon",
    EventKind.LOGOFF: "logon",
    EventKind.DEVICE_CONNECT: "device",
    EventKind.DEVICE_DISCONNECT: "device",
    EventKind.FILE_OP: "file",
    EventKind.EMAIL: "email",
    EventKind.HTTP: "http",
}


@dataclass(frozen=True)
class UserProfile:
    user: str
    own_pc: str
    first_seen: datetime | None = None
    last_seen: datetime | None = None


@dataclass(frozen=True)
class Bucket:
    user: str
    granularity: Granularity
    window_start: datetime
    window_end: datetime
    events: tuple[LogEvent, ...]
    meta: dict = field(default_factory=dict)

    @property
    def pc(self) -> str | None:
        return self.meta.get("pc")


@dataclass
class ParseResult:
    events: list[LogEvent]
    malformed: int = 0
    rows: int = 0


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text.strip(), DATE_FORMAT)


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(DATE_FORMAT)


def _strip_domain(user: str) -> str:
    user = user.strip()
    return user.rsplit("/", 1)[-1] if "/" in user else user


def parse_attachments(text: str) -> tuple[int, int]:
    """Return ``(count, total_bytes)`` for an email attachment column.

    Accepts either a bare count (r4.2) or a ``;``-separated list of
    ``name(size)`` entries (later releases). A bare count carries no sizes.
    """
    text = (text or "").strip()
    if not text:
        return 0, 0
    if text.isdigit():
        return int(text), 0
    count = total = 0
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        count += 1
        if item.endswith(")") and "(" in item:
            size = item[item.rindex("(") + 1:-1]
            total += int(size)
    return count, total


def _row_to_event(source: str, row: dict, cmap: Mapping[str, str]) -> LogEvent:
    get = lambda key: row.get(cmap[key], "") if key in cmap else ""
    ts = parse_timestamp(get("date"))
    user = _strip_domain(get("user"))
    pc = get("pc").strip()
    if not user or not pc:
        raise ValueError("empty user or pc")
    eid = get("id").strip()
    payload: dict = {}
    if source == "logon":
        act = get("activity").strip()
        kinds = {"Logon": EventKind.LOGON, "Logoff": EventKind.LOGOFF}
        kind = kinds[act]
    elif source == "device":
        act = get("activity").strip()
        kinds = {"Connect": EventKind.DEVICE_CONNECT, "Disconnect": EventKind.DEVICE_DISCONNECT}
        kind = kinds[act]
    elif source == "file":
        kind = EventKind.FILE_OP
        filename = get("filename").strip()
        if not filename:
            raise ValueError("empty filename")
        payload["filename"] = filename
    elif source == "http":
        kind = EventKind.HTTP
        url = get("url").strip()
        if not url:
            raise ValueError("empty url")
        payload["url"] = url
    elif source == "email":
        kind = EventKind.EMAIL
        raw_att = get("attachments").strip()
        n_att, att_bytes = parse_attachments(raw_att)
        size = get("size").strip()
        payload.update(
            {
                "to": get("to").strip(),
                "cc": get("cc").strip(),
                "bcc": get("bcc").strip(),
                "from": get("from").strip(),
                "size": int(size) if size else 0,
                "attachments": raw_att,
                "attachment_count": n_att,
                "attachment_total_size_bytes": att_bytes,
            }
        )
    else:
        raise ValueError(f"unknown source {source!r}")
    return LogEvent(kind=kind, timestamp=ts, user=user, pc=pc, payload=payload, event_id=eid)


def _as_text(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8", newline="")


def parse_events(source_kind: str, stream, column_map: Mapping[str, str] | None = None) -> ParseResult:
    """Parse one header-prefixed CSV source into events, in file order.

    Malformed rows (bad dates, unknown activities, missing values) are
    skipped and counted in ``ParseResult.malformed``.
    """
    if source_kind not in DEFAULT_COLUMN_MAPS:
        raise ValueError(f"unknown source kind {source_kind!r}")
    cmap = dict(DEFAULT_COLUMN_MAPS[source_kind])
    if column_map:
        cmap.update(column_map)
    reader = csv.DictReader(_as_text(stream))
    header = reader.fieldnames
    if not header:
        raise EmptyInput(f"{source_kind}: no header row")
    missing = [col for key, col in cmap.items() if col not in header and key not in _OPTIONAL]
    if missing:
        raise MissingColumn(f"{source_kind}: header lacks {missing}")
    cmap = {k: v for k, v in cmap.items() if v in header}
    result = ParseResult(events=[])
    for row in reader:
        result.rows += 1
        try:
            result.events.append(_row_to_event(source_kind, row, cmap))
        except (ValueError, KeyError, TypeError):
            result.malformed += 1
    if result.malformed:
        logger.warning("%s: skipped %d malformed rows of %d", source_kind, result.malformed, result.rows)
    return result


CSV_HEADERS = {
    "logon": ["id", "date", "user", "pc", "activity"],
    "device": ["id", "date", "user", "pc", "activity"],
    "file": ["id", "date", "user", "pc", "filename", "content"],
    "email": ["id", "date", "user", "pc", "to", "cc", "bcc", "from", "size", "attachments", "content"],
    "http": ["id", "date", "user", "pc", "url", "content"],
}


def event_to_row(event: LogEvent, domain: str = "DTAA") -> list[str]:
    """Serialize an event back to its source CSV row (default r4.2 layout)."""
    base = [event.event_id, format_timestamp(event.timestamp), f"{domain}/{event.user}", event.pc]
    p = event.payload
    kind = event.kind
    if kind in (EventKind.LOGON, EventKind.LOGOFF):
        return base + [kind.value]
    if kind in (EventKind.DEVICE_CONNECT, EventKind.DEVICE_DISCONNECT):
        return base + ["Connect" if kind is EventKind.DEVICE_CONNECT else "Disconnect"]
    if kind is EventKind.FILE_OP:
        return base + [p["filename"], ""]
    if kind is EventKind.HTTP:
        return base + [p["url"], ""]
    return base + [p["to"], p["cc"], p["bcc"], p["from"], str(p["size"]), p["attachments"], ""]


def write_source_csv(path, source_kind: str, events: Iterable[LogEvent]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADERS[source_kind])
        for ev in events:
            w.writerow(event_to_row(ev))


def load_corpus(data_dir, column_maps: Mapping[str, Mapping[str, str]] | None = None) -> tuple[list[LogEvent], dict]:
    """Parse every present source file under ``data_dir`` and merge them.

    The merge is a stable sort on ``(timestamp, source, row)`` so the result
    does not depend on the order sources were parsed in.
    """
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise EmptyInput(f"data directory {data_dir} does not exist")
    column_maps = column_maps or {}
    tagged = []
    stats = {}
    for s_idx, source in enumerate(SOURCES):
        path = data_dir / f"{source}.csv"
        if not path.exists():
            continue
        with open(path, "rb") as fh:
            res = parse_events(source, fh, column_maps.get(source))
        stats[source] = {"rows": res.rows, "events": len(res.events), "malformed": res.malformed}
        tagged.extend(((ev.timestamp, s_idx, r_idx), ev) for r_idx, ev in enumerate(res.events))
    if not stats:
        raise EmptyInput(f"no source CSVs ({', '.join(SOURCES)}) found in {data_dir}")
    tagged.sort(key=lambda t: t[0])
    events = [ev for _, ev in tagged]
    if not events:
        raise EmptyInput(f"no parseable events in {data_dir}")
    return events, stats


def write_jsonl(path, events: Iterable[LogEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_jsonl(path) -> list[LogEvent]:
    with open(path, encoding="utf-8") as fh:
        return [LogEvent.from_json(json.loads(line)) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# sessions and windows


def sessionize(events_of_user: list[LogEvent]) -> list[Bucket]:
    """Split one user's time-ordered events into logon sessions.

    A session opens at a Logon and closes at the first Logoff on the same
    PC, else at the next Logon on that PC, else at the end of the data.
    Other events join the open session on their PC. Events on a PC with no
    open session are collected into an orphan session (``meta['orphan']``).
    """
    if not events_of_user:
        return []
    user = events_of_user[0].user
    open_sessions: dict[str, dict] = {}
    done: list[dict] = []

    def close(pc, end, closed_by, end_exclusive):
        sess = open_sessions.pop(pc)
        sess["end"] = end
        # a same-second next logon must not leave the closing session empty-ranged
        sess["window_end"] = max(end_exclusive, sess["events"][-1].timestamp + timedelta(seconds=1))
        sess["closed_by"] = closed_by
        done.append(sess)

    def start(pc, ts, orphan):
        open_sessions[pc] = {"pc": pc, "start": ts, "events": [], "orphan": orphan}

    for ev in events_of_user:
        pc = ev.pc
        if ev.kind is EventKind.LOGON:
            if pc in open_sessions:
                close(pc, ev.timestamp, "next_logon", ev.timestamp)
            start(pc, ev.timestamp, orphan=False)
            open_sessions[pc]["events"].append(ev)
        elif ev.kind is EventKind.LOGOFF:
            if pc not in open_sessions:
                start(pc, ev.timestamp, orphan=True)
            open_sessions[pc]["events"].append(ev)
            close(pc, ev.timestamp, "logoff", ev.timestamp + timedelta(seconds=1))
        else:
            if pc not in open_sessions:
                start(pc, ev.timestamp, orphan=True)
            open_sessions[pc]["events"].append(ev)
    for pc in sorted(open_sessions):
        last = open_sessions[pc]["events"][-1].timestamp
        close(pc, last, "end_of_data", last + timedelta(seconds=1))

    done.sort(key=lambda s: (s["start"], s["pc"]))
    buckets = []
    for s in done:
        meta = {
            "pc": s["pc"],
            "orphan": s["orphan"],
            "closed_by": s["closed_by"],
            "duration_hours": (s["end"] - s["start"]).total_seconds() / 3600.0,
        }
        buckets.append(
            Bucket(user, Granularity.SESSION, s["start"], s["window_end"], tuple(s["events"]), meta)
        )
    return buckets


def window_start(ts: datetime, granularity: Granularity) -> datetime:
    day = datetime(ts.year, ts.month, ts.day)
    if granularity is Granularity.DAY:
        return day
    if granularity is Granularity.WEEK:
        return day - timedelta(days=day.weekday())
    raise ValueError("session windows are data dependent; use sessionize")


def aggregate(events: Iterable[LogEvent], granularity: Granularity | str) -> dict[tuple, Bucket]:
    """Bucket events per user per window.

    Keys are ``(user, window_start)`` for day and week windows. Concurrent
    sessions on different PCs can share a start second, so session keys are
    ``(user, window_start, pc)``.
    """
    granularity = Granularity(granularity)
    by_user: dict[str, list[LogEvent]] = defaultdict(list)
    for ev in events:
        by_user[ev.user].append(ev)
    out: dict[tuple, Bucket] = {}
    for user in sorted(by_user):
        evs = sorted(by_user[user], key=lambda e: e.timestamp)  # stable: keeps input order on ties
        if granularity is Granularity.SESSION:
            for b in sessionize(evs):
                out[(user, b.window_start, b.pc)] = b
            continue
        span = timedelta(days=7 if granularity is Granularity.WEEK else 1)
        groups: dict[datetime, list[LogEvent]] = defaultdict(list)
        for ev in evs:
            groups[window_start(ev.timestamp, granularity)].append(ev)
        for ws in sorted(groups):
            out[(user, ws)] = Bucket(user, granularity, ws, ws + span, tuple(groups[ws]))
    return out


def user_pcs(events: Iterable[LogEvent]) -> dict[str, Counter]:
    pcs: dict[str, Counter] = defaultdict(Counter)
    for ev in events:
        pcs[ev.user][ev.pc] += 1
    return pcs


def source_paths(data_dir) -> dict[str, str]:
    data_dir = Path(data_dir)
    return {s: os.fspath(data_dir / f"{s}.csv") for s in SOURCES if (data_dir / f"{s}.csv").exists()}
