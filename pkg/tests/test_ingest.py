import io
from datetime import datetime

import pytest
from hypothesis import given, settings, strategies as st

from igt.errors import EmptyInput, MissingColumn
from igt.ingest import (
    CSV_HEADERS,
    EventKind,
    Granularity,
    LogEvent,
    aggregate,
    event_to_row,
    format_timestamp,
    load_corpus,
    parse_attachments,
    parse_events,
    parse_timestamp,
    read_jsonl,
    sessionize,
    write_jsonl,
)
from conftest import ev


def _csv(source, rows):
    lines = [",".join(CSV_HEADERS[source])] + [",".join(r) for r in rows]
    return ("\n".join(lines) + "\n").encode()


def test_logon_row_maps_fields():
    res = parse_events("logon", _csv("logon", [["{X1}", "01/02/2010 08:01:00", "DTAA/EDB0714", "PC-1337", "Logon"]]))
    (e,) = res.events
    assert e.kind is EventKind.LOGON
    assert (e.user, e.pc, e.event_id) == ("EDB0714", "PC-1337", "{X1}")
    assert e.timestamp == datetime(2010, 1, 2, 8, 1, 0)


def test_bad_date_is_counted_and_skipped():
    rows = [["a", "13/45/2010 08:01:00", "DTAA/U1", "PC1", "Logon"], ["b", "01/02/2010 08:01:00", "DTAA/U1", "PC1", "Logoff"]]
    res = parse_events("logon", _csv("logon", rows))
    assert res.malformed == 1 and res.rows == 2
    assert [e.event_id for e in res.events] == ["b"]


def test_email_attachment_list_totals():
    row = ["e", "01/02/2010 09:00:00", "DTAA/U1", "PC1", "x@y", "", "", "U1@dtaa.com", "1000", "a.pdf(20480);b.doc(30720)", ""]
    (e,) = parse_events("email", _csv("email", [row])).events
    assert e.payload["attachment_count"] == 2
    assert e.payload["attachment_total_size_bytes"] == 51200


def test_attachment_bare_count():
    assert parse_attachments("3") == (3, 0)
    assert parse_attachments("") == (0, 0)


def test_missing_column_and_empty_input():
    with pytest.raises(MissingColumn):
        parse_events("http", b"id,date,user,pc\n")
    with pytest.raises(EmptyInput):
        parse_events("http", b"")


def test_custom_column_map():
    data = b"ident,when,who,host,what\nq,01/04/2010 10:00:00,DTAA/U9,PC9,Connect\n"
    cmap = {"id": "ident", "date": "when", "user": "who", "pc": "host", "activity": "what"}
    (e,) = parse_events("device", io.BytesIO(data), cmap).events
    assert e.kind is EventKind.DEVICE_CONNECT and e.user == "U9"


def test_rows_keep_file_order():
    rows = [[str(i), f"01/0{5 - i}/2010 08:00:00", "DTAA/U1", "PC1", "Logon"] for i in range(3)]
    res = parse_events("logon", _csv("logon", rows))
    assert [e.event_id for e in res.events] == ["0", "1", "2"]


def test_payload_invariants():
    with pytest.raises(ValueError):
        LogEvent(EventKind.FILE_OP, datetime(2010, 1, 1), "U", "P", {})
    with pytest.raises(ValueError):
        LogEvent(EventKind.EMAIL, datetime(2010, 1, 1), "U", "P", {"attachment_count": -1, "attachment_total_size_bytes": 0})


_stamp = st.datetimes(min_value=datetime(2000, 1, 1), max_value=datetime(2030, 12, 31)).map(lambda d: d.replace(microsecond=0))


@given(_stamp)
def test_timestamp_round_trip(ts):
    assert parse_timestamp(format_timestamp(ts)) == ts


_name = st.text(alphabet="ABCDEFGHIJ0123456789", min_size=1, max_size=8)


@st.composite
def _events(draw):
    kind = draw(st.sampled_from(list(EventKind)))
    payload = {}
    if kind is EventKind.FILE_OP:
        payload["filename"] = draw(_name) + ".doc"
    elif kind is EventKind.HTTP:
        payload["url"] = "http://" + draw(_name) + ".com/x"
    elif kind is EventKind.EMAIL:
        sizes = draw(st.lists(st.integers(0, 10**7), max_size=3))
        att = ";".join(f"f{i}.pdf({s})" for i, s in enumerate(sizes))
        payload = {"to": "a@b", "cc": "", "bcc": "", "from": "c@d", "size": draw(st.integers(0, 10**6)), "attachments": att,
                   "attachment_count": len(sizes), "attachment_total_size_bytes": sum(sizes)}
    return LogEvent(kind, draw(_stamp), draw(_name), "PC-" + draw(_name), payload, "{" + draw(_name) + "}")


@settings(max_examples=60)
@given(_events())
def test_serialize_reparse_round_trip(e):
    data = _csv(e.source, [event_to_row(e)])
    (back,) = parse_events(e.source, data).events
    assert back == e


@settings(max_examples=30)
@given(st.lists(_events(), max_size=15))
def test_jsonl_round_trip(tmp_path_factory, events):
    path = tmp_path_factory.mktemp("j") / "e.jsonl"
    write_jsonl(path, events)
    assert read_jsonl(path) == events


# -- sessions -----------------------------------------------------------------


def test_single_session():
    (s,) = sessionize([ev(EventKind.LOGON, "2010-01-04 08:00"), ev(EventKind.FILE_OP, "2010-01-04 09:00"),
                       ev(EventKind.LOGOFF, "2010-01-04 17:00")])
    assert len(s.events) == 3
    assert s.meta["duration_hours"] == 9.0
    assert s.meta["closed_by"] == "logoff" and not s.meta["orphan"]


def test_next_logon_closes_session():
    a, b = sessionize([ev(EventKind.LOGON, "2010-01-04 08:00"), ev(EventKind.LOGON, "2010-01-04 13:00"),
                       ev(EventKind.LOGOFF, "2010-01-04 17:00")])
    assert (a.window_start.hour, a.window_end.hour) == (8, 13)
    assert a.meta["closed_by"] == "next_logon"
    assert b.window_start.hour == 13 and len(b.events) == 2


def test_orphan_session():
    (s,) = sessionize([ev(EventKind.FILE_OP, "2010-01-04 09:00")])
    assert s.meta["orphan"]


def test_sessions_are_per_pc():
    out = sessionize([ev(EventKind.LOGON, "2010-01-04 08:00", pc="A"), ev(EventKind.LOGON, "2010-01-04 08:30", pc="B"),
                      ev(EventKind.FILE_OP, "2010-01-04 09:00", pc="A"), ev(EventKind.LOGOFF, "2010-01-04 10:00", pc="B"),
                      ev(EventKind.LOGOFF, "2010-01-04 17:00", pc="A")])
    assert len(out) == 2
    for s in out:
        assert len({e.pc for e in s.events}) == 1
    assert [len(s.events) for s in out] == [3, 2]


_kinds = st.sampled_from([EventKind.LOGON, EventKind.LOGOFF, EventKind.FILE_OP, EventKind.DEVICE_CONNECT])


@settings(max_examples=60)
@given(st.lists(st.tuples(_kinds, st.integers(0, 14 * 24 * 60), st.sampled_from(["A", "B"])), max_size=40))
def test_session_conservation_and_bounds(spec):
    base = datetime(2010, 1, 4)
    from datetime import timedelta

    events = sorted((ev(k, base + timedelta(minutes=m), pc=pc) for k, m, pc in spec), key=lambda e: e.timestamp)
    out = sessionize(events)
    assert sum(len(s.events) for s in out) == len(events)
    for s in out:
        assert len({e.pc for e in s.events}) == 1
        assert all(s.window_start <= e.timestamp < s.window_end for e in s.events)
        assert [e.timestamp for e in s.events] == sorted(e.timestamp for e in s.events)


# -- windows ------------------------------------------------------------------


def test_day_and_week_buckets():
    events = [ev(EventKind.HTTP, f"2010-01-02 {h:02d}:00") for h in (8, 9, 10)] + [ev(EventKind.HTTP, "2010-01-03 09:00")]
    day = aggregate(events, Granularity.DAY)
    assert sorted(len(b.events) for b in day.values()) == [1, 3]
    week = aggregate(events, Granularity.WEEK)  # Sat and Sun of the week starting Mon 2009-12-28
    (b,) = week.values()
    assert len(b.events) == 4 and b.window_start == datetime(2009, 12, 28)


def test_week_is_monday_anchored():
    week = aggregate([ev(EventKind.HTTP, "2010-01-03 23:59"), ev(EventKind.HTTP, "2010-01-04 00:00")], "week")
    assert sorted(k[1] for k in week) == [datetime(2009, 12, 28), datetime(2010, 1, 4)]


@settings(max_examples=40)
@given(st.lists(st.tuples(st.integers(0, 40 * 24 * 60), st.sampled_from(["U1", "U2"])), max_size=50),
       st.sampled_from(["day", "week"]))
def test_partition_property(spec, gran):
    from datetime import timedelta

    base = datetime(2010, 1, 1)
    events = [ev(EventKind.HTTP, base + timedelta(minutes=m), user=u) for m, u in spec]
    out = aggregate(events, gran)
    got = sorted((e.user, e.timestamp) for b in out.values() for e in b.events)
    assert got == sorted((e.user, e.timestamp) for e in events)
    for b in out.values():
        assert all(b.window_start <= e.timestamp < b.window_end for e in b.events)


def test_load_corpus_matches_manifest_counts(small_corpus):
    path, manifest = small_corpus
    events, stats = load_corpus(path)
    assert len(events) == manifest["n_events"]
    assert all(s["malformed"] == 0 for s in stats.values())
    day = aggregate(events, Granularity.DAY)
    counts = {f"{u}|{ws:%Y-%m-%d}": len(b.events) for (u, ws), b in day.items()}
    assert counts == manifest["event_counts"]


def test_load_corpus_empty_dir(tmp_path):
    with pytest.raises(EmptyInput):
        load_corpus(tmp_path)
