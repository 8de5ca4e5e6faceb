from datetime import datetime, timedelta

import pytest

from igt.ingest import EventKind, LogEvent


def ev(kind, ts, user="U1", pc="PC1", **payload):
    if kind is EventKind.FILE_OP:
        payload.setdefault("filename", "a.txt")
    if kind is EventKind.HTTP:
        payload.setdefault("url", "http://example.com/")
    if kind is EventKind.EMAIL:
        payload.setdefault("attachment_count", 0)
        payload.setdefault("attachment_total_size_bytes", 0)
    if isinstance(ts, str):
        ts = datetime.fromisoformat(ts)
    return LogEvent(kind, ts, user, pc, payload)


@pytest.fixture
def make_event():
    return ev


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Four users over 60 days, one planted exfiltration."""
    from igt.synth import default_plan, synth_generate

    out = tmp_path_factory.mktemp("corpus")
    plan = default_plan(n_users=4, n_days=60, n_malicious=1, seed=3)
    manifest = synth_generate(plan, 3, out)
    return out, manifest


def days(start, n):
    return [start + timedelta(days=i) for i in range(n)]
