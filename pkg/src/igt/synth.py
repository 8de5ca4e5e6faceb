"""Seeded synthetic corpora in the CERT r4.2 CSV layout.

Each user gets a behaviour profile (Poisson rates per activity during work
hours, plus small chances of evening sessions, USB use, job-site browsing and
visits to a colleague's PC). Planted insider scenarios are injected late in
the period and every event they generate is listed in a ground-truth
manifest.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import InvalidPlan
from .ingest import SOURCES, EventKind, LogEvent, parse_attachments, write_source_csv

SCENARIO_KINDS = ("data-exfiltration", "masquerade", "job-hunting")
START = datetime(2010, 1, 4)  # a Monday

_DOMAINS = ("google.com", "bbc.co.uk", "cnn.com", "wikipedia.org", "weather.com", "amazon.com", "espn.com",
            "nytimes.com", "yahoo.com", "dtaa.com")
_JOB_SITES = ("monster.com", "indeed.com", "careerbuilder.com", "linkedin.com/jobs")
_DOC = (".doc", ".docx", ".pdf", ".txt")
_OTHER = (".xls", ".jpg", ".zip", ".csv")
_EXE = (".exe", ".dll")


@dataclass
class UserBehavior:
    """Daily activity rates for one user (Poisson means unless noted)."""

    logon_rate: float = 1.2
    file_rate: float = 8.0
    doc_share: float = 0.5  # probabilities below
    exe_share: float = 0.05
    http_rate: float = 20.0
    email_rate: float = 6.0
    attach_prob: float = 0.3
    usb_prob: float = 0.1
    job_prob: float = 0.05
    evening_prob: float = 0.08
    weekend_prob: float = 0.05
    visit_prob: float = 0.04

    @classmethod
    def draw(cls, rng) -> "UserBehavior":
        return cls(
            logon_rate=float(rng.uniform(0.3, 1.5)),
            file_rate=float(rng.uniform(4, 14)),
            doc_share=float(rng.uniform(0.3, 0.7)),
            exe_share=float(rng.uniform(0.02, 0.1)),
            http_rate=float(rng.uniform(10, 35)),
            email_rate=float(rng.uniform(3, 10)),
            attach_prob=float(rng.uniform(0.1, 0.4)),
            usb_prob=float(rng.uniform(0.02, 0.25)),
            job_prob=float(rng.uniform(0.01, 0.08)),
            evening_prob=float(rng.uniform(0.02, 0.12)),
            weekend_prob=float(rng.uniform(0.0, 0.08)),
            visit_prob=float(rng.uniform(0.01, 0.06)),
        )


@dataclass(frozen=True)
class PlantedScenario:
    user: str
    first_day: int  # day offsets from the start, inclusive
    last_day: int
    kind: str
    active_days: int = 7


@dataclass
class ScenarioPlan:
    n_users: int = 20
    n_days: int = 120
    users: list = field(default_factory=list)
    behaviors: dict = field(default_factory=dict)
    scenarios: list = field(default_factory=list)
    test_fraction: float = 0.2  # planted activity must fall in this trailing share of days
    start: datetime = START

    def validate(self) -> None:
        if self.n_users < 1 or self.n_days < 14:
            raise InvalidPlan("need at least one user and 14 days")
        if len(self.users) != self.n_users or len(set(self.users)) != self.n_users:
            raise InvalidPlan("users must be n_users distinct ids")
        bad = [u for u in self.users if u not in self.behaviors]
        if bad:
            raise InvalidPlan(f"no behaviour profile for {bad[:3]}")
        earliest = self.n_days - int(round(self.n_days * self.test_fraction))
        malicious = {s.user for s in self.scenarios}
        if len(malicious) > max(1, self.n_users // 10):
            raise InvalidPlan("at most 10% of users may be malicious")
        for s in self.scenarios:
            if s.kind not in SCENARIO_KINDS:
                raise InvalidPlan(f"unknown scenario kind {s.kind!r}")
            if s.user not in self.users:
                raise InvalidPlan(f"scenario user {s.user} not in plan")
            if not earliest <= s.first_day <= s.last_day < self.n_days:
                raise InvalidPlan(f"scenario for {s.user} must lie within days [{earliest}, {self.n_days})")

    def to_json(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_days": self.n_days,
            "start": self.start.isoformat(),
            "test_fraction": self.test_fraction,
            "users": list(self.users),
            "behaviors": {u: asdict(b) for u, b in sorted(self.behaviors.items())},
            "scenarios": [asdict(s) for s in self.scenarios],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioPlan":
        return cls(
            obj["n_users"], obj["n_days"], list(obj["users"]),
            {u: UserBehavior(**b) for u, b in obj["behaviors"].items()},
            [PlantedScenario(**s) for s in obj["scenarios"]],
            obj.get("test_fraction", 0.2), datetime.fromisoformat(obj.get("start", START.isoformat())),
        )


def _user_ids(n, rng) -> list[str]:
    ids: set = set()
    letters = np.array(list(string.ascii_uppercase))
    while len(ids) < n:
        ids.add("".join(rng.choice(letters, 3)) + f"{int(rng.integers(0, 10000)):04d}")
    return sorted(ids)


def default_plan(n_users: int = 20, n_days: int = 120, n_malicious: int = 2, seed: int = 0) -> ScenarioPlan:
    """Random users and profiles; malicious users cycle through the scenario kinds."""
    rng = np.random.default_rng(seed)
    users = _user_ids(n_users, rng)
    behaviors = {u: UserBehavior.draw(rng) for u in users}
    plan = ScenarioPlan(n_users, n_days, users, behaviors)
    first = n_days - int(round(n_days * plan.test_fraction))
    bad = rng.choice(n_users, size=n_malicious, replace=False) if n_malicious else []
    for k, ui in enumerate(sorted(int(i) for i in bad)):
        start = first + int(rng.integers(0, 4))
        plan.scenarios.append(PlantedScenario(users[ui], start, n_days - 1, SCENARIO_KINDS[k % len(SCENARIO_KINDS)]))
    plan.validate()
    return plan


# --------------------------------------------------------------------------
# event generation


class _Day:
    """Collects the events of one user-day; ``mal`` marks planted events."""

    def __init__(self, user, rng):
        self.user, self.rng = user, rng
        self.events: list = []

    def add(self, kind, ts, pc, payload=None, mal=False):
        self.events.append((ts, kind, pc, payload or {}, mal))

    def times(self, lo: datetime, hi: datetime, n: int):
        span = (hi - lo).total_seconds()
        return [lo + timedelta(seconds=int(s)) for s in np.sort(self.rng.uniform(0, span, n))]

    def session(self, pc, lo, hi, mal=False):
        self.add(EventKind.LOGON, lo, pc, mal=mal)
        self.add(EventKind.LOGOFF, hi, pc, mal=mal)

    def files(self, pc, lo, hi, n, doc_share, exe_share, mal=False):
        for ts in self.times(lo, hi, n):
            u = self.rng.random()
            pool = _DOC if u < doc_share else (_EXE if u < doc_share + exe_share else _OTHER)
            name = f"{self.rng.integers(16**8):08X}{pool[self.rng.integers(len(pool))]}"
            self.add(EventKind.FILE_OP, ts, pc, {"filename": name}, mal)

    def http(self, pc, lo, hi, n, sites=_DOMAINS, mal=False):
        for ts in self.times(lo, hi, n):
            site = sites[self.rng.integers(len(sites))]
            self.add(EventKind.HTTP, ts, pc, {"url": f"http://{site}/{self.rng.integers(10**6)}"}, mal)

    def usb(self, pc, lo, hi, n, mal=False):
        for ts in self.times(lo, hi - timedelta(minutes=10), n):
            self.add(EventKind.DEVICE_CONNECT, ts, pc, mal=mal)
            self.add(EventKind.DEVICE_DISCONNECT, ts + timedelta(minutes=int(self.rng.integers(1, 10))), pc, mal=mal)

    def emails(self, pc, lo, hi, n, attach_prob, big=False, mal=False):
        for ts in self.times(lo, hi, n):
            n_att = int(self.rng.integers(1, 4)) if big or self.rng.random() < attach_prob else 0
            scale = 2_000_000 if big else 200_000
            atts = ";".join(f"file{i}.pdf({int(self.rng.integers(10_000, scale))})" for i in range(n_att))
            to = f"{self.rng.integers(10**4)}@{'gmail.com' if big else 'dtaa.com'}"
            self.add(EventKind.EMAIL, ts, pc, {"to": to, "cc": "", "bcc": "", "from": f"{self.user}@dtaa.com",
                                               "size": int(self.rng.integers(5_000, 60_000)), "attachments": atts},
                     mal)


def _normal_day(d: _Day, day: datetime, b: UserBehavior, own_pc: str, other_pc: str) -> None:
    rng = d.rng
    weekend = day.weekday() >= 5
    if weekend and rng.random() >= b.weekend_prob:
        return
    h = lambda hh, mm=0: day + timedelta(hours=hh, minutes=mm)
    if weekend:
        lo, hi = h(10, int(rng.integers(0, 60))), h(12, int(rng.integers(0, 60)))
        d.session(own_pc, lo, hi)
        d.http(own_pc, lo, hi, int(rng.poisson(b.http_rate / 4)))
        d.files(own_pc, lo, hi, int(rng.poisson(b.file_rate / 4)), b.doc_share, b.exe_share)
        return
    lo = h(8, int(rng.integers(0, 50)))
    hi = h(17, int(rng.integers(0, 55)))
    d.session(own_pc, lo, hi)
    for ts in d.times(lo + timedelta(hours=1), hi - timedelta(hours=1), int(rng.poisson(b.logon_rate))):
        d.add(EventKind.LOGOFF, ts, own_pc)
        d.add(EventKind.LOGON, ts + timedelta(minutes=int(rng.integers(2, 50))), own_pc)
    d.files(own_pc, lo, hi, int(rng.poisson(b.file_rate)), b.doc_share, b.exe_share)
    d.http(own_pc, lo, hi, int(rng.poisson(b.http_rate)))
    d.emails(own_pc, lo, hi, int(rng.poisson(b.email_rate)), b.attach_prob)
    if rng.random() < b.usb_prob:
        d.usb(own_pc, lo, hi, int(rng.integers(1, 3)))
    if rng.random() < b.job_prob:
        d.http(own_pc, lo, hi, int(rng.integers(1, 4)), _JOB_SITES)
    if rng.random() < b.visit_prob:
        vlo = h(13, int(rng.integers(0, 50)))
        vhi = vlo + timedelta(minutes=int(rng.integers(10, 60)))
        d.session(other_pc, vlo, vhi)
        d.files(other_pc, vlo, vhi, int(rng.integers(1, 4)), b.doc_share, b.exe_share)
    if rng.random() < b.evening_prob:
        elo = h(19, int(rng.integers(0, 60)))
        ehi = elo + timedelta(minutes=int(rng.integers(15, 90)))
        d.session(own_pc, elo, ehi)
        d.http(own_pc, elo, ehi, int(rng.poisson(3)))
        d.files(own_pc, elo, ehi, int(rng.poisson(1)), b.doc_share, b.exe_share)


def _planted_day(d: _Day, day: datetime, kind: str, b: UserBehavior, own_pc: str, victim_pc: str) -> None:
    rng = d.rng
    if kind == "data-exfiltration":
        lo = day + timedelta(hours=21, minutes=int(rng.integers(0, 40)))
        hi = lo + timedelta(minutes=int(rng.integers(60, 120)))
        d.session(own_pc, lo, hi, mal=True)
        d.usb(own_pc, lo, hi, int(rng.integers(3, 7)), mal=True)
        d.files(own_pc, lo, hi, int(rng.integers(20, 40)), 0.9, 0.0, mal=True)
        d.http(own_pc, lo, hi, int(rng.integers(5, 12)), ("wikileaks.org",), mal=True)
    elif kind == "masquerade":
        lo = day + timedelta(hours=20, minutes=int(rng.integers(0, 50)))
        hi = lo + timedelta(minutes=int(rng.integers(60, 150)))
        d.session(victim_pc, lo, hi, mal=True)
        d.files(victim_pc, lo, hi, int(rng.integers(15, 35)), 0.5, 0.3, mal=True)
        d.usb(victim_pc, lo, hi, int(rng.integers(2, 5)), mal=True)
        d.http(victim_pc, lo, hi, int(rng.integers(5, 15)), mal=True)
    elif kind == "job-hunting":
        lo = day + timedelta(hours=9, minutes=int(rng.integers(0, 50)))
        hi = day + timedelta(hours=16, minutes=int(rng.integers(0, 50)))
        d.http(own_pc, lo, hi, int(rng.integers(20, 40)), _JOB_SITES, mal=True)
        d.emails(own_pc, lo, hi, int(rng.integers(4, 8)), 1.0, big=True, mal=True)
        d.usb(own_pc, lo, hi, int(rng.integers(2, 5)), mal=True)
        d.files(own_pc, lo, hi, int(rng.integers(15, 30)), 0.9, 0.0, mal=True)


def _event_ids(n: int, rng) -> list[str]:
    chars = np.array(list(string.ascii_uppercase + string.digits))
    raw = rng.integers(0, len(chars), size=(n, 20))
    return ["{" + f"{''.join(r[:4])}-{''.join(r[4:12])}-{''.join(r[12:])}" + "}" for r in chars[raw]]


def synth_events(plan: ScenarioPlan, seed: int = 0) -> tuple[list[LogEvent], set]:
    """All events of the plan in timestamp order, plus the ids of planted events."""
    plan.validate()
    users = list(plan.users)
    pcs = {u: f"PC-{1000 + 37 * i:04d}" for i, u in enumerate(users)}
    planted_days: dict = {}
    for k, s in enumerate(plan.scenarios):
        srng = np.random.default_rng([seed, 7, k])
        span = np.arange(s.first_day, s.last_day + 1)
        weekdays = [x for x in span if (plan.start + timedelta(days=int(x))).weekday() < 5]
        pick = srng.choice(weekdays, size=min(s.active_days, len(weekdays)), replace=False)
        for x in sorted(int(p) for p in pick):
            planted_days[(s.user, x)] = s.kind
    raw = []
    for ui, u in enumerate(users):
        rng = np.random.default_rng([seed, ui])
        b = plan.behaviors[u]
        colleague = users[(ui + 1) % len(users)] if len(users) > 1 else u
        for x in range(plan.n_days):
            day = plan.start + timedelta(days=x)
            d = _Day(u, rng)
            _normal_day(d, day, b, pcs[u], pcs[colleague])
            if (u, x) in planted_days:
                _planted_day(d, day, planted_days[(u, x)], b, pcs[u], pcs[colleague])
            raw.extend((ts, ui, kind, pc, payload, mal) for ts, kind, pc, payload, mal in d.events)
    raw.sort(key=lambda r: (r[0], r[1]))
    ids = _event_ids(len(raw), np.random.default_rng([seed, 99]))
    events, malicious = [], set()
    for eid, (ts, ui, kind, pc, payload, mal) in zip(ids, raw):
        if kind is EventKind.EMAIL:
            n_att, size = parse_attachments(payload["attachments"])
            payload = {**payload, "attachment_count": n_att, "attachment_total_size_bytes": size}
        events.append(LogEvent(kind, ts, users[ui], pc, payload, eid))
        if mal:
            malicious.add(eid)
    return events, malicious


def synth_generate(plan: ScenarioPlan, seed: int, out_dir) -> dict:
    """Write the five source CSVs and ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events, malicious = synth_events(plan, seed)
    for source in SOURCES:
        write_source_csv(out / f"{source}.csv", source, [e for e in events if e.source == source])
    counts = Counter((e.user, e.timestamp.strftime("%Y-%m-%d")) for e in events)
    mal_windows = sorted({(e.user, e.timestamp.strftime("%Y-%m-%d")) for e in events if e.event_id in malicious})
    manifest = {
        "seed": seed,
        "plan": plan.to_json(),
        "malicious_users": sorted({s.user for s in plan.scenarios}),
        "malicious_event_ids": sorted(malicious),
        "malicious_days": [list(w) for w in mal_windows],
        "event_counts": {f"{u}|{day}": n for (u, day), n in sorted(counts.items())},
        "n_events": len(events),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def read_manifest(data_dir) -> dict | None:
    path = Path(data_dir) / "manifest.json"
    return json.loads(path.read_text()) if path.exists() else None
