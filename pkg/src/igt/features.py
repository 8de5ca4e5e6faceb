"""Behaviour feature vectors: Time x PC x Activity statistics per bucket.

Ten activity indicators are enumerated over time frames and PC scopes so
that week, day and session vectors have 40, 28 and 16 components:

* week: 10 indicators x {workhour, afterhour, weekend, whole}
* day: 10 indicators x {workhour, afterhour} + 8 counts on others' PCs
* session: 10 whole-session indicators + 6 session descriptors

File and URL categories come from suffix and keyword lists only; file and
page contents are never read.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CatalogMismatch, EmptyTrainingSet, TooFewInstances
from .ingest import Bucket, EventKind, Granularity, LogEvent, UserProfile

DIMENSIONS = {Granularity.WEEK: 40, Granularity.DAY: 28, Granularity.SESSION: 16}

INDICATORS = (
    "logon_times",
    "file_oper_times",
    "doc_oper_times",
    "exe_oper_times",
    "http_oper_times",
    "job_oper_times",
    "leak_oper_times",
    "email_oper_times",
    "email_mean_size_atts",
    "usb_oper_times",
)
COUNT_INDICATORS = tuple(i for i in INDICATORS if i != "email_mean_size_atts")
SESSION_EXTRAS = (
    "session_duration_hours",
    "start_hour",
    "is_afterhour_start",
    "is_weekend",
    "is_own_pc",
    "n_distinct_pcs",
)


@dataclass(frozen=True)
class CategoryConfig:
    doc_suffixes: tuple[str, ...] = (".doc", ".docx", ".pdf", ".txt")
    exe_suffixes: tuple[str, ...] = (".exe", ".dll", ".bat", ".sh")
    job_keywords: tuple[str, ...] = ("job", "career", "hire", "hiring", "monster", "indeed", "linkedin", "recruit")
    leak_keywords: tuple[str, ...] = ("wikileaks",)
    workhour_start: int = 8
    workhour_end: int = 18  # exclusive: 08:00-17:59

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}

    @classmethod
    def from_json(cls, obj: dict) -> "CategoryConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})


@dataclass(frozen=True)
class FeatureCatalog:
    granularity: Granularity
    names: tuple[str, ...]
    categories: CategoryConfig = CategoryConfig()

    @property
    def dimension(self) -> int:
        return len(self.names)

    def to_json(self) -> dict:
        return {
            "granularity": self.granularity.value,
            "dimension": self.dimension,
            "names": list(self.names),
            "categories": self.categories.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureCatalog":
        cat = cls(Granularity(obj["granularity"]), tuple(obj["names"]), CategoryConfig.from_json(obj["categories"]))
        check_catalog(cat)
        return cat


def build_catalog(granularity, categories: CategoryConfig | None = None) -> FeatureCatalog:
    g = Granularity(granularity)
    if g is Granularity.WEEK:
        names = [f"{ind}@{fr}" for ind in INDICATORS for fr in ("workhour", "afterhour", "weekend", "whole")]
    elif g is Granularity.DAY:
        names = [f"{ind}@{fr}" for ind in INDICATORS for fr in ("workhour", "afterhour")]
        names += [f"{ind}@others_pc" for ind in COUNT_INDICATORS if ind != "email_oper_times"]
    else:
        names = [f"{ind}@session" for ind in INDICATORS] + list(SESSION_EXTRAS)
    cat = FeatureCatalog(g, tuple(names), categories or CategoryConfig())
    check_catalog(cat)
    return cat


def check_catalog(catalog: FeatureCatalog) -> None:
    want = DIMENSIONS[catalog.granularity]
    if catalog.dimension != want or len(set(catalog.names)) != want:
        raise CatalogMismatch(
            f"{catalog.granularity.value} catalog has {catalog.dimension} components, expected {want}"
        )


@dataclass
class FeatureVector:
    user: str
    granularity: Granularity
    window_start: datetime
    values: np.ndarray
    label: bool | None = None
    pc: str | None = None


# --------------------------------------------------------------------------
# extraction


def time_frame(ts: datetime, cfg: CategoryConfig) -> str:
    if ts.weekday() >= 5:
        return "weekend"
    if cfg.workhour_start <= ts.hour < cfg.workhour_end:
        return "workhour"
    return "afterhour"


def _hits(ev: LogEvent, cfg: CategoryConfig) -> list[str]:
    """Count indicators incremented by one event."""
    k = ev.kind
    if k is EventKind.LOGON:
        return ["logon_times"]
    if k is EventKind.DEVICE_CONNECT:
        return ["usb_oper_times"]
    if k is EventKind.FILE_OP:
        name = ev.payload["filename"].lower()
        out = ["file_oper_times"]
        if name.endswith(cfg.doc_suffixes):
            out.append("doc_oper_times")
        elif name.endswith(cfg.exe_suffixes):
            out.append("exe_oper_times")
        return out
    if k is EventKind.HTTP:
        url = ev.payload["url"].lower()
        out = ["http_oper_times"]
        if any(w in url for w in cfg.leak_keywords):
            out.append("leak_oper_times")
        elif any(w in url for w in cfg.job_keywords):
            out.append("job_oper_times")
        return out
    if k is EventKind.EMAIL:
        return ["email_oper_times"]
    return []


def _indicators(events: Iterable[LogEvent], cfg: CategoryConfig) -> dict[str, float]:
    counts = Counter()
    att = []
    for ev in events:
        for ind in _hits(ev, cfg):
            counts[ind] += 1
        if ev.kind is EventKind.EMAIL:
            att.append(ev.payload["attachment_total_size_bytes"])
    vals = {ind: float(counts[ind]) for ind in COUNT_INDICATORS}
    vals["email_mean_size_atts"] = float(np.mean(att)) if att else 0.0
    return vals


def extract_features(bucket: Bucket, profile: UserProfile, catalog: FeatureCatalog) -> FeatureVector:
    check_catalog(catalog)
    if bucket.granularity is not catalog.granularity:
        raise CatalogMismatch(
            f"bucket granularity {bucket.granularity.value} != catalog {catalog.granularity.value}"
        )
    cfg = catalog.categories
    g = catalog.granularity
    vals: dict[str, float] = {}
    if g is Granularity.SESSION:
        for ind, v in _indicators(bucket.events, cfg).items():
            vals[f"{ind}@session"] = v
        start = bucket.window_start
        if bucket.events:
            duration = bucket.meta.get("duration_hours")
            if duration is None:
                duration = (bucket.events[-1].timestamp - bucket.events[0].timestamp).total_seconds() / 3600.0
            pcs = {ev.pc for ev in bucket.events}
        else:
            duration, pcs = 0.0, set()
        vals["session_duration_hours"] = duration
        vals["start_hour"] = start.hour + start.minute / 60.0
        vals["is_afterhour_start"] = float(time_frame(start, cfg) == "afterhour")
        vals["is_weekend"] = float(start.weekday() >= 5)
        pc = bucket.pc if bucket.pc is not None else (next(iter(pcs)) if pcs else "")
        vals["is_own_pc"] = float(pc == profile.own_pc)
        vals["n_distinct_pcs"] = float(len(pcs))
    else:
        frames: dict[str, list[LogEvent]] = {"workhour": [], "afterhour": [], "weekend": []}
        for ev in bucket.events:
            fr = time_frame(ev.timestamp, cfg)
            if g is Granularity.DAY and fr == "weekend":
                fr = "afterhour"  # day vectors have no weekend frame
            frames[fr].append(ev)
        frames["whole"] = list(bucket.events)
        for fr, evs in frames.items():
            for ind, v in _indicators(evs, cfg).items():
                vals[f"{ind}@{fr}"] = v
        others = _indicators([ev for ev in bucket.events if ev.pc != profile.own_pc], cfg)
        for ind, v in others.items():
            vals[f"{ind}@others_pc"] = v
    values = np.array([vals[name] for name in catalog.names], dtype=np.float64)
    return FeatureVector(bucket.user, g, bucket.window_start, values, pc=bucket.pc)


def build_profile(events_of_user: Sequence[LogEvent], until: datetime | None = None) -> UserProfile:
    """Profile with ``own_pc`` = modal logon PC before ``until``.

    Ties go to the lexicographically smallest PC. Falls back to all events
    when the user has no logons in the period.
    """
    if not events_of_user:
        raise EmptyTrainingSet("no events for user")
    user = events_of_user[0].user
    period = [ev for ev in events_of_user if until is None or ev.timestamp < until] or list(events_of_user)
    logons = [ev.pc for ev in period if ev.kind is EventKind.LOGON] or [ev.pc for ev in period]
    counts = Counter(logons)
    best = max(counts.values())
    own = min(pc for pc, c in counts.items() if c == best)
    return UserProfile(user, own, period[0].timestamp, period[-1].timestamp)


# --------------------------------------------------------------------------
# normalization and splitting


@dataclass(frozen=True)
class Normalizer:
    min: np.ndarray
    max: np.ndarray
    granularity: Granularity | None = None

    def to_json(self) -> dict:
        return {
            "min": self.min.tolist(),
            "max": self.max.tolist(),
            "granularity": self.granularity.value if self.granularity else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Normalizer":
        g = Granularity(obj["granularity"]) if obj.get("granularity") else None
        return cls(np.asarray(obj["min"], dtype=np.float64), np.asarray(obj["max"], dtype=np.float64), g)


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64) for v in vectors]
    if not rows:
        raise EmptyTrainingSet("cannot fit a normalizer on zero vectors")
    return np.vstack(rows).astype(np.float64)


def fit_normalizer(train_vectors) -> Normalizer:
    X = _as_matrix(train_vectors)
    g = train_vectors[0].granularity if isinstance(train_vectors[0], FeatureVector) else None
    return Normalizer(X.min(axis=0), X.max(axis=0), g)


def normalize(v, norm: Normalizer):
    """Min-max scale into [0, 1]; constant features map to 0, out-of-range values clamp."""
    x = v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)
    span = norm.max - norm.min
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - norm.min) / safe, 0.0)
    out = np.clip(out, 0.0, 1.0)
    if isinstance(v, FeatureVector):
        return FeatureVector(v.user, v.granularity, v.window_start, out, v.label, v.pc)
    return out


def split_index(n: int, train_fraction: float) -> int:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    # round first so 0.7 * 10 does not ceil to 8
    return math.ceil(round(train_fraction * n, 9))


def chronological_split(items, train_fraction: float = 0.7, min_instances: int = 10):
    """First ceil(f*n) windows train, the rest test; no shuffling.

    ``items`` only need a ``window_start`` attribute. Equal timestamps keep
    their input order.
    """
    ordered = sorted(items, key=lambda it: it.window_start)
    k = split_index(len(ordered), train_fraction)
    train, test = ordered[:k], ordered[k:]
    if len(train) < min_instances or len(test) < min_instances:
        raise TooFewInstances(
            f"split of {len(ordered)} windows gives {len(train)} train / {len(test)} test; "
            f"need at least {min_instances} each"
        )
    return train, test


# --------------------------------------------------------------------------
# feature store


def write_catalog(path, catalog: FeatureCatalog) -> None:
    Path(path).write_text(json.dumps(catalog.to_json(), indent=2, sort_keys=True) + "\n")


def read_catalog(path) -> FeatureCatalog:
    return FeatureCatalog.from_json(json.loads(Path(path).read_text()))


def write_feature_csv(path, vectors: Sequence[FeatureVector], catalog: FeatureCatalog, phases=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "granularity", "window_start", "pc", "phase", "label", *catalog.names])
        for i, v in enumerate(vectors):
            label = "" if v.label is None else int(v.label)
            phase = phases[i] if phases is not None else ""
            w.writerow(
                [v.user, v.granularity.value, v.window_start.isoformat(), v.pc or "", phase, label]
                + [repr(float(x)) for x in v.values]
            )


def read_feature_csv(path) -> tuple[list[FeatureVector], list[str]]:
    vectors, phases = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        n_meta = 6
        for row in r:
            label = None if row[5] == "" else bool(int(row[5]))
            vectors.append(
                FeatureVector(
                    row[0],
                    Granularity(row[1]),
                    datetime.fromisoformat(row[2]),
                    np.array([float(x) for x in row[n_meta:]], dtype=np.float64),
                    label,
                    row[3] or None,
                )
            )
            phases.append(row[4])
    return vectors, phases
