from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from igt.errors import CatalogMismatch, EmptyTrainingSet, TooFewInstances
from igt.features import (
    DIMENSIONS,
    FeatureCatalog,
    FeatureVector,
    build_catalog,
    build_profile,
    chronological_split,
    extract_features,
    fit_normalizer,
    normalize,
    read_catalog,
    read_feature_csv,
    write_catalog,
    write_feature_csv,
)
from igt.ingest import Bucket, EventKind, Granularity, UserProfile, aggregate
from conftest import ev

PROFILE = UserProfile("U1", "PC1", datetime(2010, 1, 1), datetime(2010, 3, 1))


def _bucket(events, gran):
    (b,) = aggregate(events, gran).values()
    return b


@pytest.mark.parametrize("gran", list(Granularity))
def test_dimensions(gran):
    assert build_catalog(gran).dimension == DIMENSIONS[gran] == {"week": 40, "day": 28, "session": 16}[gran.value]


def test_catalog_mismatch():
    cat = build_catalog("day")
    with pytest.raises(CatalogMismatch):
        FeatureCatalog.from_json({**cat.to_json(), "names": list(cat.names[:-1])})
    b = Bucket("U1", Granularity.WEEK, datetime(2010, 1, 4), datetime(2010, 1, 11), ())
    with pytest.raises(CatalogMismatch):
        extract_features(b, PROFILE, cat)


def test_empty_day_bucket_is_zero():
    b = Bucket("U1", Granularity.DAY, datetime(2010, 1, 4), datetime(2010, 1, 5), ())
    v = extract_features(b, PROFILE, build_catalog("day"))
    assert v.values.shape == (28,) and not v.values.any()


def test_two_workhour_logons():
    cat = build_catalog("day")
    b = _bucket([ev(EventKind.LOGON, "2010-01-04 08:30"), ev(EventKind.LOGON, "2010-01-04 12:00")], "day")
    v = extract_features(b, PROFILE, cat)
    i = cat.names.index("logon_times@workhour")
    assert v.values[i] == 2 and v.values.sum() == 2


def test_week_doc_frames():
    cat = build_catalog("week")
    events = [ev(EventKind.FILE_OP, f"2010-01-0{d} {h}:00", filename="r.docx") for d, h in ((4, 10), (5, 11), (6, 17))]
    events += [ev(EventKind.FILE_OP, f"2010-01-09 {h}:00", filename="s.pdf") for h in (10, 20)]  # Saturday
    v = extract_features(_bucket(events, "week"), PROFILE, cat)
    got = [v.values[cat.names.index(f"doc_oper_times@{fr}")] for fr in ("workhour", "afterhour", "weekend", "whole")]
    assert got == [3, 0, 2, 5]


def test_workhour_boundaries():
    cat = build_catalog("day")
    w, a = cat.names.index("http_oper_times@workhour"), cat.names.index("http_oper_times@afterhour")
    for hhmm, frame in (("07:59", a), ("08:00", w), ("17:59", w), ("18:00", a)):
        v = extract_features(_bucket([ev(EventKind.HTTP, f"2010-01-04 {hhmm}")], "day"), PROFILE, cat)
        assert v.values[frame] == 1, hhmm


def test_categories_and_others_pc():
    cat = build_catalog("day")
    events = [
        ev(EventKind.HTTP, "2010-01-04 10:00", url="http://wikileaks.org/x"),
        ev(EventKind.HTTP, "2010-01-04 10:05", url="http://jobs.monster.com/"),
        ev(EventKind.FILE_OP, "2010-01-04 10:10", pc="PC9", filename="tool.EXE"),
        ev(EventKind.DEVICE_CONNECT, "2010-01-04 19:00", pc="PC9"),
        ev(EventKind.EMAIL, "2010-01-04 11:00", attachment_count=2, attachment_total_size_bytes=300),
        ev(EventKind.EMAIL, "2010-01-04 11:30"),
    ]
    v = dict(zip(cat.names, extract_features(_bucket(events, "day"), PROFILE, cat).values))
    assert v["leak_oper_times@workhour"] == 1 and v["job_oper_times@workhour"] == 1
    assert v["http_oper_times@workhour"] == 2
    assert v["exe_oper_times@workhour"] == 1 and v["exe_oper_times@others_pc"] == 1
    assert v["usb_oper_times@afterhour"] == 1 and v["usb_oper_times@others_pc"] == 1
    assert v["email_mean_size_atts@workhour"] == 150
    assert v["file_oper_times@others_pc"] == 1


def test_session_descriptors():
    cat = build_catalog("session")
    events = [ev(EventKind.LOGON, "2010-01-09 20:00", pc="PC2"), ev(EventKind.HTTP, "2010-01-09 20:30", pc="PC2"),
              ev(EventKind.LOGOFF, "2010-01-09 21:30", pc="PC2")]
    (b,) = aggregate(events, "session").values()
    v = dict(zip(cat.names, extract_features(b, PROFILE, cat).values))
    assert v["session_duration_hours"] == 1.5 and v["start_hour"] == 20
    assert v["is_weekend"] == 1 and v["is_own_pc"] == 0 and v["n_distinct_pcs"] == 1
    assert v["logon_times@session"] == 1 and v["http_oper_times@session"] == 1


_kinds = st.sampled_from([EventKind.LOGON, EventKind.FILE_OP, EventKind.HTTP, EventKind.DEVICE_CONNECT, EventKind.EMAIL])


@st.composite
def _week_events(draw):
    spec = draw(st.lists(st.tuples(_kinds, st.integers(0, 7 * 24 * 60 - 1), st.sampled_from(["PC1", "PC2"])),
                         min_size=1, max_size=40))
    base = datetime(2010, 1, 4)
    return [ev(k, base + timedelta(minutes=m), pc=pc) for k, m, pc in spec]


@settings(max_examples=50)
@given(_week_events(), st.randoms())
def test_week_additivity_and_permutation(events, rnd):
    cat = build_catalog("week")
    b = _bucket(events, "week")
    v = extract_features(b, PROFILE, cat).values
    assert np.all(np.isfinite(v)) and np.all(v >= 0)
    vals = dict(zip(cat.names, v))
    for ind in ("logon_times", "file_oper_times", "http_oper_times", "usb_oper_times", "email_oper_times"):
        assert vals[f"{ind}@whole"] == vals[f"{ind}@workhour"] + vals[f"{ind}@afterhour"] + vals[f"{ind}@weekend"]
    shuffled = list(b.events)
    rnd.shuffle(shuffled)
    b2 = Bucket(b.user, b.granularity, b.window_start, b.window_end, tuple(shuffled))
    assert np.array_equal(extract_features(b2, PROFILE, cat).values, v)


def test_profile_modal_pc():
    events = [ev(EventKind.LOGON, f"2010-01-0{d} 08:00", pc=pc) for d, pc in ((4, "B"), (5, "A"), (6, "B"), (7, "A"))]
    assert build_profile(events).own_pc == "A"  # tie goes to the smaller id
    assert build_profile(events, until=datetime(2010, 1, 6)).own_pc == "A"
    assert build_profile(events + [ev(EventKind.LOGON, "2010-01-08 08:00", pc="B")]).own_pc == "B"
    with pytest.raises(EmptyTrainingSet):
        build_profile([])


# -- normalization ------------------------------------------------------------


def test_normalizer_examples():
    n = fit_normalizer([np.array([0.0]), np.array([10.0])])
    assert normalize(np.array([5.0]), n)[0] == 0.5
    assert normalize(np.array([12.0]), n)[0] == 1.0
    c = fit_normalizer([np.array([3.0]), np.array([3.0])])
    assert normalize(np.array([3.0]), c)[0] == 0.0
    with pytest.raises(EmptyTrainingSet):
        fit_normalizer([])


@settings(max_examples=50)
@given(arrays(np.float64, (6, 5), elements=st.floats(0, 100)), arrays(np.float64, 5, elements=st.floats(0, 200)))
def test_normalize_range_and_idempotence(train, x):
    n = fit_normalizer(list(train))
    y = normalize(x, n)
    assert np.all((0 <= y) & (y <= 1))
    assert np.all(n.max >= n.min)
    n01 = fit_normalizer([np.zeros(5), np.ones(5)])
    assert np.array_equal(normalize(y, n01), y)


# -- splitting ----------------------------------------------------------------


class W:
    def __init__(self, i, ws):
        self.i, self.window_start = i, ws


def test_split_seventy_thirty():
    items = [W(i, datetime(2010, 1, 1) + timedelta(days=i)) for i in range(10)]
    train, test = chronological_split(items, 0.7, min_instances=1)
    assert len(train) == 7 and len(test) == 3
    assert max(t.window_start for t in train) < min(t.window_start for t in test)
    with pytest.raises(TooFewInstances):
        chronological_split(items, 0.95, min_instances=10)
    with pytest.raises(TooFewInstances):
        chronological_split(items, 0.7)


def test_split_ties_keep_input_order():
    same = datetime(2010, 1, 1)
    items = [W(i, same) for i in range(4)]
    train, test = chronological_split(items, 0.5, min_instances=1)
    assert [t.i for t in train + test] == [0, 1, 2, 3]


def test_feature_store_round_trip(tmp_path):
    cat = build_catalog("day")
    vecs = [FeatureVector("U1", Granularity.DAY, datetime(2010, 1, 4 + i), np.random.default_rng(i).random(28), bool(i % 2), "PC1")
            for i in range(3)]
    write_feature_csv(tmp_path / "f.csv", vecs, cat, ["train", "train", "test"])
    back, phases = read_feature_csv(tmp_path / "f.csv")
    assert phases == ["train", "train", "test"]
    for a, b in zip(vecs, back):
        assert np.array_equal(a.values, b.values) and a.label == b.label and a.window_start == b.window_start
    write_catalog(tmp_path / "c.json", cat)
    assert read_catalog(tmp_path / "c.json") == cat
