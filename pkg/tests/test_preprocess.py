import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcdtt.exceptions import ParseError, ValidationError
from fcdtt.geo import GeoPoint, offset_point
from fcdtt.preprocess import (
    GpsFix,
    StopDetectorConfig,
    Trace,
    detect_stops,
    parse_traces,
    split_at_stops,
    write_traces,
)

ORIGIN = GeoPoint(28.55, 77.2)


def trace_from_offsets(offsets, vid="v", t0=1_000, dt=60):
    fixes = [GpsFix(t0 + i * dt, offset_point(ORIGIN, e, n), vid) for i, (e, n) in enumerate(offsets)]
    return Trace(vid, tuple(fixes))


def write_csv(path, rows):
    path.write_text("vehicle_id,timestamp,lat,lon\n" + "".join(r + "\n" for r in rows))
    return path


def test_parse_header_only(tmp_path):
    assert parse_traces(write_csv(tmp_path / "a.csv", [])) == []


def test_parse_sorts_fixes(tmp_path):
    rows = ["v1,300,28.5,77.2", "v1,100,28.5,77.21", "v1,200,28.5,77.22"]
    (trace,) = parse_traces(write_csv(tmp_path / "a.csv", rows))
    assert [f.t for f in trace.fixes] == [100, 200, 300]


def test_parse_counts_per_vehicle(tmp_path):
    rows = [f"v{v},{1000 + 10 * i},28.5,{77.2 + i * 1e-3:.6f}" for i in range(10) for v in (1, 2)]
    traces = parse_traces(write_csv(tmp_path / "a.csv", rows))
    assert sorted(t.vehicle_id for t in traces) == ["v1", "v2"]
    assert [len(t) for t in traces] == [10, 10]


@pytest.mark.parametrize(
    "row",
    ["v1,100,28.5", "v1,abc,28.5,77.2", "v1,100,95.0,77.2", "v1,100,28.5,190", "v1,100,nan,77.2"],
)
def test_parse_errors_carry_line_number(tmp_path, row):
    with pytest.raises(ParseError) as info:
        parse_traces(write_csv(tmp_path / "a.csv", ["v1,50,28.5,77.2", row]))
    assert info.value.line == 3


def test_parse_rejects_duplicates(tmp_path):
    with pytest.raises(ParseError):
        parse_traces(write_csv(tmp_path / "a.csv", ["v1,50,28.5,77.2", "v1,50,28.6,77.2"]))


def test_write_parse_round_trip(tmp_path):
    tr = trace_from_offsets([(0, 0), (100, 50), (230, 80)])
    write_traces([tr], tmp_path / "t.csv")
    (back,) = parse_traces(tmp_path / "t.csv")
    assert [f.t for f in back.fixes] == [f.t for f in tr.fixes]
    for f, g in zip(back.fixes, tr.fixes):
        assert f.pos.lat == pytest.approx(g.pos.lat, abs=1e-10)
        assert f.pos.lon == pytest.approx(g.pos.lon, abs=1e-10)


def test_trace_requires_increasing_time():
    f = GpsFix(10, ORIGIN, "v")
    with pytest.raises(ValidationError):
        Trace("v", (f, GpsFix(10, ORIGIN, "v")))


def test_config_validation():
    with pytest.raises(ValidationError):
        StopDetectorConfig(0.0, 2)
    with pytest.raises(ValidationError):
        StopDetectorConfig(10.0, 1)


def test_moving_trace_all_valid():
    tr = trace_from_offsets([(200 * i, 0) for i in range(8)])
    assert detect_stops(tr, StopDetectorConfig()).all()


def test_cluster_longer_than_threshold_invalidated():
    tr = trace_from_offsets([(i, (i % 2) * 2.0) for i in range(6)])
    labels = detect_stops(tr, StopDetectorConfig(30.0, 3))
    assert not labels.any()


def test_run_of_exactly_n_max_stays_valid():
    # fixes 1 and 2 are close (a run of length 2), then movement resumes
    tr = trace_from_offsets([(0, 0), (200, 0), (205, 0), (400, 0), (600, 0)])
    assert detect_stops(tr, StopDetectorConfig(50.0, 2)).all()


def test_stop_in_middle_is_isolated():
    offs = [(0, 0), (200, 0), (400, 0), (401, 0), (402, 0), (403, 0), (404, 0), (600, 0), (800, 0)]
    labels = detect_stops(trace_from_offsets(offs), StopDetectorConfig(50.0, 2))
    np.testing.assert_array_equal(labels, [1, 1, 0, 0, 0, 0, 0, 1, 1])


def test_split_all_valid_is_identity():
    tr = trace_from_offsets([(200 * i, 0) for i in range(5)])
    (piece,) = split_at_stops(tr, np.ones(5, bool))
    assert piece == tr


def test_split_two_pieces():
    tr = trace_from_offsets([(200 * i, 0) for i in range(8)])
    pieces = split_at_stops(tr, np.array([1, 1, 0, 0, 0, 0, 1, 1], bool))
    assert [len(p) for p in pieces] == [2, 2]


def test_split_drops_singletons():
    tr = trace_from_offsets([(200 * i, 0) for i in range(7)])
    assert split_at_stops(tr, np.array([1, 0, 0, 0, 0, 0, 1], bool)) == []


def test_split_label_length_checked():
    tr = trace_from_offsets([(0, 0), (200, 0)])
    with pytest.raises(ValidationError):
        split_at_stops(tr, np.ones(3, bool))


steps = st.lists(st.floats(0.0, 150.0), min_size=1, max_size=30)


@settings(max_examples=80, deadline=None)
@given(steps, st.floats(5.0, 100.0), st.floats(5.0, 100.0), st.integers(2, 5), st.integers(2, 5))
def test_detection_monotone_in_thresholds(gaps, d1, d2, n1, n2):
    tr = trace_from_offsets(np.cumsum([0.0, *gaps])[:, None] * np.array([[1.0, 0.0]]))
    lo_d, hi_d = sorted((d1, d2))
    lo_n, hi_n = sorted((n1, n2))
    strict = detect_stops(tr, StopDetectorConfig(lo_d, hi_n))
    loose = detect_stops(tr, StopDetectorConfig(hi_d, lo_n))
    # every fix invalid under the stricter setting is invalid under the looser one
    assert np.all(loose <= strict)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=40))
def test_split_is_partition_of_kept_fixes(labels):
    labels = np.array(labels)
    tr = trace_from_offsets([(200 * i, 0) for i in range(labels.size)])
    pieces = split_at_stops(tr, labels)
    kept = [f for p in pieces for f in p.fixes]
    assert len(kept) == len(set(kept))
    assert set(kept) <= set(f for f, ok in zip(tr.fixes, labels) if ok)
    assert all(len(p) >= 2 for p in pieces)
