import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windspde.errors import DataError
from windspde.ingest import (PRIME_COLUMNS, STATIONS, conglomerate, consecutive_month, jitter,
                             read_prime, sample, station_locations, unit_circle, write_prime)
from windspde.simulate import synthetic_records

HEADER = "station_ID,date_time,altitude,wind_speed,wind_direct_avg\n"


def _raw(tmp_path, name, rows):
    p = tmp_path / name
    p.write_text(HEADER + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return str(p)


def test_station_table():
    assert len(STATIONS) == 10
    assert all(lat < 0 for _, lat, _ in STATIONS.values())
    assert station_locations().shape == (10, 2)
    assert STATIONS["WM05"][0] == "Napier"


def test_direction_90_degrees():
    c, s = unit_circle(90.0)
    assert c == 0.0 and s == 1.0


@pytest.mark.parametrize("deg, cs", [(0, (1, 0)), (180, (-1, 0)), (270, (0, -1))])
def test_quadrants_exact(deg, cs):
    c, s = unit_circle(deg)
    assert (c, s) == cs


@given(st.floats(0, 360, exclude_max=True, allow_nan=False))
def test_unit_circle_identity(deg):
    c, s = unit_circle(deg)
    assert abs(c * c + s * s - 1.0) <= 1e-12
    assert c == pytest.approx(np.cos(np.radians(deg)), abs=1e-12)


def test_calendar_indices():
    assert consecutive_month(2013, 3, (2011, 1)) == 27
    assert consecutive_month(2011, 1, (2011, 1)) == 1


def test_conglomerate(tmp_path):
    a = _raw(tmp_path, "a.csv", [
        ("WM01", "2013-03-05 10:00", 10, 5.5, 90),
        ("WM01", "2011-01-01 00:10", 20, 3.0, 0),
        ("WM01", "not a date", 20, 3.0, 0),
        ("WM01", "2012-01-01 00:10", 20, "", 10),
        ("WM01", "2012-01-01 00:20", 20, 0.0, 10),
        ("WM01", "2012-01-01 00:30", 20, 4.0, 400),
    ])
    b = _raw(tmp_path, "b.csv", [("WM05", "2012-06-01 12:00", 62, 7.25, 270)])
    df, rep = conglomerate([a, b])
    assert tuple(df.columns) == PRIME_COLUMNS
    assert len(df) == 3 and rep.kept == 3
    assert rep.counts == {"bad_timestamp": 1, "missing_speed": 1,
                          "speed_at_or_below_threshold": 1, "bad_direction": 1}
    r = df[df["altitude"] == 10].iloc[0]
    assert (r["f_month"], r["c_month"]) == (3, 27)
    assert (r["cos_direct"], r["sin_direct"]) == (0.0, 1.0)
    assert r["latitude"] == STATIONS["WM01"][1]
    assert "skipped 4" in rep.text()
    assert (df["c_month"].diff().dropna() >= 0).all() or df["station_ID"].nunique() > 1


def test_unknown_station_names_token(tmp_path):
    a = _raw(tmp_path, "a.csv", [("WM99", "2013-03-05 10:00", 10, 5.5, 90)])
    with pytest.raises(DataError, match="WM99"):
        conglomerate([a])


def test_gap_months_produce_no_records(tmp_path):
    rows = [("WM04", f"2014-{m:02d}-01 00:00", 10, 4.0, 10) for m in (1, 2, 5, 6)]
    df, _ = conglomerate([_raw(tmp_path, "wm04.csv", rows)], origin=(2011, 1))
    months = set(df["month"])
    assert 3 not in months and 4 not in months
    assert sorted(df["c_month"]) == [37, 38, 41, 42]


def test_round_trip(tmp_path):
    df = synthetic_records(200, 4)
    p = tmp_path / "prime.csv"
    write_prime(df, p)
    back = read_prime(p)
    df2 = df.copy()
    df2["date_time"] = pd.to_datetime(df2["date_time"]).dt.floor("min")
    pd.testing.assert_frame_equal(back, df2, check_dtype=False)
    assert p.read_text().splitlines()[0] == ",".join(PRIME_COLUMNS)


def test_read_prime_rejects_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_prime(p)


def test_c_month_nondecreasing_in_time():
    df = synthetic_records(500, 5).sort_values("date_time", kind="mergesort")
    assert np.all(np.diff(df["c_month"].to_numpy()) >= 0)


def test_jitter_zero_radius_is_identity():
    df = synthetic_records(50, 6, jitter_radius=0.0)
    out = jitter(df, 0.0, 1)
    pd.testing.assert_frame_equal(out, df)
    lon = [STATIONS[s][2] for s in df["station_ID"]]
    np.testing.assert_array_equal(out["longitude"], lon)


def test_jitter_deterministic_and_unique():
    df = synthetic_records(5000, 7, jitter_radius=0.0)
    a = jitter(df, 0.1, 42)
    b = jitter(df, 0.1, 42)
    np.testing.assert_array_equal(a["latitude"], b["latitude"])
    np.testing.assert_array_equal(a["longitude"], b["longitude"])
    pairs = np.unique(a[["longitude", "latitude"]].to_numpy(), axis=0)
    assert len(pairs) == 5000


@settings(max_examples=25, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-6, 2.0)), st.integers(0, 2**31 - 1))
def test_jitter_within_radius(radius, seed):
    df = synthetic_records(40, 8, jitter_radius=0.0)
    out = jitter(df, radius, seed)
    d = np.hypot(out["longitude"] - df["longitude"], out["latitude"] - df["latitude"])
    assert np.all(d <= radius * (1 + 1e-12) + 1e-12)


def test_jitter_negative_radius():
    with pytest.raises(ValueError):
        jitter(synthetic_records(5, 1), -1.0, 0)


def test_sample():
    df = synthetic_records(100, 9)
    s1 = sample(df, 30, 3)
    s2 = sample(df, 30, 3)
    assert len(s1) == 30
    pd.testing.assert_frame_equal(s1, s2)
    with pytest.raises(DataError, match="100"):
        sample(df, 101, 0)
