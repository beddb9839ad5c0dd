"""Raw station files to the prime dataset, plus jittering and sampling."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError

log = logging.getLogger(__name__)

PRIME_COLUMNS = ("station_ID", "date_time", "latitude", "longitude", "year", "month",
                 "altitude", "wind_speed", "wind_direct_avg", "cos_direct", "sin_direct",
                 "f_month", "c_month")
RAW_COLUMNS = ("station_ID", "date_time", "altitude", "wind_speed", "wind_direct_avg")
DATE_FORMAT = "%Y-%m-%d %H:%M"

# station id -> (site name, latitude, longitude)
STATIONS = {
    "WM01": ("Alexander Bay", -28.583331, 16.4833),
    "WM02": ("Calvinia", -31.4707, 19.7760),
    "WM03": ("Vredendal", -31.6391, 18.5285),
    "WM04": ("Vredenburg", -32.9000, 17.9833),
    "WM05": ("Napier", -34.4667, 19.9000),
    "WM06": ("Sutherland", -32.3743, 20.8064),
    "WM07": ("Prince Albert", -33.2167, 22.0333),
    "WM08": ("Humansdorp", -34.0027, 24.7440),
    "WM09": ("Noupoort", -31.1874, 24.9499),
    "WM10": ("Butterworth", -32.3308, 28.1498),
}


def station_locations(stations=STATIONS):
    """``(n, 2)`` array of (longitude, latitude) in station-id order."""
    return np.array([[stations[k][2], stations[k][1]] for k in sorted(stations)])


def unit_circle(degrees):
    """(cos, sin) of angles in degrees, exact at multiples of 90."""
    d = np.asarray(degrees, dtype=float)
    q = np.round(d / 90.0)
    r = np.radians(d - 90.0 * q)
    c, s = np.cos(r), np.sin(r)
    qm = np.mod(q, 4).astype(np.int64)
    cos = np.select([qm == 0, qm == 1, qm == 2], [c, -s, -c], s)
    sin = np.select([qm == 0, qm == 1, qm == 2], [s, c, -s], -c)
    return cos + 0.0, sin + 0.0


def consecutive_month(year, month, origin):
    oy, om = origin
    return 12 * (np.asarray(year) - oy) + np.asarray(month) - om + 1


@dataclass
class SkipReport:
    counts: Counter = field(default_factory=Counter)
    kept: int = 0

    def add(self, reason, n=1):
        if n:
            self.counts[reason] += int(n)

    @property
    def skipped(self):
        return int(sum(self.counts.values()))

    def text(self):
        lines = [f"kept {self.kept}", f"skipped {self.skipped}"]
        lines += [f"  {k}: {v}" for k, v in sorted(self.counts.items())]
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.text())


def read_raw(path, delimiter=","):
    df = pd.read_csv(path, sep=delimiter, dtype={"station_ID": str}, keep_default_na=True)
    missing = [c for c in RAW_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {', '.join(missing)}")
    return df[list(RAW_COLUMNS)]


def conglomerate(raw_files, stations=STATIONS, origin=None, delimiter=",",
                 min_speed=0.0):
    """Merge per-station raw files into the prime dataset.

    Rows with an unparseable timestamp, missing or out-of-range speed or
    direction, or speed ``<= min_speed`` are dropped and tallied.
    Returns ``(frame, SkipReport)``.
    """
    report = SkipReport()
    frames = [read_raw(p, delimiter) for p in raw_files]
    if frames:
        raw = pd.concat(frames, ignore_index=True)
    else:
        raw = pd.DataFrame({c: [] for c in RAW_COLUMNS})
    ids = raw["station_ID"].astype(str).str.strip()
    unknown = sorted(set(ids) - set(stations))
    if unknown:
        raise DataError(f"unknown station_ID {unknown[0]!r}")
    ts = pd.to_datetime(raw["date_time"], errors="coerce", format="mixed")
    speed = pd.to_numeric(raw["wind_speed"], errors="coerce")
    direc = pd.to_numeric(raw["wind_direct_avg"], errors="coerce")
    alt = pd.to_numeric(raw["altitude"], errors="coerce")
    bad_ts = ts.isna()
    report.add("bad_timestamp", bad_ts.sum())
    ok = ~bad_ts
    for reason, mask in (("missing_speed", speed.isna()),
                         ("missing_direction", direc.isna()),
                         ("missing_altitude", alt.isna()),
                         ("bad_direction", (direc < 0) | (direc >= 360)),
                         ("speed_at_or_below_threshold", speed <= min_speed)):
        hit = ok & mask.fillna(False)
        report.add(reason, hit.sum())
        ok &= ~hit
    df = pd.DataFrame({
        "station_ID": ids[ok].to_numpy(),
        "date_time": ts[ok].dt.floor("min").to_numpy(),
        "altitude": alt[ok].to_numpy(dtype=float),
        "wind_speed": speed[ok].to_numpy(dtype=float),
        "wind_direct_avg": direc[ok].to_numpy(dtype=float),
    })
    df = df.sort_values(["station_ID", "date_time", "altitude"], kind="mergesort")
    df = df.reset_index(drop=True)
    report.kept = len(df)
    return derive_columns(df, stations, origin), report


def derive_columns(df, stations=STATIONS, origin=None):
    """Add coordinates, calendar fields and direction encodings."""
    df = df.copy()
    dt = pd.to_datetime(df["date_time"])
    df["latitude"] = [stations[s][1] for s in df["station_ID"]]
    df["longitude"] = [stations[s][2] for s in df["station_ID"]]
    df["year"] = dt.dt.year.astype(np.int64)
    df["month"] = dt.dt.month.astype(np.int64)
    if origin is None:
        if len(df):
            first = df.loc[(df["year"] * 12 + df["month"]).idxmin()]
            origin = (int(first["year"]), int(first["month"]))
        else:
            origin = (2011, 1)
    c, s = unit_circle(df["wind_direct_avg"].to_numpy(dtype=float))
    df["cos_direct"] = c
    df["sin_direct"] = s
    df["f_month"] = df["month"]
    df["c_month"] = consecutive_month(df["year"], df["month"], origin).astype(np.int64)
    if len(df) and df["c_month"].min() < 1:
        raise DataError(f"records precede the dataset origin {origin[0]}-{origin[1]:02d}")
    df["date_time"] = dt
    return df[list(PRIME_COLUMNS)]


def jitter(df, radius, seed):
    """Displace coordinates uniformly within a disc of ``radius`` degrees.

    Draws ``r = radius sqrt(U)``, ``phi = 2 pi V``; colliding coordinate
    pairs are re-drawn so that all outputs are distinct (when radius > 0).
    """
    if radius < 0:
        raise ValueError("jitter radius must be non-negative")
    out = df.copy()
    n = len(df)
    if radius == 0 or n == 0:
        return out
    rng = np.random.default_rng(seed)
    lat0 = df["latitude"].to_numpy(dtype=float)
    lon0 = df["longitude"].to_numpy(dtype=float)
    lat = np.empty(n)
    lon = np.empty(n)
    todo = np.arange(n)
    for _ in range(100):
        r = radius * np.sqrt(rng.random(len(todo)))
        phi = 2.0 * math.pi * rng.random(len(todo))
        lon[todo] = lon0[todo] + r * np.cos(phi)
        lat[todo] = lat0[todo] + r * np.sin(phi)
        pairs = pd.DataFrame({"a": lon, "b": lat})
        dup = pairs.duplicated(keep="first").to_numpy()
        todo = np.nonzero(dup)[0]
        if todo.size == 0:
            break
    else:
        raise DataError("could not make jittered coordinates distinct")
    out["latitude"] = lat
    out["longitude"] = lon
    return out


def sample(df, n, seed):
    """Uniform subset of ``n`` rows without replacement, in original order."""
    if n > len(df):
        raise DataError(f"requested {n} records but only {len(df)} are available")
    if n < 0:
        raise ValueError("sample size must be non-negative")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(df), size=n, replace=False))
    return df.iloc[idx].reset_index(drop=True)


def write_prime(df, path):
    out = df[list(PRIME_COLUMNS)].copy()
    out["date_time"] = pd.to_datetime(out["date_time"]).dt.strftime(DATE_FORMAT)
    out.to_csv(path, index=False, lineterminator="\n")


def read_prime(path):
    try:
        df = pd.read_csv(path, dtype={"station_ID": str})
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if tuple(df.columns) != PRIME_COLUMNS:
        raise DataError(f"{path}: header does not match the prime schema")
    df["date_time"] = pd.to_datetime(df["date_time"], format=DATE_FORMAT)
    for c in ("year", "month", "f_month", "c_month"):
        df[c] = df[c].astype(np.int64)
    for c in ("latitude", "longitude", "altitude", "wind_speed", "wind_direct_avg",
              "cos_direct", "sin_direct"):
        df[c] = df[c].astype(float)
    return df
