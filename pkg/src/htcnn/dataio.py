"""Dataset directory format.

    postcodes.csv        postcode_id,lat,lon,subregion
    power_<postcode>.csv timestamp,kw
    weather_<cluster>.csv timestamp,<seven weather columns>
    regional.csv         timestamp,kw
    manifest.txt         generator config (optional, key = value)

Floats are written with 17 significant digits so a load reproduces every value
exactly. Sub-region aggregates are recomputed on load.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import os
import tempfile
from pathlib import Path

import numpy as np

from .config import dump_keyvalue
from .data import (
    SLOTS_PER_DAY, WEATHER_FEATURES, PowerSeries, RegionalDataset, SeriesId, WeatherSeries,
    aggregate_series, fill_missing, slot_timestamps,
)
from .errors import DataError, ParseError, StructuralError

POSTCODE_HEADER = ["postcode_id", "lat", "lon", "subregion"]
POWER_HEADER = ["timestamp", "kw"]
WEATHER_HEADER = ["timestamp", *WEATHER_FEATURES]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_atomic(path: Path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _iso(ts: dt.datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%S")


def emit_dataset(dataset: RegionalDataset, directory, manifest: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stamps = [_iso(t) for t in dataset.regional.timestamps]
    rows = [
        [s.id.key, fmt(lat), fmt(lon), dataset.subregion_of[s.id.key]]
        for s, (lat, lon) in zip(dataset.postcode_series, dataset.postcode_coords)
    ]
    write_atomic(directory / "postcodes.csv", _csv_text(POSTCODE_HEADER, rows))
    for s in dataset.postcode_series:
        write_atomic(directory / f"power_{s.id.key}.csv",
                     _csv_text(POWER_HEADER, zip(stamps, map(fmt, s.values))))
    for w in dataset.weather_series:
        body = ([t] + [fmt(v) for v in row] for t, row in zip(stamps, w.features))
        write_atomic(directory / f"weather_{w.location_id}.csv", _csv_text(WEATHER_HEADER, body))
    write_atomic(directory / "regional.csv",
                 _csv_text(POWER_HEADER, zip(stamps, map(fmt, dataset.regional.values))))
    if manifest is not None:
        write_atomic(directory / "manifest.txt", dump_keyvalue(manifest))
    return directory


def _read_rows(path: Path, header: list, what: str):
    if not path.exists():
        raise ParseError(path, f"missing {what}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ParseError(path, "empty file (header row required)", 1) from None
        if got != header:
            raise ParseError(path, f"header must be {','.join(header)}, got {','.join(got)}", 1)
        rows = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise ParseError(path, f"expected {len(header)} fields, got {len(row)}", lineno)
            rows.append((lineno, row))
    return rows


def _float(path, lineno, text):
    if text.strip() == "" or text.strip().lower() == "nan":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, f"not a number: {text!r}", lineno) from None


def _parse_timed(path, rows, n_values):
    stamps, values = [], []
    for lineno, row in rows:
        try:
            stamps.append(dt.datetime.fromisoformat(row[0]))
        except ValueError:
            raise ParseError(path, f"bad timestamp {row[0]!r}", lineno) from None
        values.append([_float(path, lineno, x) for x in row[1:1 + n_values]])
    if not stamps:
        raise ParseError(path, "no data rows")
    if len(stamps) % SLOTS_PER_DAY:
        raise ParseError(path, f"{len(stamps)} rows is not a whole number of 18-slot days")
    start = stamps[0].date()
    expected = slot_timestamps(start, len(stamps) // SLOTS_PER_DAY)
    for (lineno, _), got, want in zip(rows, stamps, expected):
        if got != want:
            raise ParseError(path, f"timestamp {_iso(got)} breaks the hourly 05:00-22:00 grid "
                                   f"(expected {_iso(want)})", lineno)
    return start, np.array(values, dtype=np.float64)


def load_dataset(directory) -> RegionalDataset:
    """Read a dataset directory; raises ParseError naming the offending file and line."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a dataset directory")
    pc_path = directory / "postcodes.csv"
    keys, coords, subregion_of = [], [], {}
    for lineno, row in _read_rows(pc_path, POSTCODE_HEADER, "postcode table"):
        key = row[0].strip()
        try:
            cluster = int(row[3])
        except ValueError:
            raise ParseError(pc_path, f"bad subregion {row[3]!r}", lineno) from None
        keys.append(key)
        coords.append([_float(pc_path, lineno, row[1]), _float(pc_path, lineno, row[2])])
        subregion_of[key] = cluster

    postcodes = []
    for key in keys:
        path = directory / f"power_{key}.csv"
        start, vals = _parse_timed(path, _read_rows(path, POWER_HEADER, f"power file for postcode {key}"), 1)
        postcodes.append(PowerSeries(SeriesId.postcode(key), fill_missing(vals[:, 0], str(path)), start))

    weather = []
    for c in sorted(set(subregion_of.values())):
        path = directory / f"weather_{c}.csv"
        start, vals = _parse_timed(path, _read_rows(path, WEATHER_HEADER, f"weather file for cluster {c}"),
                                   len(WEATHER_FEATURES))
        cols = [fill_missing(vals[:, j], f"{path} column {WEATHER_FEATURES[j]}") for j in range(vals.shape[1])]
        weather.append(WeatherSeries(c, np.stack(cols, axis=1), start))

    path = directory / "regional.csv"
    start, vals = _parse_timed(path, _read_rows(path, POWER_HEADER, "regional series"), 1)
    regional = PowerSeries(SeriesId.regional(), fill_missing(vals[:, 0], str(path)), start)
    try:
        clusters = sorted(set(subregion_of.values()))
        aggs = [aggregate_series([p for p in postcodes if subregion_of[p.id.key] == c], SeriesId.subregion(c))
                for c in clusters]
        return RegionalDataset(postcodes, np.array(coords), weather, subregion_of, regional, aggs)
    except StructuralError as exc:
        raise DataError(f"{directory}: {exc}") from exc


def dataset_files(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.glob("*.csv"))


def dataset_hash(directory) -> str:
    """SHA-256 over the names and bytes of the dataset's CSV files."""
    h = hashlib.sha256()
    for p in dataset_files(directory):
        h.update(p.name.encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()
