"""Hierarchical PV data model: series, aggregation, feature matrices and samples.

Power is stored for 18 hourly in-day slots (05:00 to 22:00) per day. Night
hours are never stored, so a series of ``n`` days holds ``18 * n`` values.
"""
from __future__ import annotations

import datetime as dt
import enum
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, StructuralError, WindowingError

SLOTS_PER_DAY = 18
FIRST_HOUR = 5
HORIZON = SLOTS_PER_DAY
DEFAULT_LAG_DAYS = 7
WEATHER_FEATURES = (
    "wind_speed",
    "temperature",
    "uv_index",
    "cloud_cover",
    "humidity",
    "pressure",
    "dew_point",
)
N_WEATHER = len(WEATHER_FEATURES)
STD_FLOOR = 1e-8
COHERENCE_RTOL = 1e-9


class SeriesKind(enum.Enum):
    POSTCODE = "postcode"
    SUBREGION = "subregion"
    REGIONAL = "regional"


@dataclass(frozen=True, order=True)
class SeriesId:
    kind: SeriesKind
    key: str

    def __str__(self):
        return f"{self.kind.value}:{self.key}"

    @classmethod
    def postcode(cls, key) -> "SeriesId":
        return cls(SeriesKind.POSTCODE, str(key))

    @classmethod
    def subregion(cls, cluster: int) -> "SeriesId":
        return cls(SeriesKind.SUBREGION, str(int(cluster)))

    @classmethod
    def regional(cls) -> "SeriesId":
        return cls(SeriesKind.REGIONAL, "region")


def slot_timestamps(start: dt.date, n_days: int) -> list[dt.datetime]:
    base = dt.datetime.combine(start, dt.time(FIRST_HOUR))
    return [
        base + dt.timedelta(days=d, hours=s)
        for d in range(n_days)
        for s in range(SLOTS_PER_DAY)
    ]


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PowerSeries:
    """Hourly power readings (kW) for one node of the hierarchy."""

    id: SeriesId
    values: np.ndarray
    start: dt.date = dt.date(2020, 2, 13)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise StructuralError(f"{self.id}: power values must be 1-D")
        if values.size % SLOTS_PER_DAY:
            raise StructuralError(
                f"{self.id}: length {values.size} is not a multiple of {SLOTS_PER_DAY}"
            )
        if np.any(values[~np.isnan(values)] < 0):
            raise StructuralError(f"{self.id}: negative power values")
        object.__setattr__(self, "values", values)

    @property
    def n_days(self) -> int:
        return self.values.size // SLOTS_PER_DAY

    @property
    def timestamps(self) -> list[dt.datetime]:
        return slot_timestamps(self.start, self.n_days)

    def by_day(self) -> np.ndarray:
        """View of the values as a (days, 18) grid."""
        return self.values.reshape(self.n_days, SLOTS_PER_DAY)

    def day(self, d: int) -> np.ndarray:
        return self.by_day()[d]


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    """Seven weather features per slot for one weather-collection cluster.

    Columns follow ``WEATHER_FEATURES``. Cloud cover and humidity are
    fractions in [0, 1].
    """

    location_id: int
    features: np.ndarray
    start: dt.date = dt.date(2020, 2, 13)

    def __post_init__(self):
        features = _frozen(self.features)
        if features.ndim != 2 or features.shape[1] != N_WEATHER:
            raise StructuralError(
                f"weather {self.location_id}: expected (n, {N_WEATHER}) features, "
                f"got {features.shape}"
            )
        if features.shape[0] % SLOTS_PER_DAY:
            raise StructuralError(f"weather {self.location_id}: partial day")
        for name in ("cloud_cover", "humidity"):
            col = features[:, WEATHER_FEATURES.index(name)]
            col = col[~np.isnan(col)]
            if np.any((col < 0) | (col > 1)):
                raise StructuralError(f"weather {self.location_id}: {name} outside [0, 1]")
        object.__setattr__(self, "features", features)

    @property
    def n_days(self) -> int:
        return self.features.shape[0] // SLOTS_PER_DAY

    def by_day(self) -> np.ndarray:
        return self.features.reshape(self.n_days, SLOTS_PER_DAY, N_WEATHER)


def _check_grid(members: Sequence[PowerSeries]):
    first = members[0]
    for s in members[1:]:
        if s.values.shape != first.values.shape or s.start != first.start:
            raise StructuralError(
                f"series {s.id} does not share the timestamp grid of {first.id}"
            )


def aggregate_series(members: Sequence[PowerSeries], id: SeriesId | None = None) -> PowerSeries:
    """Pointwise sum of member series. NaN in any member gives NaN in the sum."""
    if not members:
        raise StructuralError("cannot aggregate an empty list of series")
    _check_grid(members)
    total = np.array(members[0].values, copy=True)
    for s in members[1:]:
        total = total + s.values
    return PowerSeries(id or members[0].id, total, members[0].start)


def _coherent(stored: np.ndarray, recomputed: np.ndarray) -> bool:
    scale = max(float(np.nanmax(np.abs(recomputed), initial=0.0)), 1e-300)
    return bool(
        np.allclose(stored, recomputed, rtol=COHERENCE_RTOL, atol=COHERENCE_RTOL * scale, equal_nan=True)
    )


@dataclass(frozen=True, eq=False)
class RegionalDataset:
    """All series for one region plus the postcode -> sub-region mapping.

    ``regional`` and ``subregion_aggregates`` are validated against the sums of
    their member postcode series on construction.
    """

    postcode_series: tuple
    postcode_coords: np.ndarray
    weather_series: tuple
    subregion_of: Mapping[str, int]
    regional: PowerSeries
    subregion_aggregates: tuple = field(default=())

    def __post_init__(self):
        pcs = tuple(self.postcode_series)
        object.__setattr__(self, "postcode_series", pcs)
        object.__setattr__(self, "weather_series", tuple(self.weather_series))
        object.__setattr__(self, "postcode_coords", _frozen(self.postcode_coords))
        object.__setattr__(self, "subregion_of", dict(self.subregion_of))
        if not pcs:
            raise StructuralError("dataset has no postcode series")
        _check_grid(list(pcs) + [self.regional])
        keys = [s.id.key for s in pcs]
        if len(set(keys)) != len(keys):
            raise StructuralError("duplicate postcode ids")
        if self.postcode_coords.shape != (len(pcs), 2):
            raise StructuralError("postcode_coords must be (n_postcodes, 2)")
        missing = set(keys) - set(self.subregion_of)
        if missing:
            raise StructuralError(f"postcodes without sub-region: {sorted(missing)}")
        clusters = sorted(set(self.subregion_of[k] for k in keys))
        if clusters != list(range(len(clusters))):
            raise StructuralError("sub-region indices must be 0..k-1 with no gaps")
        by_loc = {w.location_id: w for w in self.weather_series}
        for c in clusters:
            if c not in by_loc:
                raise StructuralError(f"no weather series for cluster {c}")
            if by_loc[c].n_days != self.n_days or by_loc[c].start != self.regional.start:
                raise StructuralError(f"weather series {c} is not on the power grid")
        if not _coherent(self.regional.values, aggregate_series(pcs).values):
            raise StructuralError("regional series is not the sum of postcode series")
        aggs = tuple(self.subregion_aggregates) or tuple(
            aggregate_series(self.members(c), SeriesId.subregion(c)) for c in clusters
        )
        if len(aggs) != len(clusters):
            raise StructuralError("one sub-region aggregate per cluster required")
        for c, agg in zip(clusters, aggs):
            if agg.id != SeriesId.subregion(c):
                raise StructuralError(f"sub-region aggregate {agg.id} out of order")
            if not _coherent(agg.values, aggregate_series(self.members(c)).values):
                raise StructuralError(f"sub-region {c} aggregate is not the sum of its members")
        object.__setattr__(self, "subregion_aggregates", aggs)

    @property
    def n_days(self) -> int:
        return self.regional.n_days

    @property
    def n_postcodes(self) -> int:
        return len(self.postcode_series)

    @property
    def n_clusters(self) -> int:
        return len(set(self.subregion_of.values()))

    @property
    def postcode_ids(self) -> list[SeriesId]:
        return [s.id for s in self.postcode_series]

    def members(self, cluster: int) -> list[PowerSeries]:
        return [s for s in self.postcode_series if self.subregion_of[s.id.key] == cluster]

    def member_ids(self, cluster: int) -> list[SeriesId]:
        return [s.id for s in self.members(cluster)]

    def series(self, sid: SeriesId) -> PowerSeries:
        if sid.kind is SeriesKind.REGIONAL:
            return self.regional
        if sid.kind is SeriesKind.SUBREGION:
            c = int(sid.key)
            if not 0 <= c < len(self.subregion_aggregates):
                raise KeyError(str(sid))
            return self.subregion_aggregates[c]
        for s in self.postcode_series:
            if s.id == sid:
                return s
        raise KeyError(str(sid))

    def weather(self, cluster: int) -> WeatherSeries:
        for w in self.weather_series:
            if w.location_id == cluster:
                return w
        raise KeyError(f"weather cluster {cluster}")

    def weather_for(self, sid: SeriesId) -> WeatherSeries | None:
        """Weather of a postcode's cluster; aggregates carry no weather."""
        if sid.kind is SeriesKind.POSTCODE:
            return self.weather(self.subregion_of[sid.key])
        return None


# --- feature matrices -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """t x f input grid for one series and one forecast day.

    Columns: ``lag_days`` power lags ordered oldest to newest, then the seven
    weather features of the forecast day (when weather is used).
    """

    values: np.ndarray
    columns: tuple

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def f(self) -> int:
        return self.values.shape[1]


def feature_columns(lag_days: int, weather: bool) -> tuple:
    cols = tuple(f"lag_{lag_days - j}" for j in range(lag_days))
    return cols + (WEATHER_FEATURES if weather else ())


def _feature_grid(power_days, weather_days, day, lag_days):
    # power_days: (n_days, 18); weather_days: (n_days, 18, 7) or None
    lags = power_days[day - lag_days:day].T
    if weather_days is None:
        return lags
    return np.concatenate([lags, weather_days[day]], axis=1)


def _check_window(day, lag_days, n_days, horizon):
    if horizon != SLOTS_PER_DAY:
        raise ConfigurationError(f"horizon must be {SLOTS_PER_DAY}, got {horizon}")
    if lag_days < 1:
        raise ConfigurationError("lag_days must be >= 1")
    if day < lag_days:
        raise WindowingError(f"day {day} has fewer than {lag_days} days of history")
    if day >= n_days:
        raise WindowingError(f"day {day} outside series of {n_days} days")


def build_feature_matrix(
    target: PowerSeries,
    weather: WeatherSeries | None,
    day: int,
    lag_days: int = DEFAULT_LAG_DAYS,
    horizon: int = HORIZON,
) -> FeatureMatrix:
    """Input grid for forecasting ``day`` of ``target``.

    Row r holds the power at slot r on each of the previous ``lag_days`` days,
    followed by the forecast-day weather at slot r when ``weather`` is given.
    """
    _check_window(day, lag_days, target.n_days, horizon)
    wd = None if weather is None else weather.by_day()
    grid = _feature_grid(target.by_day(), wd, day, lag_days)
    return FeatureMatrix(_frozen(grid), feature_columns(lag_days, weather is not None))


# --- scaling ----------------------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    """Standardisation with training-range statistics.

    ``mean`` and ``std`` are scalars for power series and length-7 vectors for
    weather series (one per feature column).
    """

    mean: np.ndarray | float
    std: np.ndarray | float

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


def _as_day_grid(series):
    if isinstance(series, (PowerSeries, WeatherSeries)):
        return series.by_day()
    return np.asarray(series, dtype=np.float64)


def fit_scaler(series, train_days: range | slice) -> Scaler:
    """Fit mean/std over the days in ``train_days`` only.

    ``series`` is a PowerSeries, a WeatherSeries, or an array whose first axis
    is days. Zero variance is floored at 1e-8 with a warning.
    """
    grid = _as_day_grid(series)
    if isinstance(train_days, range):
        train_days = slice(train_days.start, train_days.stop)
    train = grid[train_days]
    if train.size == 0:
        raise ConfigurationError("empty training range for scaler")
    if grid.ndim == 3:
        train = train.reshape(-1, grid.shape[2])
        mean = np.nanmean(train, axis=0)
        std = np.nanstd(train, axis=0)
    else:
        mean = float(np.nanmean(train))
        std = float(np.nanstd(train))
    if np.any(np.asarray(std) < STD_FLOOR):
        warnings.warn("zero variance in training range; std floored at 1e-8", RuntimeWarning, stacklevel=2)
        std = np.maximum(std, STD_FLOOR)
        if np.ndim(std) == 0:
            std = float(std)
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, x):
    return scaler.apply(x)


def invert_scaler(scaler: Scaler, x):
    return scaler.invert(x)


@dataclass(frozen=True)
class DatasetScalers:
    power: Mapping[SeriesId, Scaler]
    weather: Mapping[int, Scaler]

    def to_dict(self) -> dict:
        return {
            "power": {str(k): [v.mean, v.std] for k, v in self.power.items()},
            "weather": {
                str(k): [np.asarray(v.mean).tolist(), np.asarray(v.std).tolist()]
                for k, v in self.weather.items()
            },
        }

    @classmethod
    def from_dict(cls, d) -> "DatasetScalers":
        def parse_id(s):
            kind, key = s.split(":", 1)
            return SeriesId(SeriesKind(kind), key)

        power = {parse_id(k): Scaler(float(m), float(s)) for k, (m, s) in d["power"].items()}
        weather = {int(k): Scaler(np.array(m), np.array(s)) for k, (m, s) in d["weather"].items()}
        return cls(power, weather)


def fit_dataset_scalers(dataset: RegionalDataset, train_days: range, ids=None) -> DatasetScalers:
    """Scalers for every power series in ``ids`` (default: all) and every weather cluster."""
    if ids is None:
        ids = (
            dataset.postcode_ids
            + [a.id for a in dataset.subregion_aggregates]
            + [dataset.regional.id]
        )
    power = {sid: fit_scaler(dataset.series(sid), train_days) for sid in ids}
    weather = {w.location_id: fit_scaler(w, train_days) for w in dataset.weather_series}
    return DatasetScalers(power, weather)


# --- samples ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Windowed samples, batched per input series.

    ``inputs[j]`` has shape (samples, t, f_j); ``targets`` has shape
    (samples, h). Row i of every array belongs to forecast day ``days[i]``.
    """

    inputs: list
    targets: np.ndarray
    days: np.ndarray

    def __len__(self):
        return int(self.targets.shape[0])

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet([x[idx] for x in self.inputs], self.targets[idx], self.days[idx])

    def feature_matrices(self, i: int) -> list[FeatureMatrix]:
        return [FeatureMatrix(x[i], ()) for x in self.inputs]


def _scaled_power(dataset, sid, scalers):
    grid = dataset.series(sid).by_day()
    if scalers is None:
        return grid
    return scalers.power[sid].apply(grid)


def _scaled_weather(dataset, sid, scalers):
    w = dataset.weather_for(sid)
    if w is None:
        return None
    grid = w.by_day()
    if scalers is None:
        return grid
    return scalers.weather[w.location_id].apply(grid)


def make_samples(
    dataset: RegionalDataset,
    target: SeriesId,
    inputs: Sequence[SeriesId],
    lag_days: int = DEFAULT_LAG_DAYS,
    horizon: int = HORIZON,
    *,
    append_target: bool = False,
    days=None,
    scalers: DatasetScalers | None = None,
) -> SampleSet:
    """One sample per eligible forecast day.

    Postcode inputs carry their cluster's weather; aggregate inputs are
    lag-only. ``append_target`` adds the target's own lag matrix as the last
    input. ``days`` restricts the forecast days (default: every day with
    ``lag_days`` of history). With ``scalers`` all values are standardised.
    """
    n_days = dataset.n_days
    if days is None:
        days = range(lag_days, n_days)
    days = np.asarray(list(days), dtype=int)
    if days.size == 0:
        raise WindowingError(f"no eligible days: {n_days} days of data with lag {lag_days}")
    for d in (days.min(), days.max()):
        _check_window(int(d), lag_days, n_days, horizon)

    ids = list(inputs) + ([target] if append_target else [])
    batched = []
    for sid in ids:
        power = _scaled_power(dataset, sid, scalers)
        weather = _scaled_weather(dataset, sid, scalers)
        batched.append(np.stack([_feature_grid(power, weather, d, lag_days) for d in days]))
    targets = _scaled_power(dataset, target, scalers)[days]
    return SampleSet(batched, np.array(targets), days)


# --- splits -----------------------------------------------------------------


@dataclass(frozen=True)
class DayView:
    dataset: RegionalDataset
    start: int
    stop: int

    @property
    def days(self) -> range:
        return range(self.start, self.stop)

    @property
    def n_days(self) -> int:
        return self.stop - self.start


def train_test_split(dataset: RegionalDataset, test_days: int) -> tuple[DayView, DayView]:
    """Chronological split: the final ``test_days`` days are the test view."""
    n = dataset.n_days
    if not 0 <= test_days < n:
        raise ConfigurationError(f"test_days must be in [0, {n}), got {test_days}")
    cut = n - test_days
    return DayView(dataset, 0, cut), DayView(dataset, cut, n)


# --- sub-region assignment --------------------------------------------------


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia_history: list
    n_iter: int


def _kmeans_pp(points, k, rng):
    n = len(points)
    centroids = [points[rng.integers(n)]]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining points coincide with chosen centroids
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centroids)


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding on Euclidean distance."""
    points = np.asarray(points, dtype=np.float64)
    n_distinct = len(np.unique(points, axis=0))
    if k < 1 or k > n_distinct:
        raise ConfigurationError(
            f"cannot form {k} clusters from {n_distinct} distinct coordinates"
        )
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(points, k, rng)
    assign = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            members = points[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(d2[np.arange(len(points)), assign].argmax())
                centroids[j] = points[far]
    return KMeansResult(assign, centroids, history, it)


def assign_subregions(coords, k: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Cluster (lat, lon) coordinates into ``k`` sub-regions."""
    res = kmeans(coords, k, seed)
    return res.assignments, res.centroids


# --- missing values ---------------------------------------------------------


MAX_MISSING_FRACTION = 0.25


def fill_missing(values: np.ndarray, label: str = "series") -> np.ndarray:
    """Interpolate missing readings linearly within each day.

    Days with more than a quarter of their slots missing are rejected.
    """
    from .errors import DataError

    grid = np.array(values, dtype=np.float64).reshape(-1, SLOTS_PER_DAY)
    slots = np.arange(SLOTS_PER_DAY)
    for d, row in enumerate(grid):
        bad = np.isnan(row)
        if not bad.any():
            continue
        if bad.mean() > MAX_MISSING_FRACTION:
            raise DataError(f"{label}: day {d} has {int(bad.sum())} of {SLOTS_PER_DAY} readings missing")
        row[bad] = np.interp(slots[bad], slots[~bad], row[~bad])
    return grid.reshape(-1)
