"""Deterministic synthetic regional PV datasets.

Each sub-region carries a latent cloud process: a daily AR(1) level plus an
hourly AR(1) fluctuation, squashed to [0, 1] by a logistic function. Postcode
power follows a shared clear-sky bell scaled by capacity and attenuated by
cloud:

    power = capacity * clearsky(slot) * (1 - alpha * cloud) * (1 + noise)

Postcodes in the same sub-region see the same latent process plus
independent per-slot perturbations, so intra-cluster correlation exceeds
inter-cluster correlation.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data import (
    FIRST_HOUR, SLOTS_PER_DAY, WEATHER_FEATURES, PowerSeries, RegionalDataset, SeriesId,
    WeatherSeries, aggregate_series, assign_subregions,
)
from .errors import ConfigurationError

NOON = 13.5
HALF_DAYLIGHT = 9.0
# region bounding box (lat, lon), roughly the south-west of Western Australia
LAT_RANGE = (-34.0, -30.5)
LON_RANGE = (115.3, 118.3)


@dataclass(frozen=True)
class GeneratorConfig:
    n_postcodes: int = 12
    n_clusters: int = 4
    n_days: int = 180
    seed: int = 0
    capacity_min: float = 50.0
    capacity_max: float = 400.0
    cloud_rho: float = 0.8
    cloud_sigma: float = 0.3
    cloud_offset: float = -0.5
    alpha: float = 0.75
    intra_cluster_noise: float = 0.3
    idiosyncratic_noise: float = 0.02
    forecast_noise: float = 0.0
    postcode_spread: float = 0.05
    seasonal_amplitude: float = 0.0
    start_date: str = "2020-02-13"

    def __post_init__(self):
        if self.n_postcodes < 1 or self.n_clusters < 1 or self.n_days < 1:
            raise ConfigurationError("n_postcodes, n_clusters and n_days must be >= 1")
        if self.n_clusters > self.n_postcodes:
            raise ConfigurationError(
                f"n_clusters ({self.n_clusters}) must not exceed n_postcodes ({self.n_postcodes})"
            )
        if not 0 <= self.cloud_rho < 1:
            raise ConfigurationError("cloud_rho must be in [0, 1)")
        if not 0 < self.capacity_min <= self.capacity_max:
            raise ConfigurationError("need 0 < capacity_min <= capacity_max")
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError("alpha must be in [0, 1]")
        for name in ("cloud_sigma", "intra_cluster_noise", "idiosyncratic_noise", "forecast_noise",
                     "postcode_spread", "seasonal_amplitude"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise ConfigurationError(f"start_date: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        names = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigurationError(f"unknown generator keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            default = getattr(cls, k)
            try:
                kw[k] = type(default)(v)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{k}: cannot convert {v!r}") from exc
        return cls(**kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def clearsky(slot_hours=None) -> np.ndarray:
    """Raised-cosine bell over 05:00..22:00, peaking at 13:30; never exactly zero in-day."""
    hours = np.arange(FIRST_HOUR, FIRST_HOUR + SLOTS_PER_DAY) if slot_hours is None else np.asarray(slot_hours)
    x = np.clip((hours - NOON) / HALF_DAYLIGHT, -1.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * x))


def _ar1(rng, n, rho, sigma, shape=()):
    out = np.empty((n,) + shape)
    x = rng.standard_normal(shape) * sigma / np.sqrt(1 - rho * rho)
    for i in range(n):
        out[i] = x
        x = rho * x + sigma * rng.standard_normal(shape)
    return out


def _latent(rng, cfg, n_days):
    """Latent cloud logits, shape (n_days, 18)."""
    daily = _ar1(rng, n_days, cfg.cloud_rho, cfg.cloud_sigma)
    hourly = _ar1(rng, n_days * SLOTS_PER_DAY, cfg.cloud_rho, cfg.cloud_sigma).reshape(n_days, SLOTS_PER_DAY)
    return daily[:, None] + hourly


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def weather_features(cloud, aux_wind, aux_pressure, bell) -> np.ndarray:
    """Seven weather columns from a (days, 18) cloud grid and auxiliary processes."""
    temperature = 18.0 + 7.0 * bell - 5.0 * cloud
    humidity = np.clip(0.35 + 0.45 * cloud - 0.15 * bell, 0.0, 1.0)
    cols = {
        "wind_speed": 3.0 + 2.0 * np.abs(aux_wind) + 1.5 * cloud,
        "temperature": temperature,
        "uv_index": 12.0 * bell * (1.0 - 0.7 * cloud),
        "cloud_cover": cloud,
        "humidity": humidity,
        "pressure": 1015.0 + 6.0 * aux_pressure - 4.0 * cloud,
        "dew_point": temperature - 20.0 * (1.0 - humidity),
    }
    return np.stack([cols[name] for name in WEATHER_FEATURES], axis=-1).reshape(-1, len(WEATHER_FEATURES))


def _coordinates(rng, cfg):
    # cluster centres on a jittered grid so they stay well separated
    side = int(np.ceil(np.sqrt(cfg.n_clusters)))
    cells = rng.permutation(side * side)[:cfg.n_clusters]
    lat_step = (LAT_RANGE[1] - LAT_RANGE[0]) / side
    lon_step = (LON_RANGE[1] - LON_RANGE[0]) / side
    centres = np.array([
        [LAT_RANGE[0] + (c // side + 0.5 + rng.uniform(-0.2, 0.2)) * lat_step,
         LON_RANGE[0] + (c % side + 0.5 + rng.uniform(-0.2, 0.2)) * lon_step]
        for c in cells
    ])
    owner = np.arange(cfg.n_postcodes) % cfg.n_clusters
    coords = centres[owner] + rng.normal(0.0, cfg.postcode_spread, size=(cfg.n_postcodes, 2))
    return coords


def generate_region(config: GeneratorConfig = GeneratorConfig()) -> RegionalDataset:
    """Build a complete RegionalDataset; identical configs give identical data."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    start = dt.date.fromisoformat(cfg.start_date)
    n_days = cfg.n_days
    coords = _coordinates(rng, cfg)
    assignment, _ = assign_subregions(coords, cfg.n_clusters, seed=cfg.seed)
    keys = [f"{6000 + 7 * i}" for i in range(cfg.n_postcodes)]
    capacity = rng.uniform(cfg.capacity_min, cfg.capacity_max, size=cfg.n_postcodes)

    bell = clearsky()[None, :]
    day_of_year = start.timetuple().tm_yday + np.arange(n_days)
    season = 1.0 + cfg.seasonal_amplitude * np.cos(2 * np.pi * (day_of_year - 1) / 365.25)
    sun = bell * season[:, None]

    latents, weather = [], []
    for c in range(cfg.n_clusters):
        latent = _latent(rng, cfg, n_days)
        aux_w = _latent(rng, cfg, n_days)
        aux_p = _latent(rng, cfg, n_days)
        fc_noise = cfg.forecast_noise * rng.standard_normal((n_days, SLOTS_PER_DAY))
        cloud_fc = _sigmoid(cfg.cloud_offset + latent + fc_noise)
        latents.append(latent)
        weather.append(WeatherSeries(c, weather_features(cloud_fc, aux_w, aux_p, bell), start))

    postcodes = []
    for i, key in enumerate(keys):
        latent = latents[assignment[i]]
        local = latent + cfg.intra_cluster_noise * rng.standard_normal(latent.shape)
        cloud = _sigmoid(cfg.cloud_offset + local)
        noise = 1.0 + cfg.idiosyncratic_noise * rng.standard_normal(latent.shape)
        power = np.maximum(capacity[i] * sun * (1.0 - cfg.alpha * cloud) * noise, 0.0)
        postcodes.append(PowerSeries(SeriesId.postcode(key), power.reshape(-1), start))

    regional = aggregate_series(postcodes, SeriesId.regional())
    subregion_of = {k: int(a) for k, a in zip(keys, assignment)}
    aggs = [
        aggregate_series([p for p, a in zip(postcodes, assignment) if a == c], SeriesId.subregion(c))
        for c in range(cfg.n_clusters)
    ]
    return RegionalDataset(postcodes, coords, weather, subregion_of, regional, aggs)
