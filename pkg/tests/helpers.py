"""Hand-built datasets for tests."""
import numpy as np

from htcnn.data import SLOTS_PER_DAY, PowerSeries, RegionalDataset, SeriesId, WeatherSeries, aggregate_series


def dataset_from_arrays(power: dict, clusters: dict, weather=None, coords=None):
    """``power`` maps postcode key -> values of length n_days * 18."""
    series = [PowerSeries(SeriesId.postcode(k), np.asarray(v, dtype=float)) for k, v in power.items()]
    n = series[0].values.size
    k = max(clusters.values()) + 1
    if weather is None:
        weather = [WeatherSeries(c, np.full((n, 7), 0.5)) for c in range(k)]
    if coords is None:
        coords = np.arange(2.0 * len(series)).reshape(-1, 2)
    regional = aggregate_series(series, SeriesId.regional())
    return RegionalDataset(series, coords, weather, clusters, regional)


def without_postcode(ds, key):
    keep = [s for s in ds.postcode_series if s.id.key != key]
    idx = [i for i, s in enumerate(ds.postcode_series) if s.id.key != key]
    regional = aggregate_series(keep, SeriesId.regional())
    return RegionalDataset(keep, ds.postcode_coords[idx], ds.weather_series,
                           {s.id.key: ds.subregion_of[s.id.key] for s in keep}, regional)


def per_day(values):
    return np.repeat(np.asarray(values, dtype=float), SLOTS_PER_DAY)
