import numpy as np
import pytest

from htcnn.data import WEATHER_FEATURES, aggregate_series
from htcnn.dataio import dataset_hash, emit_dataset, load_dataset
from htcnn.errors import ConfigurationError, DataError, ParseError
from htcnn.evaluation import nrmse
from htcnn.strategies import seasonal_naive
from htcnn.synthetic import GeneratorConfig, clearsky, generate_region


@pytest.fixture(scope="module")
def default_dataset():
    return generate_region(GeneratorConfig())


def test_default_shape(default_dataset):
    ds = default_dataset
    assert (ds.n_postcodes, ds.n_clusters, ds.n_days) == (12, 4, 180)


def test_config_rejects_too_many_clusters():
    with pytest.raises(ConfigurationError, match="must not exceed"):
        GeneratorConfig(n_postcodes=3, n_clusters=4)


@pytest.mark.parametrize("field,value", [("cloud_rho", 1.0), ("cloud_sigma", -0.1), ("forecast_noise", -1.0)])
def test_config_rejects_bad_values(field, value):
    with pytest.raises(ConfigurationError, match=field):
        GeneratorConfig(**{field: value})


def test_config_from_dict_converts():
    cfg = GeneratorConfig.from_dict({"n_days": "30", "alpha": 1})
    assert cfg.n_days == 30 and cfg.alpha == 1.0
    with pytest.raises(ConfigurationError, match="unknown"):
        GeneratorConfig.from_dict({"n_dayz": 3})


def test_no_volatility_every_day_identical():
    ds = generate_region(GeneratorConfig(n_days=10, cloud_sigma=0.0, intra_cluster_noise=0.0,
                                         idiosyncratic_noise=0.0))
    grid = ds.regional.by_day()
    assert np.all(grid == grid[0])
    rid = ds.regional.id
    assert all(nrmse(ds.regional.day(d), seasonal_naive(ds, rid, d)) == 0.0 for d in range(1, 10))


def test_regional_is_sum(default_dataset):
    recomputed = aggregate_series(default_dataset.postcode_series).values
    np.testing.assert_allclose(default_dataset.regional.values, recomputed, rtol=1e-9)


def test_seed_determinism():
    a = generate_region(GeneratorConfig(n_days=20, seed=5))
    b = generate_region(GeneratorConfig(n_days=20, seed=5))
    c = generate_region(GeneratorConfig(n_days=20, seed=6))
    assert np.array_equal(a.regional.values, b.regional.values)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a.weather_series, b.weather_series))
    assert not np.array_equal(a.regional.values, c.regional.values)


def test_power_nonnegative(default_dataset):
    for s in default_dataset.postcode_series:
        assert np.all(s.values >= 0)


def test_clearsky_bell():
    cs = clearsky()
    assert cs.shape == (18,)
    assert np.all(cs > 0) and np.argmax(cs) in (8, 9)
    np.testing.assert_allclose(cs, cs[::-1])


def test_weather_ranges(default_dataset):
    ci, hi = WEATHER_FEATURES.index("cloud_cover"), WEATHER_FEATURES.index("humidity")
    for w in default_dataset.weather_series:
        for j in (ci, hi):
            assert np.all((w.features[:, j] >= 0) & (w.features[:, j] <= 1))


def test_intra_cluster_correlation_exceeds_inter(default_dataset):
    ds = default_dataset
    # correlate normalised daily energy so capacity and the shared bell drop out
    energy = np.array([s.by_day().sum(axis=1) for s in ds.postcode_series])
    corr = np.corrcoef(energy)
    cl = np.array([ds.subregion_of[s.id.key] for s in ds.postcode_series])
    same = cl[:, None] == cl[None, :]
    off = ~np.eye(len(cl), dtype=bool)
    assert corr[same & off].mean() > corr[~same].mean()


def test_forecast_noise_only_changes_weather():
    a = generate_region(GeneratorConfig(n_days=10, forecast_noise=0.0))
    b = generate_region(GeneratorConfig(n_days=10, forecast_noise=0.5))
    assert np.array_equal(a.regional.values, b.regional.values)
    assert not np.array_equal(a.weather_series[0].features, b.weather_series[0].features)


def test_assignment_uses_kmeans(default_dataset):
    from htcnn.data import assign_subregions
    assign, _ = assign_subregions(default_dataset.postcode_coords, 4, seed=0)
    keys = [s.id.key for s in default_dataset.postcode_series]
    assert [default_dataset.subregion_of[k] for k in keys] == assign.tolist()


# --- on-disk format ---------------------------------------------------------


@pytest.fixture()
def emitted(tmp_path, tiny_dataset):
    emit_dataset(tiny_dataset, tmp_path / "d", manifest={"seed": 2})
    return tmp_path / "d"


def test_round_trip(emitted, tiny_dataset):
    back = load_dataset(emitted)
    for a, b in zip(tiny_dataset.postcode_series, back.postcode_series):
        assert a.id == b.id and np.array_equal(a.values, b.values)
    assert np.array_equal(tiny_dataset.regional.values, back.regional.values)
    for a, b in zip(tiny_dataset.weather_series, back.weather_series):
        assert np.array_equal(a.features, b.features)
    assert np.array_equal(tiny_dataset.postcode_coords, back.postcode_coords)
    assert back.subregion_of == tiny_dataset.subregion_of


def test_files_and_manifest(emitted, tiny_dataset):
    names = sorted(p.name for p in emitted.iterdir())
    assert "postcodes.csv" in names and "regional.csv" in names and "manifest.txt" in names
    assert sum(n.startswith("weather_") for n in names) == tiny_dataset.n_clusters
    assert "seed = 2" in (emitted / "manifest.txt").read_text()


def test_hash_stable(tmp_path, tiny_dataset, emitted):
    emit_dataset(tiny_dataset, tmp_path / "e")
    assert dataset_hash(emitted) == dataset_hash(tmp_path / "e")


def test_missing_weather_file(emitted):
    (emitted / "weather_1.csv").unlink()
    with pytest.raises(DataError, match="cluster 1"):
        load_dataset(emitted)


def test_header_order_enforced(emitted):
    p = emitted / "postcodes.csv"
    lines = p.read_text().splitlines()
    lines[0] = "lat,postcode_id,lon,subregion"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="postcodes.csv:1"):
        load_dataset(emitted)


def test_malformed_value_names_line(emitted):
    key = next(p for p in emitted.iterdir() if p.name.startswith("power_"))
    lines = key.read_text().splitlines()
    lines[3] = lines[3].split(",")[0] + ",abc"
    key.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match=f"{key.name}:4"):
        load_dataset(emitted)


def _blank(path, rows):
    lines = path.read_text().splitlines()
    for r in rows:
        lines[r] = lines[r].split(",")[0] + ","
    path.write_text("\n".join(lines) + "\n")


def test_interpolated_gap_breaks_coherence(emitted):
    """A filled gap no longer sums to the stored regional value, and the loader says so."""
    key = next(p for p in sorted(emitted.iterdir()) if p.name.startswith("power_"))
    _blank(key, [5])
    with pytest.raises(DataError, match="not the sum"):
        load_dataset(emitted)


def test_sparse_day_rejected(emitted):
    key = next(p for p in sorted(emitted.iterdir()) if p.name.startswith("power_"))
    _blank(key, range(1, 7))
    with pytest.raises(DataError, match=key.name):
        load_dataset(emitted)


def test_missing_directory(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nothing")
