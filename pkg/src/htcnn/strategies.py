"""Regional forecasting strategies and classical baselines.

A strategy turns one or more component models into a regional day-ahead
18-vector:

    Direct        one model forecasts the regional series
    SubRegionAGG  one HTCNN per sub-region; sub-region forecasts are summed
    PostcodeAGG   one model per postcode; postcode forecasts are summed
    GlobalTCN     one TCN per sub-region shared by its postcodes; summed

Component forecasts are clamped at zero before summation, so aggregated
forecasts equal the sum of their stored components exactly.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .architectures import CnnSpec, HtcnnSpec, LstmSpec, TcnSpec, build_network
from .data import (
    DEFAULT_LAG_DAYS, HORIZON, N_WEATHER, RegionalDataset, SampleSet, SeriesId,
    _feature_grid, fit_dataset_scalers, make_samples,
)
from .errors import ConfigurationError, UsageError, WindowingError
from .nn.train import TrainConfig, TrainResult, train

STRATEGIES = ("Direct", "SubRegionAGG", "PostcodeAGG", "GlobalTCN")
FAMILIES = ("SN", "SAR", "LSTM", "CNN", "TCN", "HTCNN.A1", "HTCNN.A2")
NEURAL = ("LSTM", "CNN", "TCN", "HTCNN.A1", "HTCNN.A2")

# strategy -> model families it supports (rows of the results table)
COMPATIBILITY = {
    "Direct": ("SN", "SAR", "LSTM", "CNN", "TCN", "HTCNN.A1", "HTCNN.A2"),
    "PostcodeAGG": ("SN", "SAR", "LSTM", "CNN", "TCN"),
    "SubRegionAGG": ("HTCNN.A1", "HTCNN.A2"),
    "GlobalTCN": ("TCN",),
}

# desk-scale defaults; every key may be overridden through StrategyConfig.hyper
DEFAULT_HYPER = {
    "lag_days": DEFAULT_LAG_DAYS,
    "kernel_size": 3,
    "m": 2,
    "dropout": 0.1,
    "filters": 32,
    "n_blocks": 1,
    "F_prime": 32,
    "F_double_prime": 16,
    "tcn_blocks_individual": 1,
    "tcn_blocks_aggregate": 1,
    "k_stages": 2,
    "cnn_layers": 2,
    "pool_size": 2,
    "d": 16,
    "lstm_layers": 2,
    "ridge": 1.0,
    "epochs": 300,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "patience": 50,
    "validation_fraction": 0.1,
}


def check_compatible(kind: str, family: str):
    if kind not in COMPATIBILITY:
        raise ConfigurationError(f"unknown strategy {kind!r}; choose from {', '.join(STRATEGIES)}")
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown model family {family!r}; choose from {', '.join(FAMILIES)}")
    if family not in COMPATIBILITY[kind]:
        allowed = ", ".join(COMPATIBILITY[kind])
        raise ConfigurationError(
            f"model family {family} cannot be used with strategy {kind} (allowed: {allowed})"
        )


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    family: str
    hyper: Mapping = field(default_factory=dict)

    def __post_init__(self):
        check_compatible(self.kind, self.family)
        unknown = set(self.hyper) - set(DEFAULT_HYPER)
        if unknown:
            raise ConfigurationError(f"unknown hyper-parameters: {sorted(unknown)}")
        object.__setattr__(self, "hyper", dict(self.hyper))

    @property
    def name(self) -> str:
        if self.kind == "GlobalTCN":
            return "TCN.Global.PostcodeAGG"
        return f"{self.family}.{self.kind}"

    def param(self, key):
        return self.hyper.get(key, DEFAULT_HYPER[key])

    def model_count(self, dataset: RegionalDataset) -> int:
        return {
            "Direct": 1,
            "SubRegionAGG": dataset.n_clusters,
            "PostcodeAGG": dataset.n_postcodes,
            "GlobalTCN": dataset.n_clusters,
        }[self.kind]

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=int(self.param("epochs")),
            batch_size=int(self.param("batch_size")),
            learning_rate=float(self.param("learning_rate")),
            patience=int(self.param("patience")),
            validation_fraction=float(self.param("validation_fraction")),
            seed=seed,
        )


def component_seed(seed: int, name: str) -> int:
    """Seed for one component model; stable when other components change."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


@dataclass
class RegionalForecast:
    day: int
    values: np.ndarray
    components: dict = field(default_factory=dict)


# --- classical baselines ----------------------------------------------------


def seasonal_naive(dataset: RegionalDataset, target: SeriesId, day: int) -> np.ndarray:
    """Yesterday's profile as today's forecast."""
    if day < 1:
        raise WindowingError("seasonal naive needs day >= 1")
    return np.array(dataset.series(target).day(day - 1))


def ridge_fit(x, y, lam, solver="closed", tol=1e-12, max_iter=500_000, fit_intercept=True):
    """Ridge regression with an unpenalised intercept.

    Columns of ``x`` are centred and scaled to unit variance before the
    penalty is applied; the returned coefficients are on the raw scale.
    ``solver`` is "closed" (normal equations) or "gd" (gradient descent).
    Without ``fit_intercept`` nothing is centred and the intercept is 0.
    """
    if lam <= 0:
        raise ConfigurationError("ridge penalty must be > 0")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if fit_intercept:
        mx, my = x.mean(axis=0), y.mean()
        sx = x.std(axis=0)
    else:
        mx, my = np.zeros(x.shape[1]), 0.0
        sx = np.sqrt(np.mean(x * x, axis=0))
    sx = np.where(sx > 1e-12, sx, 1.0)
    xs = (x - mx) / sx
    yc = y - my
    gram = xs.T @ xs + lam * np.eye(x.shape[1])
    rhs = xs.T @ yc
    if solver == "closed":
        a = np.linalg.solve(gram, rhs)
    elif solver == "gd":
        step = 1.0 / np.linalg.eigvalsh(gram)[-1]
        a = np.zeros(x.shape[1])
        for _ in range(max_iter):
            g = gram @ a - rhs
            a -= step * g
            if np.max(np.abs(g)) < tol:
                break
    else:
        raise ConfigurationError(f"unknown solver {solver!r}")
    coef = a / sx
    return coef, my - mx @ coef


@dataclass
class SeasonalARModel:
    """Per-slot linear regression on same-slot power lags (plus forecast-day weather).

    A clearly labelled stand-in for seasonal ARIMA: no moving-average terms
    and no automatic order search.
    """

    target: SeriesId
    lags: tuple
    use_weather: bool
    coef: np.ndarray  # (18, n_features)
    intercept: np.ndarray  # (18,)

    def features(self, dataset, day):
        grid = dataset.series(self.target).by_day()
        cols = [grid[day - lag] for lag in self.lags]
        if self.use_weather:
            w = dataset.weather_for(self.target).by_day()[day]
            cols += [w[:, j] for j in range(N_WEATHER)]
        return np.stack(cols, axis=1)

    def forecast(self, dataset, day) -> np.ndarray:
        if day < max(self.lags):
            raise WindowingError(f"day {day} needs {max(self.lags)} days of history")
        x = self.features(dataset, day)
        return np.einsum("sj,sj->s", x, self.coef) + self.intercept

    predict = forecast


def seasonal_linear_ar(dataset: RegionalDataset, target: SeriesId, lags=7, ridge=1.0,
                       train_days=None, use_weather=False, solver="closed",
                       fit_intercept=True) -> SeasonalARModel:
    """Fit one ridge regression per in-day slot on same-slot lagged days.

    A pure recurrence with a unit root (lag weights summing to one) makes the
    intercept collinear with the lags; fit those with ``fit_intercept=False``.
    """
    lags = tuple(range(1, lags + 1)) if isinstance(lags, int) else tuple(sorted(lags))
    if use_weather and dataset.weather_for(target) is None:
        raise ConfigurationError(f"{target} has no weather; cannot fit the weather variant")
    if train_days is None:
        train_days = range(dataset.n_days)
    days = [d for d in train_days if d >= max(lags)]
    if not days:
        raise WindowingError(f"need at least {max(lags) + 1} days of training data")
    proto = SeasonalARModel(target, lags, use_weather, None, None)
    x = np.stack([proto.features(dataset, d) for d in days])  # (n, 18, p)
    y = dataset.series(target).by_day()[days]
    coef, intercept = zip(*(ridge_fit(x[:, s], y[:, s], ridge, solver, fit_intercept=fit_intercept) for s in range(HORIZON)))
    return SeasonalARModel(target, lags, use_weather, np.array(coef), np.array(intercept))


@dataclass
class NaiveModel:
    target: SeriesId

    def predict(self, dataset, day):
        return seasonal_naive(dataset, self.target, day)


# --- neural component models ------------------------------------------------


def network_spec(family: str, config: StrategyConfig, n_series: int, f: int, f_agg: int):
    p = config.param
    if family.startswith("HTCNN"):
        return HtcnnSpec(
            variant=family.split(".")[1], n_series=n_series, t=HORIZON, f=f, f_agg=f_agg, h=HORIZON,
            filters_individual=int(p("F_prime")), filters_aggregate=int(p("F_double_prime")),
            tcn_blocks_individual=int(p("tcn_blocks_individual")),
            tcn_blocks_aggregate=int(p("tcn_blocks_aggregate")),
            m=int(p("m")), kernel_size=int(p("kernel_size")), k_stages=int(p("k_stages")),
            dropout=float(p("dropout")),
        )
    if family == "TCN":
        return TcnSpec(t=HORIZON, f=f, h=HORIZON, filters=int(p("filters")), kernel_size=int(p("kernel_size")),
                       m=int(p("m")), n_blocks=int(p("n_blocks")), dropout=float(p("dropout")))
    if family == "CNN":
        return CnnSpec(t=HORIZON, f=f, h=HORIZON, filters=int(p("filters")), kernel_size=int(p("kernel_size")),
                       n_layers=int(p("cnn_layers")), pool_size=int(p("pool_size")))
    if family == "LSTM":
        return LstmSpec(t=HORIZON, f=f, h=HORIZON, d=int(p("d")), n_layers=int(p("lstm_layers")))
    raise ConfigurationError(f"{family} is not a neural family")


@dataclass
class NetworkModel:
    """A trained network plus the recipe that builds its inputs.

    ``inputs`` lists the series whose feature matrices are fed first;
    ``append_target`` adds the target's own lag-only matrix last. ``one_hot``
    (global models) maps a postcode key to an identity column index.
    """

    family: str
    target: SeriesId
    inputs: list
    append_target: bool
    network: object
    scalers: object
    lag_days: int
    seed: int
    one_hot: dict | None = None
    result: TrainResult | None = None
    trained: bool = False

    def _features(self, dataset, day, series_ids=None, postcode=None):
        ids = list(self.inputs if series_ids is None else series_ids)
        ids += [self.target] if self.append_target else []
        mats = []
        for sid in ids:
            power = self.scalers.power[sid].apply(dataset.series(sid).by_day())
            w = dataset.weather_for(sid)
            wgrid = None if w is None else self.scalers.weather[w.location_id].apply(w.by_day())
            grid = _feature_grid(power, wgrid, day, self.lag_days)
            if self.one_hot is not None:
                grid = np.concatenate([grid, _one_hot_block(self.one_hot, postcode or sid.key)], axis=1)
            mats.append(grid[None])
        return mats

    def predict(self, dataset, day) -> np.ndarray:
        return self.predict_for(dataset, day, self.target)

    def predict_for(self, dataset, day, target: SeriesId) -> np.ndarray:
        """Unclamped forecast in kW; ``target`` differs from self.target only for global models."""
        if not self.trained:
            raise UsageError(f"model for {target} has not been trained")
        if day < self.lag_days or day >= dataset.n_days:
            raise WindowingError(f"day {day} outside the forecastable range [{self.lag_days}, {dataset.n_days})")
        if self.one_hot is not None:
            if target.key not in self.one_hot:
                raise UsageError(f"postcode {target.key} is not covered by this global model")
            mats = self._features(dataset, day, [target], target.key)
        else:
            mats = self._features(dataset, day)
        out = self.network.predict(mats)[0]
        return self.scalers.power[target].invert(out)


def _one_hot_block(index: dict, key: str) -> np.ndarray:
    if key not in index:
        raise UsageError(f"unknown postcode {key!r} for global model")
    block = np.zeros((HORIZON, len(index)))
    block[:, index[key]] = 1.0
    return block


def fit_network_model(dataset, config: StrategyConfig, target: SeriesId, inputs: list, append_target: bool,
                      train_days: range, seed: int) -> NetworkModel:
    lag = int(config.param("lag_days"))
    days = [d for d in train_days if d >= lag]
    ids = list(inputs) + [target]
    scalers = fit_dataset_scalers(dataset, train_days, ids=ids)
    samples = make_samples(dataset, target, inputs, lag, append_target=append_target, days=days, scalers=scalers)
    family = config.family
    if family.startswith("HTCNN"):
        spec = network_spec(family, config, len(inputs), samples.inputs[0].shape[2], samples.inputs[-1].shape[2])
    else:
        spec = network_spec(family, config, 1, samples.inputs[0].shape[2], 0)
    net = build_network(spec, seed)
    model = NetworkModel(family, target, list(inputs), append_target, net, scalers, lag, seed)
    model.result = train(net, samples, config.train_config(seed))
    model.trained = True
    return model


def fit_global_model(dataset, config: StrategyConfig, cluster: int, train_days: range, seed: int) -> NetworkModel:
    """One TCN trained on the pooled samples of every postcode in ``cluster``."""
    lag = int(config.param("lag_days"))
    members = dataset.member_ids(cluster)
    index = {sid.key: i for i, sid in enumerate(members)}
    scalers = fit_dataset_scalers(dataset, train_days, ids=members)
    days = [d for d in train_days if d >= lag]
    parts = []
    for sid in members:
        s = make_samples(dataset, sid, [sid], lag, days=days, scalers=scalers)
        block = np.broadcast_to(_one_hot_block(index, sid.key), (len(s),) + (HORIZON, len(index)))
        parts.append(SampleSet([np.concatenate([s.inputs[0], block], axis=2)], s.targets, s.days))
    # pooled chronologically so the validation tail holds the latest days of every member
    order = np.argsort(np.concatenate([p.days for p in parts]), kind="stable")
    pooled = SampleSet(
        [np.concatenate([p.inputs[0] for p in parts])[order]],
        np.concatenate([p.targets for p in parts])[order],
        np.concatenate([p.days for p in parts])[order],
    )
    spec = network_spec("TCN", config, 1, pooled.inputs[0].shape[2], 0)
    net = build_network(spec, seed)
    model = NetworkModel("TCN", SeriesId.subregion(cluster), [], False, net, scalers, lag, seed, one_hot=index)
    model.pooled_samples = len(pooled)
    model.result = train(net, pooled, config.train_config(seed))
    model.trained = True
    return model


# --- strategy forecasts -----------------------------------------------------


def _clamp(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def _sum_components(components: dict) -> np.ndarray:
    vals = list(components.values())
    total = vals[0].copy()
    for v in vals[1:]:
        total = total + v
    return total


def forecast_direct(model, dataset, day) -> RegionalForecast:
    return RegionalForecast(day, _clamp(model.predict(dataset, day)))


def forecast_subregion_agg(models: Mapping[int, object], dataset, day) -> RegionalForecast:
    comps = {}
    for c in range(dataset.n_clusters):
        if c not in models:
            raise UsageError(f"no model for sub-region {c}")
        comps[str(SeriesId.subregion(c))] = _clamp(models[c].predict(dataset, day))
    return RegionalForecast(day, _sum_components(comps), comps)


def forecast_postcode_agg(models: Mapping[str, object], dataset, day) -> RegionalForecast:
    comps = {}
    for sid in dataset.postcode_ids:
        if sid.key not in models:
            raise UsageError(f"no model for postcode {sid.key}")
        comps[str(sid)] = _clamp(models[sid.key].predict(dataset, day))
    return RegionalForecast(day, _sum_components(comps), comps)


def forecast_global_tcn(models: Mapping[int, NetworkModel], dataset, day) -> RegionalForecast:
    comps = {}
    for sid in dataset.postcode_ids:
        c = dataset.subregion_of[sid.key]
        if c not in models:
            raise UsageError(f"no global model for sub-region {c}")
        comps[str(sid)] = _clamp(models[c].predict_for(dataset, day, sid))
    return RegionalForecast(day, _sum_components(comps), comps)


@dataclass
class FittedStrategy:
    config: StrategyConfig
    seed: int
    models: dict

    @property
    def model_count(self) -> int:
        return len(self.models)

    def forecast(self, dataset, day) -> RegionalForecast:
        kind = self.config.kind
        if kind == "Direct":
            return forecast_direct(self.models["region"], dataset, day)
        if kind == "SubRegionAGG":
            return forecast_subregion_agg(self.models, dataset, day)
        if kind == "PostcodeAGG":
            return forecast_postcode_agg(self.models, dataset, day)
        return forecast_global_tcn(self.models, dataset, day)

    def train_results(self) -> dict:
        return {str(k): m.result for k, m in self.models.items() if getattr(m, "result", None) is not None}


def _fit_single(dataset, config, target, inputs, append_target, train_days, seed, weather):
    fam = config.family
    if fam == "SN":
        return NaiveModel(target)
    if fam == "SAR":
        return seasonal_linear_ar(dataset, target, int(config.param("lag_days")), float(config.param("ridge")),
                                  train_days, use_weather=weather)
    return fit_network_model(dataset, config, target, inputs, append_target, train_days,
                             component_seed(seed, str(target)))


def fit_strategy(dataset: RegionalDataset, config: StrategyConfig, train_days: range, seed: int = 0) -> FittedStrategy:
    """Fit every component model a strategy needs on ``train_days``."""
    kind, fam = config.kind, config.family
    regional = dataset.regional.id
    models = {}
    if kind == "Direct":
        inputs = dataset.postcode_ids if fam.startswith("HTCNN") else []
        models["region"] = _fit_single(dataset, config, regional, inputs, True, train_days, seed, False)
    elif kind == "SubRegionAGG":
        for c in range(dataset.n_clusters):
            target = SeriesId.subregion(c)
            models[c] = _fit_single(dataset, config, target, dataset.member_ids(c), True, train_days, seed, False)
    elif kind == "PostcodeAGG":
        for sid in dataset.postcode_ids:
            models[sid.key] = _fit_single(dataset, config, sid, [sid], False, train_days, seed, True)
    else:
        for c in range(dataset.n_clusters):
            models[c] = fit_global_model(dataset, config, c, train_days,
                                         component_seed(seed, str(SeriesId.subregion(c))))
    fitted = FittedStrategy(config, seed, models)
    if fitted.model_count != config.model_count(dataset):
        raise AssertionError(f"{config.name}: {fitted.model_count} models, expected {config.model_count(dataset)}")
    return fitted
