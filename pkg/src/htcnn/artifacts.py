"""On-disk layout of trained strategies.

A strategy directory holds ``strategy.json`` plus one ``model_<component>``
entry per component model: a JSON file for every model and, for neural
models, the binary parameter file written by :mod:`htcnn.serialize`.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .data import DatasetScalers, SeriesId, SeriesKind
from .dataio import write_atomic
from .errors import DataError, StalenessError
from .serialize import load_network, save_network
from .strategies import FittedStrategy, NaiveModel, NetworkModel, SeasonalARModel, StrategyConfig


def _sid(text: str) -> SeriesId:
    kind, key = text.split(":", 1)
    return SeriesId(SeriesKind(kind), key)


def _component_file(key) -> str:
    return f"model_{key}"


def _dump(path, obj):
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_fitted(fitted: FittedStrategy, directory, dataset_hash: str, test_days: int) -> list[Path]:
    """Write every component model; returns the produced files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    components = []
    for key, model in fitted.models.items():
        base = directory / _component_file(key)
        components.append(str(key))
        if isinstance(model, NetworkModel):
            extra = {
                "model": "network",
                "family": model.family,
                "target": str(model.target),
                "inputs": [str(s) for s in model.inputs],
                "append_target": model.append_target,
                "lag_days": model.lag_days,
                "one_hot": model.one_hot,
                "scalers": model.scalers.to_dict(),
                "train": model.result.to_dict() if model.result else None,
            }
            files.append(save_network(base, model.network, model.seed, extra))
            files.append(base.with_suffix(".json"))
        elif isinstance(model, SeasonalARModel):
            _dump(base.with_suffix(".json"), {
                "model": "seasonal_ar", "target": str(model.target), "lags": list(model.lags),
                "use_weather": model.use_weather, "coef": model.coef.tolist(),
                "intercept": model.intercept.tolist(),
            })
            files.append(base.with_suffix(".json"))
        else:
            _dump(base.with_suffix(".json"), {"model": "seasonal_naive", "target": str(model.target)})
            files.append(base.with_suffix(".json"))
    meta = {
        "kind": fitted.config.kind,
        "family": fitted.config.family,
        "name": fitted.config.name,
        "hyper": fitted.config.hyper,
        "seed": fitted.seed,
        "dataset_hash": dataset_hash,
        "test_days": test_days,
        "components": components,
    }
    _dump(directory / "strategy.json", meta)
    files.append(directory / "strategy.json")
    return files


def _load_component(path: Path):
    side = json.loads(path.with_suffix(".json").read_text())
    kind = side.get("model")
    if kind == "seasonal_naive":
        return NaiveModel(_sid(side["target"]))
    if kind == "seasonal_ar":
        return SeasonalARModel(_sid(side["target"]), tuple(side["lags"]), side["use_weather"],
                               np.array(side["coef"]), np.array(side["intercept"]))
    if kind == "network":
        net, side = load_network(path)
        model = NetworkModel(
            side["family"], _sid(side["target"]), [_sid(s) for s in side["inputs"]], side["append_target"],
            net, DatasetScalers.from_dict(side["scalers"]), side["lag_days"], side["seed"], side["one_hot"],
        )
        model.trained = True
        return model
    raise DataError(f"{path}: unknown model kind {kind!r}")


def load_fitted(directory, dataset_hash: str | None = None) -> tuple[FittedStrategy, dict]:
    """Load a strategy directory; with ``dataset_hash`` reject stale artifacts."""
    directory = Path(directory)
    meta_path = directory / "strategy.json"
    if not meta_path.exists():
        raise DataError(f"{directory}: no strategy.json")
    meta = json.loads(meta_path.read_text())
    if dataset_hash is not None and meta["dataset_hash"] != dataset_hash:
        raise StalenessError(
            f"{directory}: models were trained on dataset {meta['dataset_hash'][:12]}, "
            f"not {dataset_hash[:12]}; retrain"
        )
    config = StrategyConfig(meta["kind"], meta["family"], meta["hyper"])
    models = {}
    for key in meta["components"]:
        model_key = int(key) if meta["kind"] in ("SubRegionAGG", "GlobalTCN") else key
        models[model_key] = _load_component(directory / _component_file(key))
    return FittedStrategy(config, meta["seed"], models), meta


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
