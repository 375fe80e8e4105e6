"""Hierarchical temporal convolutional networks for regional solar forecasting.

Numpy-only implementation of the data hierarchy, a small neural-network core
with hand-written gradients, the HTCNN architectures and baselines, the
forecasting strategies and the evaluation harness.
"""
__version__ = "0.1.0"

from .architectures import (  # noqa: E402
    CnnSpec, HtcnnSpec, LstmSpec, TcnSpec, build_network,
)
from .data import (  # noqa: E402
    PowerSeries, RegionalDataset, SeriesId, SeriesKind, WeatherSeries,
    aggregate_series, build_feature_matrix, kmeans, train_test_split,
)
from .evaluation import (  # noqa: E402
    build_report, mann_whitney_u, nrmse, run_experiment, skill_score,
)
from .strategies import StrategyConfig, fit_strategy, seasonal_naive  # noqa: E402
from .synthetic import GeneratorConfig, generate_region  # noqa: E402

__all__ = [
    "CnnSpec", "HtcnnSpec", "LstmSpec", "TcnSpec", "build_network",
    "PowerSeries", "RegionalDataset", "SeriesId", "SeriesKind", "WeatherSeries",
    "aggregate_series", "build_feature_matrix", "kmeans", "train_test_split",
    "build_report", "mann_whitney_u", "nrmse", "run_experiment", "skill_score",
    "StrategyConfig", "fit_strategy", "seasonal_naive",
    "GeneratorConfig", "generate_region",
]
