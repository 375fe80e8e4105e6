"""Forecast evaluation: per-day nRMSE, skill score, significance and reports.

Averaging order is fixed: nRMSE per test day, then the mean over test days
for each seed, then mean and (population) standard deviation over seeds.
Significance compares per-day nRMSE values pooled across seeds.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import SLOTS_PER_DAY, train_test_split
from .errors import ConfigurationError, HtcnnError, ParseError

log = logging.getLogger(__name__)

ALPHA = 0.05
EXACT_MAX_N = 8
FORECAST_HEADER = ["day", "slot", "actual_kw", "forecast_kw", "strategy", "model_family", "seed"]


def nrmse(actual, forecast) -> float:
    """RMSE over the day's slots divided by the day's mean actual generation.

    Returns NaN (undefined) when the mean actual is not positive.
    """
    actual = np.asarray(actual, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    if actual.shape != forecast.shape:
        raise ValueError(f"length mismatch: {actual.shape} vs {forecast.shape}")
    mean = actual.mean()
    if not mean > 0:
        return float("nan")
    return float(np.sqrt(np.mean((forecast - actual) ** 2)) / mean)


def skill_score(nrmse_method: float, nrmse_sn: float) -> float:
    """Percentage improvement over seasonal naive; NaN when the reference is 0."""
    if not nrmse_sn > 0:
        return float("nan")
    return (1.0 - nrmse_method / nrmse_sn) * 100.0


def error_reduction_pct(nrmse_baseline: float, nrmse_proposed: float) -> float:
    if not nrmse_baseline > 0:
        raise ValueError("baseline nRMSE must be positive")
    return (nrmse_baseline - nrmse_proposed) / nrmse_baseline * 100.0


# --- Mann-Whitney U ---------------------------------------------------------


@dataclass(frozen=True)
class MannWhitneyResult:
    u_a: float
    u_b: float
    p_value: float
    method: str


def midranks(x) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_p(ranks2, n_a, observed2):
    """Two-sided p of the doubled rank sum of a size-n_a subset, by dynamic programming.

    ``ranks2`` are integer doubled midranks; counts the subsets whose sum lies
    at least as far from the null mean as ``observed2``.
    """
    total = int(ranks2.sum())
    counts = np.zeros((n_a + 1, total + 1))
    counts[0, 0] = 1.0
    for r in ranks2:
        r = int(r)
        for j in range(n_a, 0, -1):
            counts[j, r:] += counts[j - 1, :total + 1 - r]
    dist = counts[n_a]
    n = len(ranks2)
    mean2 = n_a * (n + 1)  # doubled null mean of the rank sum
    dev = abs(observed2 - mean2)
    sums = np.arange(total + 1)
    extreme = np.abs(2 * sums - 2 * mean2) >= 2 * dev
    return min(1.0, float(dist[extreme].sum() / dist.sum()))


def mann_whitney_u(sample_a, sample_b) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test.

    Exact null distribution (ties handled through midranks) when the smaller
    sample has at most 8 values; otherwise the tie-corrected normal
    approximation with continuity correction.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be nonempty")
    ranks = midranks(np.concatenate([a, b]))
    r_a = ranks[:n_a].sum()
    u_a = r_a - n_a * (n_a + 1) / 2.0
    u_b = n_a * n_b - u_a
    n = n_a + n_b
    if np.all(ranks == ranks[0]):
        return MannWhitneyResult(u_a, u_b, 1.0, "degenerate")
    if min(n_a, n_b) <= EXACT_MAX_N:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        p = _exact_p(ranks2, n_a, int(ranks2[:n_a].sum()))
        return MannWhitneyResult(u_a, u_b, p, "exact")
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    sigma = math.sqrt(n_a * n_b / 12.0 * ((n + 1) - tie_term))
    mu = n_a * n_b / 2.0
    z = max(abs(u_a - mu) - 0.5, 0.0) / sigma
    return MannWhitneyResult(u_a, u_b, min(1.0, math.erfc(z / math.sqrt(2.0))), "normal")


# --- forecast records -------------------------------------------------------


@dataclass(frozen=True)
class DayError:
    day: int
    nrmse: float


@dataclass(frozen=True)
class ForecastRecord:
    """One regional forecast day for one (strategy, family, seed)."""

    day: int
    actual: np.ndarray
    forecast: np.ndarray
    strategy: str
    family: str
    seed: int

    @property
    def name(self) -> str:
        return row_name(self.strategy, self.family)


def row_name(strategy: str, family: str) -> str:
    if strategy == "GlobalTCN":
        return "TCN.Global.PostcodeAGG"
    return f"{family}.{strategy}"


def input_series_label(strategy: str, family: str) -> str:
    if family.startswith("HTCNN"):
        return "Postcode+Weather+Aggregated"
    if strategy == "Direct":
        return "Aggregated"
    # seasonal naive sees only yesterday's power
    return "Postcode" if family == "SN" else "Postcode+Weather"


def write_forecast_csv(records, path):
    from .dataio import write_atomic, fmt
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FORECAST_HEADER)
    for r in records:
        for s in range(len(r.actual)):
            w.writerow([r.day, s, fmt(r.actual[s]), fmt(r.forecast[s]), r.strategy, r.family, r.seed])
    write_atomic(path, buf.getvalue())


def read_forecast_csv(path) -> list[ForecastRecord]:
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FORECAST_HEADER:
            raise ParseError(path, f"header must be {','.join(FORECAST_HEADER)}", 1)
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(FORECAST_HEADER):
                raise ParseError(path, f"expected {len(FORECAST_HEADER)} fields", lineno)
            try:
                day, slot, seed = int(row[0]), int(row[1]), int(row[6])
                actual, fc = float(row[2]), float(row[3])
            except ValueError as exc:
                raise ParseError(path, str(exc), lineno) from None
            key = (row[4], row[5], seed, day)
            slots = groups.setdefault(key, {})
            if slot in slots:
                raise ParseError(path, f"duplicate slot {slot} for day {day}", lineno)
            slots[slot] = (actual, fc)
    records = []
    for (strategy, family, seed, day), slots in groups.items():
        if sorted(slots) != list(range(SLOTS_PER_DAY)):
            raise ParseError(path, f"day {day} of {row_name(strategy, family)} seed {seed} is incomplete")
        vals = np.array([slots[s] for s in range(SLOTS_PER_DAY)])
        records.append(ForecastRecord(day, vals[:, 0], vals[:, 1], strategy, family, seed))
    return records


# --- reports ----------------------------------------------------------------


@dataclass
class ReportRow:
    name: str
    strategy: str
    family: str
    input_series: str
    n_models: int | None
    seeds: list
    seed_means: list
    mean: float
    std: float
    day_errors: list = field(default_factory=list)  # pooled per-day nRMSE across seeds
    n_undefined: int = 0
    skill_score: float = float("nan")
    error_reduction: float = float("nan")
    p_value: float = float("nan")
    significant: bool = False
    failed: str | None = None

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "name", "strategy", "family", "input_series", "n_models", "seeds", "seed_means",
            "mean", "std", "n_undefined", "skill_score", "error_reduction", "p_value",
            "significant", "failed")}
        d["n_days"] = len(self.day_errors)
        return _json_safe(d)


def _json_safe(x):
    if isinstance(x, float):
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return _json_safe(x.item())
    return x


@dataclass
class EvaluationReport:
    rows: list
    reference: str
    skill_reference: str
    notes: dict = field(default_factory=dict)

    def row(self, name) -> ReportRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "reference": self.reference,
            "skill_reference": self.skill_reference,
            "alpha": ALPHA,
            "notes": self.notes,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        head = ["Input Series", "Model", "Strategy", "Models", "nRMSE", "SS (%)"]
        lines = []
        for r in self.rows:
            model = "TCN.Global" if r.strategy == "GlobalTCN" else r.family
            strategy = "PostcodeAGG" if r.strategy == "GlobalTCN" else r.strategy
            if r.failed:
                err, ss = "failed", ""
            else:
                err = f"{r.mean:.4f}"
                if r.family not in ("SN", "SAR"):
                    err += f" (± {r.std:.4f})"
                err += "*" if r.significant else ""
                ss = "" if r.name == self.skill_reference or math.isnan(r.skill_score) else f"{r.skill_score:.2f}"
            lines.append([r.input_series, model, strategy, "" if r.n_models is None else str(r.n_models), err, ss])
        widths = [max(len(x) for x in col) for col in zip(head, *lines)]
        fmt_line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        out = [fmt_line(head), fmt_line(["-" * w for w in widths])]
        out += [fmt_line(cells) for cells in lines]
        out.append("")
        out.append(f"* significantly different from {self.reference} "
                   f"(Mann-Whitney U, p < {ALPHA}, per-day nRMSE pooled across seeds)")
        out.append(f"SS relative to {self.skill_reference}. SAR is a seasonal linear AR stand-in, not SARIMA.")
        return "\n".join(out) + "\n"


def build_report(records, reference: str = "SN.Direct", skill_reference: str = "SN.Direct",
                 model_counts: dict | None = None, failures: dict | None = None) -> EvaluationReport:
    """Aggregate forecast records into a report.

    ``model_counts`` maps row names to the number of models; ``failures``
    maps row names to an error message for strategies that could not be
    trained.
    """
    failures = failures or {}
    grouped = {}
    for rec in records:
        grouped.setdefault((rec.strategy, rec.family), {}).setdefault(rec.seed, []).append(rec)
    names = {row_name(s, f) for s, f in grouped} | set(failures)
    for label, name in (("reference", reference), ("skill reference", skill_reference)):
        if name not in names:
            raise ConfigurationError(f"{label} {name!r} not among evaluated strategies: {sorted(names)}")

    rows = []
    for (strategy, family), by_seed in sorted(grouped.items(), key=lambda kv: _row_order(*kv[0])):
        seeds = sorted(by_seed)
        seed_means, pooled, undefined = [], [], 0
        for s in seeds:
            errs = [nrmse(r.actual, r.forecast) for r in sorted(by_seed[s], key=lambda r: r.day)]
            good = [e for e in errs if not math.isnan(e)]
            undefined += len(errs) - len(good)
            seed_means.append(float(np.mean(good)) if good else float("nan"))
            pooled += good
        name = row_name(strategy, family)
        rows.append(ReportRow(
            name, strategy, family, input_series_label(strategy, family),
            None if model_counts is None else model_counts.get(name),
            seeds, seed_means, float(np.mean(seed_means)), float(np.std(seed_means)),
            pooled, undefined,
        ))
    for name, msg in sorted(failures.items()):
        if name not in {r.name for r in rows}:
            strategy, family = _split_name(name)
            rows.append(ReportRow(name, strategy, family, input_series_label(strategy, family),
                                  None if model_counts is None else model_counts.get(name),
                                  [], [], float("nan"), float("nan"), failed=msg))

    by_name = {r.name: r for r in rows}
    sn = by_name[skill_reference]
    ref = by_name[reference]
    for r in rows:
        if r.failed:
            continue
        r.skill_score = skill_score(r.mean, sn.mean) if not sn.failed else float("nan")
        if r is not ref and not ref.failed:
            r.error_reduction = error_reduction_pct(ref.mean, r.mean)
            if r.day_errors and ref.day_errors:
                r.p_value = mann_whitney_u(r.day_errors, ref.day_errors).p_value
                r.significant = r.p_value < ALPHA
        elif r is ref:
            r.error_reduction = 0.0
    notes = {
        "averaging": "per-day nRMSE -> mean over test days per seed -> mean/std over seeds",
        "significance": "Mann-Whitney U on per-day nRMSE pooled across seeds",
        "std": "population standard deviation of per-seed means",
    }
    return EvaluationReport(rows, reference, skill_reference, notes)


_STRATEGY_ORDER = {"Direct": 0, "PostcodeAGG": 1, "GlobalTCN": 2, "SubRegionAGG": 3}
_FAMILY_ORDER = {"SN": 0, "SAR": 1, "LSTM": 2, "CNN": 3, "TCN": 4, "HTCNN.A1": 5, "HTCNN.A2": 6}


def _row_order(strategy, family):
    group = 2 if family.startswith("HTCNN") else (0 if strategy == "Direct" else 1)
    return group, _STRATEGY_ORDER.get(strategy, 9), _FAMILY_ORDER.get(family, 9)


def _split_name(name):
    if name == "TCN.Global.PostcodeAGG":
        return "GlobalTCN", "TCN"
    family, _, strategy = name.rpartition(".")
    return strategy, family


# --- experiment -------------------------------------------------------------


@dataclass
class ExperimentResult:
    report: EvaluationReport
    records: list
    fitted: dict  # (row name, seed) -> FittedStrategy
    forecasts: dict  # (row name, seed) -> list of RegionalForecast


def run_experiment(dataset, strategies, seeds, test_days: int = 36, reference: str = "SN.Direct",
                   skill_reference: str = "SN.Direct", jobs: int = 1) -> ExperimentResult:
    """Train and evaluate every (strategy, seed) pair on a fixed chronological split.

    A strategy whose training fails is reported as failed; the run continues.
    """
    from .strategies import fit_strategy

    if not seeds:
        raise ConfigurationError("at least one seed is required")
    train_view, test_view = train_test_split(dataset, test_days)
    tasks = [(cfg, seed) for cfg in strategies for seed in seeds]

    def run(task):
        cfg, seed = task
        try:
            fitted = fit_strategy(dataset, cfg, train_view.days, seed)
            fcs = [fitted.forecast(dataset, d) for d in test_view.days]
            return cfg, seed, fitted, fcs, None
        except HtcnnError as exc:
            log.warning("%s seed %d failed: %s", cfg.name, seed, exc)
            return cfg, seed, None, None, f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(t) for t in tasks]

    records, fitted_all, forecasts, failures = [], {}, {}, {}
    for cfg, seed, fitted, fcs, err in outcomes:
        if err is not None:
            failures[cfg.name] = err
            continue
        fitted_all[(cfg.name, seed)] = fitted
        forecasts[(cfg.name, seed)] = fcs
        for fc in fcs:
            records.append(ForecastRecord(fc.day, np.array(dataset.regional.day(fc.day)), fc.values,
                                          cfg.kind, cfg.family, seed))
    # a failure in any seed fails the whole row
    records = [r for r in records if r.name not in failures]
    counts = {cfg.name: cfg.model_count(dataset) for cfg in strategies}
    report = build_report(records, reference, skill_reference, counts, failures)
    return ExperimentResult(report, records, fitted_all, forecasts)
