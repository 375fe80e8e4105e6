"""Command-line interface: gen-data, train, forecast, evaluate, gridsearch.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import file_digest, load_fitted, save_fitted
from .config import dump_keyvalue, read_keyvalue
from .data import train_test_split
from .dataio import dataset_hash, emit_dataset, load_dataset, write_atomic
from .errors import (
    ConfigurationError, DataError, HtcnnError, NumericalError, UsageError, WindowingError,
)
from .evaluation import ForecastRecord, build_report, read_forecast_csv, write_forecast_csv
from .strategies import (
    COMPATIBILITY, DEFAULT_HYPER, NEURAL, STRATEGIES, StrategyConfig, fit_strategy,
)
from .synthetic import GeneratorConfig, generate_region

log = logging.getLogger("htcnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def append_manifest(out: Path, command: str, config: dict, data_hash: str | None, seeds, artifacts, started):
    """Append one JSON line per run to ``manifest.jsonl`` in the run directory."""
    out.mkdir(parents=True, exist_ok=True)
    entry = {
        "command": command,
        "config": config,
        "dataset_hash": data_hash,
        "seeds": list(seeds),
        "artifacts": {str(Path(p).relative_to(out)) if Path(p).is_relative_to(out) else str(p): file_digest(p)
                      for p in artifacts},
        "timing": {"started": started, "seconds": round(time.time() - started, 3)},
    }
    with open(out / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required for this command")
    return Path(args.out)


def _hyper_from(path) -> dict:
    if path is None:
        return {}
    hyper = read_keyvalue(path)
    unknown = set(hyper) - set(DEFAULT_HYPER)
    if unknown:
        raise ConfigurationError(f"{path}: unknown hyper-parameters {sorted(unknown)}")
    return hyper


# --- subcommands ------------------------------------------------------------


def cmd_gen_data(args) -> int:
    started = time.time()
    out = _require_out(args)
    values = read_keyvalue(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = GeneratorConfig.from_dict(values)
    ds = generate_region(cfg)
    emit_dataset(ds, out, manifest=cfg.to_dict())
    h = dataset_hash(out)
    files = sorted(out.glob("*.csv")) + [out / "manifest.txt"]
    append_manifest(out, "gen-data", cfg.to_dict(), h, [cfg.seed], files, started)
    print(f"wrote {ds.n_postcodes} postcodes, {ds.n_clusters} clusters, {ds.n_days} days to {out} "
          f"(dataset {h[:12]})")
    return EXIT_OK


def _strategy_dir(out: Path, name: str, seed: int) -> Path:
    return out / name / f"seed{seed}"


def _train_one(ds, data_hash, cfg, seed, test_days, out):
    train_view, _ = train_test_split(ds, test_days)
    fitted = fit_strategy(ds, cfg, train_view.days, seed)
    target = _strategy_dir(out, cfg.name, seed)
    files = save_fitted(fitted, target, data_hash, test_days)
    for key, res in fitted.train_results().items():
        write_atomic(target / f"history_{key}.json", json.dumps(res.to_dict(), sort_keys=True) + "\n")
        files.append(target / f"history_{key}.json")
    return fitted, files


def cmd_train(args) -> int:
    started = time.time()
    out = _require_out(args)
    ds = load_dataset(args.dataset)
    h = dataset_hash(args.dataset)
    cfg = StrategyConfig(args.strategy, args.model, _hyper_from(args.hyper))
    seeds = args.seeds or [args.seed or 0]
    jobs = max(1, args.jobs)
    run = lambda s: _train_one(ds, h, cfg, s, args.test_days, out)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    files = [f for _, fs in results for f in fs]
    append_manifest(out, "train", {"strategy": cfg.kind, "model": cfg.family, "hyper": cfg.hyper,
                                   "test_days": args.test_days}, h, seeds, files, started)
    for (fitted, _), seed in zip(results, seeds):
        print(f"{cfg.name} seed {seed}: {fitted.model_count} model(s) -> {_strategy_dir(out, cfg.name, seed)}")
    return EXIT_OK


def _parse_days(text, n_days):
    try:
        start, _, stop = text.partition(":")
        start = int(start) if start else 0
        stop = int(stop) if stop else n_days
    except ValueError:
        raise UsageError(f"--days must look like START:STOP, got {text!r}") from None
    if not 0 <= start < stop <= n_days:
        raise WindowingError(f"--days {text} outside dataset days 0..{n_days}")
    return range(start, stop)


def _strategy_dirs(models: Path):
    if (models / "strategy.json").exists():
        return [models]
    found = sorted(p.parent for p in models.rglob("strategy.json"))
    if not found:
        raise DataError(f"{models}: no trained strategies found")
    return found


def cmd_forecast(args) -> int:
    started = time.time()
    ds = load_dataset(args.dataset)
    h = dataset_hash(args.dataset)
    records = []
    for d in _strategy_dirs(Path(args.models)):
        fitted, meta = load_fitted(d, h)
        if args.days:
            days = _parse_days(args.days, ds.n_days)
        else:
            days = train_test_split(ds, meta["test_days"])[1].days
        for day in days:
            fc = fitted.forecast(ds, day)
            records.append(ForecastRecord(day, np.array(ds.regional.day(day)), fc.values,
                                          fitted.config.kind, fitted.config.family, fitted.seed))
    out_file = Path(args.output) if args.output else _require_out(args) / "forecast.csv"
    out_file.parent.mkdir(parents=True, exist_ok=True)
    write_forecast_csv(records, out_file)
    append_manifest(out_file.parent, "forecast", {"models": str(args.models), "days": args.days}, h,
                    sorted({r.seed for r in records}), [out_file], started)
    print(f"wrote {len(records) * 18} rows to {out_file}")
    return EXIT_OK


def _model_counts(dataset_dir):
    if not dataset_dir:
        return None
    ds = load_dataset(dataset_dir)
    counts = {}
    for kind, fams in COMPATIBILITY.items():
        for fam in fams:
            cfg = StrategyConfig(kind, fam)
            counts[cfg.name] = cfg.model_count(ds)
    return counts


def cmd_evaluate(args) -> int:
    started = time.time()
    out = _require_out(args)
    records = []
    for path in args.forecasts:
        if not Path(path).exists():
            raise DataError(f"{path}: forecast file not found")
        records += read_forecast_csv(path)
    report = build_report(records, args.reference, args.skill_reference, _model_counts(args.dataset))
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "report.json", report.to_json())
    write_atomic(out / "report.txt", report.to_table())
    append_manifest(out, "evaluate", {"forecasts": [str(p) for p in args.forecasts],
                                      "reference": args.reference, "skill_reference": args.skill_reference},
                    None, sorted({r.seed for r in records}), [out / "report.json", out / "report.txt"], started)
    print(report.to_table(), end="")
    return EXIT_OK


def read_grid(path) -> dict:
    grid = read_keyvalue(path)
    if not grid:
        raise ConfigurationError(f"{path}: empty grid")
    unknown = set(grid) - set(DEFAULT_HYPER)
    if unknown:
        raise ConfigurationError(f"{path}: unknown hyper-parameters {sorted(unknown)}")
    return {k: v if isinstance(v, list) else [v] for k, v in grid.items()}


def grid_points(grid: dict) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def run_gridsearch(ds, kind, family, grid, base_hyper, seed, test_days, jobs=1):
    """Exhaustive search; each point scored by its mean best validation loss over components."""
    if family not in NEURAL:
        raise ConfigurationError(f"grid search needs a neural model family, not {family}")
    points = grid_points(grid)
    train_view, _ = train_test_split(ds, test_days)

    def score(point):
        cfg = StrategyConfig(kind, family, {**base_hyper, **point})
        fitted = fit_strategy(ds, cfg, train_view.days, seed)
        return float(np.mean([r.best_loss for r in fitted.train_results().values()]))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            losses = list(pool.map(score, points))
    else:
        losses = [score(p) for p in points]
    board = sorted(zip(losses, range(len(points)), points), key=lambda t: (t[0], t[1]))
    return [(loss, point) for loss, _, point in board]


def cmd_gridsearch(args) -> int:
    started = time.time()
    out = _require_out(args)
    ds = load_dataset(args.dataset)
    h = dataset_hash(args.dataset)
    grid = read_grid(args.grid)
    StrategyConfig(args.strategy, args.model)
    board = run_gridsearch(ds, args.strategy, args.model, grid, _hyper_from(args.hyper),
                           args.seed or 0, args.test_days, max(1, args.jobs))
    out.mkdir(parents=True, exist_ok=True)
    keys = list(grid)
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", *keys, "validation_loss"])
    for rank, (loss, point) in enumerate(board, 1):
        w.writerow([rank, *[point[k] for k in keys], format(loss, ".17g")])
    write_atomic(out / "leaderboard.csv", buf.getvalue())
    write_atomic(out / "best.txt", dump_keyvalue(board[0][1]))
    append_manifest(out, "gridsearch", {"strategy": args.strategy, "model": args.model, "grid": grid}, h,
                    [args.seed or 0], [out / "leaderboard.csv", out / "best.txt"], started)
    print(f"{len(board)} grid points; best validation loss {board[0][0]:.6g}: {board[0][1]}")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def compatibility_table() -> str:
    lines = ["strategy      model families"]
    for kind in STRATEGIES:
        lines.append(f"{kind:<13} {', '.join(COMPATIBILITY[kind])}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel trainings")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="htcnn", parents=[common],
                                description="Hierarchical TCN regional solar forecasting")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--list", action="store_true", help="print the strategy x model compatibility matrix")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--config", help="generator config (key = value)")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train a strategy")
    t.add_argument("--dataset", required=True)
    t.add_argument("--strategy", required=True, choices=STRATEGIES)
    t.add_argument("--model", required=True, help="model family, e.g. TCN or HTCNN.A2")
    t.add_argument("--hyper", help="hyper-parameter file (key = value)")
    t.add_argument("--seeds", type=int, nargs="+", help="train once per seed")
    t.add_argument("--test-days", type=int, default=36)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("forecast", parents=[common], help="forecast with trained strategies")
    f.add_argument("--models", required=True, help="strategy directory or a parent of several")
    f.add_argument("--dataset", required=True)
    f.add_argument("--days", help="START:STOP day range (default: the test range)")
    f.add_argument("--output", help="CSV path (default: <out>/forecast.csv)")
    f.set_defaults(func=cmd_forecast)

    e = sub.add_parser("evaluate", parents=[common], help="build the nRMSE/skill report")
    e.add_argument("forecasts", nargs="+", help="forecast CSV files")
    e.add_argument("--reference", default="SN.Direct", help="row for significance and error reduction")
    e.add_argument("--skill-reference", default="SN.Direct", help="row used as the skill-score reference")
    e.add_argument("--dataset", help="dataset directory, used for model counts")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gridsearch", parents=[common], help="exhaustive hyper-parameter search")
    s.add_argument("--dataset", required=True)
    s.add_argument("--strategy", required=True, choices=STRATEGIES)
    s.add_argument("--model", required=True)
    s.add_argument("--grid", required=True, help="grid file: key = v1, v2, ...")
    s.add_argument("--hyper", help="fixed hyper-parameters applied to every point")
    s.add_argument("--test-days", type=int, default=36)
    s.set_defaults(func=cmd_gridsearch)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        print(compatibility_table(), end="")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, WindowingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (HtcnnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
