"""Command-line surface of the toolkit.

Subcommands: ingest, panel-export, train, evaluate, importance, forecast,
forecast-range. One TOML config file drives every run; --seed/--jobs/--out
override or supplement it. Every run writes a manifest.json (config hash,
effective seed, package versions) next to its outputs so results can be
reproduced byte for byte.

Exit codes: 0 success, 1 validation error (bad flags, config or input
data), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, gbdt
from .config import (build_plan, config_hash, load_config, load_panel_and_graph)
from .experiments import (MODE_STATE, EvaluationReport, group_contribution,
                          run_state_pooled, sweep)
from .features import WindowConfig
from .forecast import TrainedModel, aggregate_monthly, forecast_range, forecast_week
from .ingest import InputError, write_panel_csv


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract here is exit 1 with usage text.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _add_common(sub, config_required=True):
    sub.add_argument("--config", required=config_required, help="TOML config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--jobs", type=int, default=None, help="parallel task workers")
    sub.add_argument("--out", default=".", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="droughtcast",
                     description="Predict and forecast weekly county-level drought impacts")
    subs = parser.add_subparsers(dest="command", metavar="command")
    for name, doc in [
        ("ingest", "parse raw inputs, build and export the weekly panel"),
        ("panel-export", "export the weekly panel CSV"),
        ("train", "train one model per (category, index set, window)"),
        ("evaluate", "run the evaluation sweep and write reports"),
        ("importance", "per-feature and per-group contribution of a trained model"),
        ("forecast", "lead-time forecasts for the configured target weeks"),
        ("forecast-range", "forecast ranges across windows per target week"),
    ]:
        sub = subs.add_parser(name, help=doc, description=doc)
        _add_common(sub, config_required=(name != "importance"))
        if name == "importance":
            sub.add_argument("--model", required=True, help="trained model JSON file")
        if name in ("forecast", "forecast-range"):
            sub.add_argument("--models", default=None,
                             help="directory of trained model files "
                                  "(default: <out>/models)")
    return parser


def _write_manifest(out: Path, command: str, cfg_path, seed) -> None:
    manifest = {
        "command": command,
        "config_sha256": config_hash(cfg_path) if cfg_path else None,
        "seed": seed,
        "versions": {
            "droughtcast": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _setup(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    jobs = args.jobs if args.jobs is not None else int(cfg.get("jobs", 1))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = Path(args.config).resolve().parent
    return cfg, seed, jobs, out, base


def _cmd_ingest(args, export_only=False) -> int:
    cfg, seed, _, out, base = _setup(args)
    panel, graph = load_panel_and_graph(cfg, base)
    write_panel_csv(panel, out / "panel.csv")
    if not export_only:
        positives = {
            cat: int(panel.impacts[:, :, k].sum())
            for k, cat in enumerate(panel.categories)
        }
        summary = {
            "counties": len(panel.counties),
            "weeks": len(panel.weeks),
            "rows": len(panel),
            "positives": positives,
            "max_degree": graph.max_degree(),
        }
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _write_manifest(out, "panel-export" if export_only else "ingest", args.config, seed)
    return 0


def _model_filename(category, index_set, start_lag) -> str:
    return f"model_{category}_{index_set}_w{start_lag}8.json"


def _cmd_train(args) -> int:
    cfg, seed, _, out, base = _setup(args)
    panel, graph = load_panel_and_graph(cfg, base)
    plan = build_plan(cfg, seed)
    if plan.mode != MODE_STATE:
        plan = build_plan({**cfg, "experiment": {**cfg.get("experiment", {}),
                                                 "mode": MODE_STATE}}, seed)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    entries = []
    for category in plan.categories:
        for index_set in plan.index_sets:
            for a in plan.windows:
                window = WindowConfig(a)
                entry, ensemble, norm = run_state_pooled(
                    panel, graph, category, index_set, window, plan)
                model = TrainedModel(
                    category=category, index_set=index_set, window=window,
                    ensemble=ensemble, normalizer=norm,
                    neighbor_impact_categories=plan.neighbor_impact_categories,
                    label_threshold=plan.label_threshold)
                path = models_dir / _model_filename(category, index_set, a)
                path.write_text(model.to_json() + "\n")
                entries.append(entry)
    report = EvaluationReport(entries=entries)
    (out / "train_report.json").write_text(report.to_json() + "\n")
    _write_manifest(out, "train", args.config, seed)
    return 0


def _cmd_evaluate(args) -> int:
    cfg, seed, jobs, out, base = _setup(args)
    panel, graph = load_panel_and_graph(cfg, base)
    plan = build_plan(cfg, seed)
    report = sweep(panel, graph, plan, jobs=jobs)
    (out / "report.json").write_text(report.to_json() + "\n")
    combos = sorted({(e.mode, e.index_set, e.county) for e in report.entries},
                    key=lambda t: (t[0], t[1], t[2] or ""))
    for mode, index_set, county in combos:
        stem = f"report_{index_set}" if county is None else f"report_{index_set}_{county}"
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(report.table_rows(mode, index_set, county))
    _write_manifest(out, "evaluate", args.config, seed)
    return 0


def _cmd_importance(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = Path(args.model)
    if not model_path.exists():
        raise InputError(f"model file not found: {model_path}")
    model = TrainedModel.from_json(model_path.read_text())
    importance = gbdt.gain_importance(model.ensemble)
    with open(out / "importance.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["column", "group", "importance"])
        for desc, score in zip(model.ensemble.columns, importance):
            writer.writerow([desc.label(), desc.group, repr(float(score))])
    groups = group_contribution(model.ensemble)
    with open(out / "groups.json", "w") as fh:
        json.dump(groups, fh, indent=2, sort_keys=True)
        fh.write("\n")
    seed = None
    if args.config:
        seed = args.seed if args.seed is not None else int(load_config(args.config).get("seed", 0))
    _write_manifest(out, "importance", args.config, seed)
    return 0


def _load_models(args, cfg, out: Path):
    models_dir = Path(args.models) if args.models else out / "models"
    if not models_dir.is_dir():
        raise InputError(f"models directory not found: {models_dir}")
    fc = cfg.get("forecast", {})
    exp = cfg.get("experiment", {})
    feats = cfg.get("features", {})
    categories = set(fc.get("categories") or exp.get("categories", []) or [])
    windows = set(int(a) for a in (fc.get("windows") or feats.get("windows", []) or []))
    index_sets = fc.get("index_sets") or feats.get("index_sets", []) or []
    models = []
    for path in sorted(models_dir.glob("*.json")):
        model = TrainedModel.from_json(path.read_text())
        if categories and model.category not in categories:
            continue
        if windows and model.window.start_lag not in windows:
            continue
        if index_sets and model.index_set not in index_sets:
            continue
        models.append(model)
    if not models:
        raise InputError(f"no trained models in {models_dir} match the forecast config")
    return models


def _targets(cfg) -> list:
    from .config import _as_date
    fc = cfg.get("forecast", {})
    targets = fc.get("targets", [])
    if not targets:
        raise InputError("config [forecast] must list target weeks")
    return [_as_date(t, "forecast target") for t in targets]


def _cmd_forecast(args) -> int:
    cfg, seed, _, out, base = _setup(args)
    panel, graph = load_panel_and_graph(cfg, base)
    models = _load_models(args, cfg, out)
    targets = _targets(cfg)
    records = []
    for target in targets:
        for model in models:
            records.extend(forecast_week(model, panel, graph, target))
    with open(out / "forecast.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_week", "county", "category", "window",
                         "lead_weeks", "probability", "label", "available"])
        writer.writerows(r.to_row() for r in records)

    observed = None
    categories = sorted({m.category for m in models})
    if all(t in panel.week_index for t in targets):
        kidx = [panel.categories.index(c) for c in categories]
        observed = {t: int(panel.impacts[:, panel.week_index[t], :][:, kidx].sum())
                    for t in targets}
    monthly = aggregate_monthly(records, observed)
    with open(out / "monthly.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "predicted_total", "observed_total"])
        for m in monthly:
            writer.writerow([m.month, m.predicted_total,
                             "" if m.observed_total is None else m.observed_total])
    _write_manifest(out, "forecast", args.config, seed)
    return 0


def _cmd_forecast_range(args) -> int:
    cfg, seed, _, out, base = _setup(args)
    panel, graph = load_panel_and_graph(cfg, base)
    models = _load_models(args, cfg, out)
    fc = cfg.get("forecast", {})
    if not fc.get("across_index_sets", False):
        index_sets = sorted({m.index_set for m in models})
        models = [m for m in models if m.index_set == index_sets[0]]
    ranges = [forecast_range(models, panel, graph, t) for t in _targets(cfg)]
    with open(out / "range.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_week", "min_total", "max_total", "per_window_totals"])
        writer.writerows(r.to_row() for r in ranges)
    _write_manifest(out, "forecast-range", args.config, seed)
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "panel-export": lambda args: _cmd_ingest(args, export_only=True),
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "importance": _cmd_importance,
    "forecast": _cmd_forecast,
    "forecast-range": _cmd_forecast_range,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"droughtcast: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:          # --help and friends
        return int(exc.code or 0)
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"droughtcast: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:           # runtime failure
        print(f"droughtcast: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
