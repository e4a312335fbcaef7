"""TOML run configuration: one file drives ingestion, training, evaluation
and forecasting. Unknown sections are ignored; every setting has a default
so a minimal config only names the input files and date range."""

from __future__ import annotations

import hashlib
from datetime import date
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .experiments import MODE_LOCO, MODE_STATE, ExperimentPlan
from .gbdt import TrainParams
from .ingest import (MODELED_CATEGORIES, AdjacencyGraph, InputError, Panel,
                     build_panel, load_adjacency, load_dir_csv, load_esi_csv,
                     load_usdm_csv, read_panel_csv)
from .resample import ResampleParams


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _as_date(value, what) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise InputError(f"bad {what} date {value!r}") from None


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_panel_and_graph(cfg: dict, base_dir) -> tuple[Panel, AdjacencyGraph]:
    """Build the panel from raw inputs, or reload an exported panel CSV."""
    base = Path(base_dir)
    inputs = cfg.get("inputs", {})
    if "adjacency" not in inputs:
        raise InputError("config [inputs] must name an adjacency file")
    panel_cfg = cfg.get("panel", {})

    if "panel" in inputs:
        panel = read_panel_csv(_resolve(base, inputs["panel"]))
    else:
        for key in ("usdm", "dir"):
            if key not in inputs:
                raise InputError(f"config [inputs] must name {key!r} (or a prebuilt panel)")
        if "start_week" not in panel_cfg or "end_week" not in panel_cfg:
            raise InputError("config [panel] must set start_week and end_week")
        categories = tuple(panel_cfg.get("categories", MODELED_CATEGORIES))
        usdm = load_usdm_csv(_resolve(base, inputs["usdm"]),
                             cumulative=bool(inputs.get("usdm_cumulative", False)))
        esi = load_esi_csv(_resolve(base, inputs["esi"])) if "esi" in inputs else []
        reports = load_dir_csv(_resolve(base, inputs["dir"]))
        panel = build_panel(
            usdm, esi, reports,
            start_week=_as_date(panel_cfg["start_week"], "start_week"),
            end_week=_as_date(panel_cfg["end_week"], "end_week"),
            counties=panel_cfg.get("counties"),
            categories=categories,
        )
    graph = load_adjacency(_resolve(base, inputs["adjacency"]), counties=panel.counties)
    return panel, graph


def resample_params(cfg: dict, seed: int = 0):
    sect = cfg.get("resample", {})
    if not sect.get("enabled", True):
        return None
    return ResampleParams(
        m_neighbors=int(sect.get("m_neighbors", 10)),
        k_neighbors=int(sect.get("k_neighbors", 5)),
        enn_k=int(sect.get("enn_k", 3)),
        seed=seed,
    )


def train_params(cfg: dict, seed: int = 0) -> TrainParams:
    sect = cfg.get("train", {})
    return TrainParams(
        num_rounds=int(sect.get("num_rounds", 100)),
        max_depth=int(sect.get("max_depth", 6)),
        learning_rate=float(sect.get("learning_rate", 0.3)),
        l2_reg=float(sect.get("l2_reg", 1.0)),
        gamma=float(sect.get("gamma", 0.0)),
        min_child_hessian=float(sect.get("min_child_hessian", 1.0)),
        row_subsample=float(sect.get("row_subsample", 1.0)),
        col_subsample=float(sect.get("col_subsample", 1.0)),
        seed=seed,
    )


def build_plan(cfg: dict, seed: int) -> ExperimentPlan:
    feats = cfg.get("features", {})
    split = cfg.get("split", {})
    exp = cfg.get("experiment", {})
    mode = exp.get("mode", MODE_STATE)
    if mode not in (MODE_STATE, MODE_LOCO):
        raise InputError(f"experiment mode {mode!r} must be "
                         f"{MODE_STATE!r} or {MODE_LOCO!r}")
    counties = exp.get("counties") or None
    return ExperimentPlan(
        categories=tuple(exp.get("categories", MODELED_CATEGORIES)),
        index_sets=tuple(feats.get("index_sets", ("dsci", "esi", "dsci_esi"))),
        windows=tuple(int(a) for a in feats.get("windows", range(1, 9))),
        mode=mode,
        counties=tuple(counties) if counties else None,
        seed=seed,
        test_fraction=float(split.get("test_fraction", 0.20)),
        label_threshold=float(exp.get("label_threshold", 0.5)),
        neighbor_impact_categories=feats.get("neighbor_impact_categories", "all"),
        resample=resample_params(cfg),
        train=train_params(cfg),
    )
