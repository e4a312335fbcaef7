"""Experiment orchestration: train/evaluate boosted-tree impact models over
categories, index sets and prior-week windows.

Two evaluation modes exist. ``state-pooled`` pools every county's rows and
holds out a stratified 20% test set. ``leave-one-county-out`` trains on all
counties except a target and evaluates on every row of that county; the
training matrix is instrumented to prove the target county never leaks in.
Per-task seeds are derived from the plan seed and the task identity, so
execution order and parallelism cannot change any result.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import gbdt
from .features import (GROUPS, FeatureMatrix, WindowConfig, apply_normalizer,
                       assemble_features, fit_normalizer, resolve_index_set,
                       split_train_test)
from .gbdt import BoostedEnsemble, TrainParams
from .ingest import MODELED_CATEGORIES, AdjacencyGraph, Panel
from .resample import ResampleParams, resample_pipeline

MODE_STATE = "state-pooled"
MODE_LOCO = "leave-one-county-out"
F1_ACCEPTABLE = 0.50   # class-1 scores below this are flagged unacceptable
LOW_SUPPORT_CATEGORIES = ("tourism",)   # trains, but reported with a caveat


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts


def f1_per_class(predictions, labels, positive_class: int) -> ClassMetrics:
    """Precision, recall and F1 treating ``positive_class`` as positive.

    Any 0/0 ratio is defined as 0, so single-class folds stay evaluable.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0 or predictions.shape != labels.shape:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    pos_pred = predictions == positive_class
    pos_true = labels == positive_class
    tp = int(np.sum(pos_pred & pos_true))
    fp = int(np.sum(pos_pred & ~pos_true))
    fn = int(np.sum(~pos_pred & pos_true))
    tn = int(np.sum(~pos_pred & ~pos_true))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(precision, recall, f1, ConfusionCounts(tp, fp, fn, tn))


def task_seed(plan_seed: int, *parts) -> int:
    """Stable per-task seed from the plan seed and the task identity."""
    key = "|".join([str(plan_seed), *map(str, parts)])
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 63)


@dataclass(frozen=True)
class ExperimentPlan:
    categories: tuple = MODELED_CATEGORIES
    index_sets: tuple = ("dsci", "esi", "dsci_esi")
    windows: tuple = tuple(range(1, 9))        # start lags a of a:8
    mode: str = MODE_STATE
    counties: Optional[tuple] = None           # LOCO targets; None = all
    seed: int = 0
    test_fraction: float = 0.20
    label_threshold: float = 0.5
    neighbor_impact_categories: str = "all"
    resample: Optional[ResampleParams] = ResampleParams()
    train: TrainParams = TrainParams()

    def __post_init__(self):
        if not self.categories or not self.index_sets or not self.windows:
            raise ValueError("plan needs at least one category, index set and window")
        if self.mode not in (MODE_STATE, MODE_LOCO):
            raise ValueError(f"unknown mode {self.mode!r}")
        for a in self.windows:
            WindowConfig(a)
        for name in self.index_sets:
            resolve_index_set(name)


@dataclass
class EvaluationEntry:
    category: str
    index_set: str
    window: str
    mode: str
    county: Optional[str]            # None for state-pooled
    f1_class0: float = 0.0
    f1_class1: float = 0.0
    precision_class0: float = 0.0
    precision_class1: float = 0.0
    recall_class0: float = 0.0
    recall_class1: float = 0.0
    confusion: Optional[ConfusionCounts] = None     # class 1 as positive
    n_train: int = 0                 # rows fitted (post-resampling)
    n_train_original: int = 0
    n_test: int = 0
    acceptable: bool = False
    resample_report: Optional[dict] = None
    error: Optional[str] = None

    @property
    def low_support(self) -> bool:
        return self.category in LOW_SUPPORT_CATEGORIES

    def to_dict(self) -> dict:
        d = {
            "category": self.category, "index_set": self.index_set,
            "window": self.window, "mode": self.mode, "county": self.county,
            "f1_class0": self.f1_class0, "f1_class1": self.f1_class1,
            "precision_class0": self.precision_class0,
            "precision_class1": self.precision_class1,
            "recall_class0": self.recall_class0,
            "recall_class1": self.recall_class1,
            "n_train": self.n_train, "n_train_original": self.n_train_original,
            "n_test": self.n_test, "acceptable": self.acceptable,
            "low_support": self.low_support,
            "resample_report": self.resample_report, "error": self.error,
        }
        if self.confusion is not None:
            d["confusion"] = {"tp": self.confusion.tp, "fp": self.confusion.fp,
                              "fn": self.confusion.fn, "tn": self.confusion.tn}
        return d


@dataclass
class EvaluationReport:
    entries: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.entries], sort_keys=True, indent=2)

    def table_rows(self, mode, index_set, county=None):
        """Window-by-category F1 grid mirroring the two-columns-per-category
        results layout: one row per window, (class0, class1) pairs."""
        chosen = [e for e in self.entries
                  if e.mode == mode and e.index_set == index_set and e.county == county]
        categories = sorted({e.category for e in chosen})
        windows = sorted({e.window for e in chosen}, key=lambda w: int(w.split(":")[0]))
        header = ["window"]
        for cat in categories:
            header += [f"{cat}_f1_class0", f"{cat}_f1_class1"]
        rows = [header]
        by_key = {(e.window, e.category): e for e in chosen}
        for w in windows:
            row = [w]
            for cat in categories:
                e = by_key.get((w, cat))
                row += ["", ""] if e is None or e.error else [repr(e.f1_class0), repr(e.f1_class1)]
            rows.append(row)
        return rows


def _evaluate(ensemble: BoostedEnsemble, test: FeatureMatrix, entry: EvaluationEntry,
              threshold: float) -> None:
    if test.provenance != "test":
        raise RuntimeError(f"evaluation fold has provenance {test.provenance!r}, "
                           "expected untouched 'test' rows")
    pred = gbdt.predict_label(ensemble, test, threshold=threshold)
    m1 = f1_per_class(pred, test.labels, 1)
    m0 = f1_per_class(pred, test.labels, 0)
    entry.f1_class1, entry.precision_class1, entry.recall_class1 = m1.f1, m1.precision, m1.recall
    entry.f1_class0, entry.precision_class0, entry.recall_class0 = m0.f1, m0.precision, m0.recall
    entry.confusion = m1.counts
    entry.n_test = test.n_rows
    entry.acceptable = m1.f1 >= F1_ACCEPTABLE


def _fit_task(train: FeatureMatrix, plan: ExperimentPlan, seed: int, entry: EvaluationEntry):
    """Normalize, rebalance and fit; returns (ensemble, normalizer)."""
    norm = fit_normalizer(train)
    train = apply_normalizer(norm, train)
    entry.n_train_original = train.n_rows
    if plan.resample is not None:
        train, report = resample_pipeline(
            train, replace(plan.resample, seed=seed), category=entry.category)
        entry.resample_report = report.to_dict()
    entry.n_train = train.n_rows
    ensemble = gbdt.fit(train, replace(plan.train, seed=seed))
    return ensemble, norm


def _task_tag(entry: EvaluationEntry) -> str:
    tag = f"{entry.mode} {entry.category}/{entry.index_set}/{entry.window}"
    return tag + (f"/{entry.county}" if entry.county else "")


def run_state_pooled(panel: Panel, graph: AdjacencyGraph, category: str,
                     index_set: str, window: WindowConfig, plan: ExperimentPlan):
    """80/20 pooled run; returns (EvaluationEntry, ensemble, normalizer)."""
    entry = EvaluationEntry(category=category, index_set=index_set,
                            window=window.label(), mode=MODE_STATE, county=None)
    seed = task_seed(plan.seed, category, index_set, window.start_lag, "state")
    try:
        matrix = assemble_features(panel, graph, category, index_set, window,
                                   neighbor_impact_categories=plan.neighbor_impact_categories)
        train, test = split_train_test(matrix, plan.test_fraction, seed=seed)
        ensemble, norm = _fit_task(train, plan, seed, entry)
        _evaluate(ensemble, apply_normalizer(norm, test), entry, plan.label_threshold)
    except Exception as exc:
        raise RuntimeError(f"task {_task_tag(entry)}: {exc}") from exc
    return entry, ensemble, norm


def run_leave_one_county_out(panel: Panel, graph: AdjacencyGraph, category: str,
                             index_set: str, window: WindowConfig, county: str,
                             plan: ExperimentPlan):
    """Hold out one county entirely; returns (entry, ensemble, normalizer)."""
    if county not in panel.county_index:
        raise ValueError(f"county {county!r} not in panel")
    entry = EvaluationEntry(category=category, index_set=index_set,
                            window=window.label(), mode=MODE_LOCO, county=county)
    seed = task_seed(plan.seed, category, index_set, window.start_lag, county)
    try:
        matrix = assemble_features(panel, graph, category, index_set, window,
                                   neighbor_impact_categories=plan.neighbor_impact_categories)
        is_target = np.array([key[0] == county for key in matrix.row_keys])
        train = matrix.subset(np.flatnonzero(~is_target), provenance="train")
        test = matrix.subset(np.flatnonzero(is_target), provenance="test")
        leaked = [key for key in train.row_keys if key[0] == county]
        if leaked:
            raise AssertionError(
                f"target county {county} leaked {len(leaked)} rows into training")
        ensemble, norm = _fit_task(train, plan, seed, entry)
        _evaluate(ensemble, apply_normalizer(norm, test), entry, plan.label_threshold)
    except Exception as exc:
        raise RuntimeError(f"task {_task_tag(entry)}: {exc}") from exc
    return entry, ensemble, norm


def group_contribution(ensemble: BoostedEnsemble) -> dict:
    """Share of total split gain per feature group, summing to 1.

    Groups without any column in the model's layout get exactly 0. A
    zero-split ensemble yields all zeros (with a warning).
    """
    importance = gbdt.gain_importance(ensemble)
    out = {g: 0.0 for g in GROUPS}
    for desc, score in zip(ensemble.columns, importance):
        out[desc.group] += float(score)
    total = sum(out.values())
    if total <= 0:
        warnings.warn("ensemble has no splits; group contributions are all zero")
        return out
    return {g: v / total for g, v in out.items()}


def _plan_tasks(panel: Panel, plan: ExperimentPlan):
    counties = [None]
    if plan.mode == MODE_LOCO:
        counties = list(plan.counties if plan.counties is not None else panel.counties)
    tasks = []
    for category in plan.categories:
        for index_set in plan.index_sets:
            for a in plan.windows:
                for county in counties:
                    tasks.append((category, index_set, WindowConfig(a), county))
    return tasks


def _run_one(panel, graph, plan, task) -> EvaluationEntry:
    category, index_set, window, county = task
    try:
        if county is None:
            entry, _, _ = run_state_pooled(panel, graph, category, index_set, window, plan)
        else:
            entry, _, _ = run_leave_one_county_out(panel, graph, category, index_set,
                                                   window, county, plan)
        return entry
    except Exception as exc:   # record and keep sweeping
        return EvaluationEntry(category=category, index_set=index_set,
                               window=window.label(), mode=plan.mode,
                               county=county, error=str(exc))


def sweep(panel: Panel, graph: AdjacencyGraph, plan: ExperimentPlan,
          jobs: int = 1) -> EvaluationReport:
    """Run every task of the plan; failures are recorded per task and do not
    abort the sweep. Entries come back in plan order regardless of ``jobs``."""
    tasks = _plan_tasks(panel, plan)
    if not tasks:
        raise ValueError("experiment plan is empty")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(lambda t: _run_one(panel, graph, plan, t), tasks))
    else:
        entries = [_run_one(panel, graph, plan, t) for t in tasks]
    return EvaluationReport(entries=entries)
