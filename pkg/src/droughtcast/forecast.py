"""Lead-time forecasting from trained ensembles.

A window a:8 uses panel weeks target-8 .. target-a, so the forecast leads
the target week by a weeks. Feature access goes through a recording view of
the panel and every forecast asserts that nothing newer than target-a was
read; the access log is exposed so callers can audit the same property.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from typing import Optional

import numpy as np

from . import gbdt
from .features import FeatureMatrix, Normalizer, WindowConfig, apply_normalizer
from .gbdt import BoostedEnsemble
from .ingest import WEEK, AdjacencyGraph, Panel


@dataclass
class TrainedModel:
    """Everything needed to score new weeks: the ensemble plus the exact
    feature layout and normalization it was trained with."""

    category: str
    index_set: str
    window: WindowConfig
    ensemble: BoostedEnsemble
    normalizer: Normalizer
    neighbor_impact_categories: str = "all"
    label_threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "index_set": self.index_set,
            "window": self.window.start_lag,
            "neighbor_impact_categories": self.neighbor_impact_categories,
            "label_threshold": self.label_threshold,
            "normalizer": {"mean": list(self.normalizer.mean),
                           "sd": list(self.normalizer.sd)},
            "ensemble": gbdt.ensemble_to_dict(self.ensemble),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        return cls(
            category=d["category"],
            index_set=d["index_set"],
            window=WindowConfig(d["window"]),
            ensemble=gbdt.ensemble_from_dict(d["ensemble"]),
            normalizer=Normalizer(mean=np.asarray(d["normalizer"]["mean"], dtype=float),
                                  sd=np.asarray(d["normalizer"]["sd"], dtype=float)),
            neighbor_impact_categories=d.get("neighbor_impact_categories", "all"),
            label_threshold=d.get("label_threshold", 0.5),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        return cls.from_dict(json.loads(text))


class PanelView:
    """Read access to panel values that records every week touched."""

    def __init__(self, panel: Panel):
        self.panel = panel
        self.accessed_weeks: set[date] = set()

    def has_week(self, week: date) -> bool:
        return week in self.panel.week_index

    def _pos(self, county: str, week: date):
        self.accessed_weeks.add(week)
        return self.panel.county_index[county], self.panel.week_index[week]

    def dsci(self, county: str, week: date) -> float:
        ci, wi = self._pos(county, week)
        return float(self.panel.dsci[ci, wi])

    def esi(self, county: str, week: date) -> float:
        ci, wi = self._pos(county, week)
        return float(self.panel.esi[ci, wi])   # NaN when unobserved

    def impact(self, county: str, week: date, category: str) -> float:
        ci, wi = self._pos(county, week)
        return float(self.panel.impacts[ci, wi, self.panel.categories.index(category)])


def assemble_forecast_row(view: PanelView, graph: AdjacencyGraph, county: str,
                          target_week: date, descriptors) -> np.ndarray:
    """One feature row for (county, target_week) in the given column layout.

    Produces exactly the values the training assembler would have produced
    for that row; missing entries are NaN.
    """
    neighbors = graph.neighbors.get(county, ())
    row = np.full(len(descriptors), np.nan)
    for j, d in enumerate(descriptors):
        src = county if d.source == "target" else (
            neighbors[d.source] if d.source < len(neighbors) else None)
        if src is None:
            continue
        week = target_week - d.lag * WEEK
        if not view.has_week(week):
            raise KeyError(f"panel lacks week {week} needed at lag {d.lag}")
        if d.variable == "dsci":
            row[j] = view.dsci(src, week)
        elif d.variable == "esi":
            row[j] = view.esi(src, week)
        else:
            row[j] = view.impact(src, week, d.variable)
    return row


@dataclass(frozen=True)
class ForecastRecord:
    county: str
    target_week: date
    category: str
    window: str                      # "a:8"
    lead_weeks: int                  # = a
    probability: Optional[float]
    label: Optional[int]
    available: bool

    def to_row(self) -> list:
        return [self.target_week.isoformat(), self.county, self.category,
                self.window, self.lead_weeks,
                "" if self.probability is None else repr(self.probability),
                "" if self.label is None else self.label,
                int(self.available)]


def _history_available(panel: Panel, target_week: date, window: WindowConfig) -> bool:
    first_needed = target_week - WindowConfig(window.start_lag).end_lag * WEEK
    last_needed = target_week - window.start_lag * WEEK
    return (first_needed in panel.week_index) and (last_needed in panel.week_index)


def forecast_week(model: TrainedModel, panel: Panel, graph: AdjacencyGraph,
                  target_week: date, access_log: Optional[set] = None):
    """Score every county for one target week; one record per county.

    Reads only panel weeks in [target-8, target-a] and raises if anything
    newer was touched. Counties are all flagged unavailable when the panel
    lacks part of that history (the panel is gap-free, so availability is
    uniform across counties).
    """
    offset = (target_week - panel.weeks[0]).days
    if offset % 7:
        raise ValueError(f"target week {target_week} is off the panel's weekly grid")
    a = model.window.start_lag
    if not _history_available(panel, target_week, model.window):
        return [ForecastRecord(c, target_week, model.category, model.window.label(),
                               a, None, None, False) for c in panel.counties]

    view = PanelView(panel)
    descriptors = model.ensemble.columns
    rows = np.vstack([assemble_forecast_row(view, graph, c, target_week, descriptors)
                      for c in panel.counties])
    cutoff = target_week - a * WEEK
    late = {w for w in view.accessed_weeks if w > cutoff}
    if late:
        raise RuntimeError(f"forecast touched weeks past the lead-time cutoff: {sorted(late)}")
    if access_log is not None:
        access_log.update(view.accessed_weeks)

    matrix = FeatureMatrix(values=rows, mask=np.isnan(rows),
                           labels=np.zeros(len(rows), dtype=np.int8),
                           row_keys=[(c, target_week.isoformat()) for c in panel.counties],
                           descriptors=list(descriptors), provenance="forecast")
    proba = gbdt.predict_proba(model.ensemble, apply_normalizer(model.normalizer, matrix))
    labels = (proba >= model.label_threshold).astype(int)
    return [ForecastRecord(c, target_week, model.category, model.window.label(), a,
                           float(proba[i]), int(labels[i]), True)
            for i, c in enumerate(panel.counties)]


@dataclass
class ForecastRange:
    """Min/max predicted-impact counts across forecast scenarios."""

    target_week: date
    per_scenario_totals: dict          # scenario key -> total predicted impacts
    min_total: int
    max_total: int
    per_category: dict                 # category -> (min, max) across scenarios

    def to_row(self) -> list:
        return [self.target_week.isoformat(), self.min_total, self.max_total,
                json.dumps(self.per_scenario_totals, sort_keys=True)]


def forecast_range(models, panel: Panel, graph: AdjacencyGraph,
                   target_week: date) -> ForecastRange:
    """Range of total predicted impacts across windows (scenarios).

    Models are grouped into scenarios by window (and index set, when more
    than one is present); each scenario sums predicted labels over counties
    and categories. Scenarios without sufficient history are skipped; if
    none remains, that is an error.
    """
    models = list(models)
    if not models:
        raise ValueError("no models supplied")
    index_sets = {m.index_set for m in models}
    groups: dict[str, list[TrainedModel]] = {}
    for m in models:
        key = m.window.label() if len(index_sets) == 1 else f"{m.window.label()}@{m.index_set}"
        groups.setdefault(key, []).append(m)

    totals = {}
    per_cat_totals: dict[str, dict[str, int]] = {}
    for key in sorted(groups):
        seen = set()
        group_total = 0
        cat_totals: dict[str, int] = {}
        usable = False
        for m in groups[key]:
            if (m.category, m.index_set) in seen:
                raise ValueError(f"duplicate model for {m.category!r} in scenario {key}")
            seen.add((m.category, m.index_set))
            records = forecast_week(m, panel, graph, target_week)
            got = [r for r in records if r.available]
            if got:
                usable = True
            cat_totals[m.category] = cat_totals.get(m.category, 0) + sum(r.label for r in got)
            group_total += sum(r.label for r in got)
        if usable:
            totals[key] = group_total
            per_cat_totals[key] = cat_totals
    if not totals:
        raise ValueError(f"no window has sufficient history for {target_week}")

    categories = sorted({c for t in per_cat_totals.values() for c in t})
    per_category = {c: (min(t.get(c, 0) for t in per_cat_totals.values()),
                        max(t.get(c, 0) for t in per_cat_totals.values()))
                    for c in categories}
    return ForecastRange(target_week=target_week, per_scenario_totals=totals,
                         min_total=min(totals.values()), max_total=max(totals.values()),
                         per_category=per_category)


@dataclass(frozen=True)
class MonthlyTotal:
    month: str                         # "YYYY-MM"
    predicted_total: int
    observed_total: Optional[int]


def aggregate_monthly(records, observed_weekly: Optional[dict] = None):
    """Sum weekly predicted labels into calendar months.

    A week belongs to the month containing its start date. When
    ``observed_weekly`` (week start -> observed impact count) is given, the
    same aggregation is reported for it; months present on either side
    appear in the output.
    """
    predicted: dict[str, int] = {}
    for r in records:
        month = f"{r.target_week.year:04d}-{r.target_week.month:02d}"
        predicted.setdefault(month, 0)
        if r.available and r.label:
            predicted[month] += r.label
    observed: dict[str, int] = {}
    if observed_weekly:
        for week, count in observed_weekly.items():
            month = f"{week.year:04d}-{week.month:02d}"
            observed[month] = observed.get(month, 0) + int(count)
    months = sorted(set(predicted) | set(observed))
    return [MonthlyTotal(m, predicted.get(m, 0),
                         observed.get(m, 0) if observed_weekly is not None else None)
            for m in months]
