"""Feature-matrix assembly: lagged indices and impacts for a target county
and its neighbors, with an explicit missing mask.

Masked entries are stored as NaN; the boolean mask is authoritative and a
True entry means the value slot is ignored by every consumer. Neighbor
columns are laid out over a fixed number of slots (the dataset's maximum
degree) so all rows share one schema; slots beyond a county's degree are
structurally missing.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .ingest import AdjacencyGraph, Panel

GROUP_DI = "DI"
GROUP_IMPS = "IMPs"
GROUP_NEIGH_DI = "NEIGH_DI"
GROUP_NEIGH_IMPS = "NEIGH_IMPs"
GROUPS = (GROUP_DI, GROUP_IMPS, GROUP_NEIGH_DI, GROUP_NEIGH_IMPS)

# Index-set selections: which drought index variables feed the features.
INDEX_SETS = {
    "dsci": ("dsci",),
    "esi": ("esi",),
    "dsci_esi": ("dsci", "esi"),
}

MAX_LAG = 8


def resolve_index_set(name: str) -> tuple[str, ...]:
    try:
        return INDEX_SETS[name]
    except KeyError:
        raise ValueError(f"unknown index set {name!r}; expected one of {sorted(INDEX_SETS)}") from None


@dataclass(frozen=True)
class WindowConfig:
    """Prior-week window a:8 — feature lags run from start_lag to 8."""

    start_lag: int
    end_lag: int = MAX_LAG

    def __post_init__(self):
        if self.end_lag != MAX_LAG:
            raise ValueError(f"end lag is fixed at {MAX_LAG}")
        if not 1 <= self.start_lag <= MAX_LAG:
            raise ValueError(f"start lag {self.start_lag} outside 1..{MAX_LAG}")

    @property
    def lags(self) -> tuple[int, ...]:
        return tuple(range(self.start_lag, self.end_lag + 1))

    def label(self) -> str:
        return f"{self.start_lag}:{self.end_lag}"


@dataclass(frozen=True)
class FeatureDescriptor:
    """Identity of one feature column."""

    group: str            # one of GROUPS
    source: str | int     # "target" or neighbor slot index
    lag: int              # weeks before the target week
    variable: str         # index name or impact category

    def label(self) -> str:
        return f"{self.group}.{self.source}.{self.lag}.{self.variable}"

    def as_dict(self) -> dict:
        return {"group": self.group, "source": self.source, "lag": self.lag,
                "variable": self.variable}


@dataclass
class FeatureMatrix:
    """Instance rows keyed by (county, target week) plus labels and mask."""

    values: np.ndarray                 # (n, d) float64, NaN at masked entries
    mask: np.ndarray                   # (n, d) bool, True = missing
    labels: np.ndarray                 # (n,) int8 in {0, 1}
    row_keys: list                     # (county_id, week_iso) per row
    descriptors: list                  # FeatureDescriptor per column
    provenance: str = "assembled"

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def column_labels(self) -> list[str]:
        return [d.label() for d in self.descriptors]

    def subset(self, indices, provenance=None) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=int)
        return FeatureMatrix(
            values=self.values[idx].copy(),
            mask=self.mask[idx].copy(),
            labels=self.labels[idx].copy(),
            row_keys=[self.row_keys[i] for i in idx],
            descriptors=list(self.descriptors),
            provenance=provenance if provenance is not None else self.provenance,
        )

    def class_counts(self) -> dict[int, int]:
        return {0: int(np.sum(self.labels == 0)), 1: int(np.sum(self.labels == 1))}


def build_descriptors(index_vars, categories, window: WindowConfig, neighbor_slots: int,
                      neighbor_impact_categories="all", target_category=None,
                      include_current_week: bool = False) -> list[FeatureDescriptor]:
    """Column schema shared by every row of a feature matrix."""
    if neighbor_impact_categories == "all":
        neigh_cats = tuple(categories)
    elif neighbor_impact_categories == "target":
        neigh_cats = (target_category,)
    else:
        raise ValueError("neighbor_impact_categories must be 'all' or 'target'")
    lags = ((0,) if include_current_week else ()) + window.lags
    out = []
    for lag in lags:
        for var in index_vars:
            out.append(FeatureDescriptor(GROUP_DI, "target", lag, var))
        for cat in categories:
            out.append(FeatureDescriptor(GROUP_IMPS, "target", lag, cat))
        for slot in range(neighbor_slots):
            for var in index_vars:
                out.append(FeatureDescriptor(GROUP_NEIGH_DI, slot, lag, var))
            for cat in neigh_cats:
                out.append(FeatureDescriptor(GROUP_NEIGH_IMPS, slot, lag, cat))
    return out


def assemble_features(panel: Panel, graph: AdjacencyGraph, category: str,
                      index_vars, window: WindowConfig, neighbor_slots: int | None = None,
                      neighbor_impact_categories: str = "all",
                      include_current_week: bool = False) -> FeatureMatrix:
    """Build the instance matrix for one impact category.

    Rows are every (county, week) whose week has at least 8 prior weeks in
    the panel; earlier weeks are excluded, not an error. Columns follow
    :func:`build_descriptors`: per lag, the target county's index values and
    impact flags, then per neighbor slot the same block. ESI gaps and
    neighbor slots beyond a county's degree are masked.

    ``include_current_week`` additionally exposes the target week's own
    values (lag 0); it defeats the lead-time semantics of a:8 windows and
    exists for diagnostics only.
    """
    if isinstance(index_vars, str):
        index_vars = resolve_index_set(index_vars)
    if category not in panel.categories:
        raise ValueError(f"category {category!r} not in panel categories {panel.categories}")
    if neighbor_slots is None:
        neighbor_slots = graph.max_degree()
    descriptors = build_descriptors(
        index_vars, panel.categories, window, neighbor_slots,
        neighbor_impact_categories=neighbor_impact_categories,
        target_category=category, include_current_week=include_current_week)

    n_weeks = len(panel.weeks)
    rows_per_county = n_weeks - MAX_LAG
    if rows_per_county <= 0:
        raise ValueError(f"panel has {n_weeks} weeks; need more than {MAX_LAG}")

    def series(county_id, variable):
        # Full weekly series for one variable of one county; None marks a
        # structurally absent source (empty neighbor slot).
        if county_id is None:
            return None
        ci = panel.county_index[county_id]
        if variable == "dsci":
            return panel.dsci[ci]
        if variable == "esi":
            return panel.esi[ci]
        return panel.impacts[ci, :, panel.categories.index(variable)].astype(float)

    cat_idx = panel.categories.index(category)
    blocks = []
    labels = []
    row_keys = []
    for county in panel.counties:
        neighbors = graph.neighbors.get(county, ())
        cols = []
        for d in descriptors:
            if d.source == "target":
                src = county
            else:
                src = neighbors[d.source] if d.source < len(neighbors) else None
            s = series(src, d.variable)
            if s is None:
                cols.append(np.full(rows_per_county, np.nan))
            else:
                # Row t targets week index MAX_LAG + t; lag ℓ reads index
                # MAX_LAG + t - ℓ.
                cols.append(s[MAX_LAG - d.lag: n_weeks - d.lag])
        blocks.append(np.column_stack(cols))
        labels.append(panel.impacts[panel.county_index[county], MAX_LAG:, cat_idx])
        row_keys.extend((county, panel.weeks[wi].isoformat())
                        for wi in range(MAX_LAG, n_weeks))

    values = np.vstack(blocks)
    return FeatureMatrix(
        values=values,
        mask=np.isnan(values),
        labels=np.concatenate(labels).astype(np.int8),
        row_keys=row_keys,
        descriptors=descriptors,
    )


def split_train_test(matrix: FeatureMatrix, test_fraction: float = 0.20, seed: int = 0):
    """Deterministic stratified split into (train, test).

    Stratifies on the label so both classes land in both parts when counts
    permit; a class with fewer than 2 rows degrades the split to simple
    random sampling (with a warning). Row order within each part preserves
    the original matrix order.
    """
    if matrix.n_rows == 0:
        raise ValueError("cannot split an empty matrix")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test fraction {test_fraction} outside (0, 1)")
    rng = np.random.default_rng(seed)
    counts = matrix.class_counts()
    test_idx = []
    if min(counts.values()) < 2:
        warnings.warn("a class has < 2 rows; falling back to unstratified split")
        perm = rng.permutation(matrix.n_rows)
        n_test = int(matrix.n_rows * test_fraction + 0.5)
        test_idx = perm[:n_test]
    else:
        for cls in (0, 1):
            cls_rows = np.flatnonzero(matrix.labels == cls)
            perm = rng.permutation(len(cls_rows))
            n_test = int(len(cls_rows) * test_fraction + 0.5)
            test_idx.extend(cls_rows[perm[:n_test]])
    test_set = set(int(i) for i in test_idx)
    train_rows = [i for i in range(matrix.n_rows) if i not in test_set]
    test_rows = sorted(test_set)
    return (matrix.subset(train_rows, provenance="train"),
            matrix.subset(test_rows, provenance="test"))


@dataclass(frozen=True)
class Normalizer:
    """Per-column centering/scaling fitted on training rows only."""

    mean: np.ndarray
    sd: np.ndarray   # population standard deviation; 0 marks constant columns


def fit_normalizer(train: FeatureMatrix) -> Normalizer:
    if train.provenance == "test":
        raise ValueError("refusing to fit a normalizer on test rows")
    means = np.zeros(train.n_cols)
    sds = np.zeros(train.n_cols)
    observed = ~train.mask
    for j in range(train.n_cols):
        col = train.values[observed[:, j], j]
        if col.size:
            means[j] = col.mean()
            sds[j] = col.std()  # population sd (ddof 0)
    return Normalizer(mean=means, sd=sds)


def apply_normalizer(norm: Normalizer, matrix: FeatureMatrix) -> FeatureMatrix:
    """Z-score with the fitted statistics; constant columns map to 0 and
    masked entries stay masked."""
    sd_safe = np.where(norm.sd > 0, norm.sd, 1.0)
    with np.errstate(invalid="ignore"):
        values = (matrix.values - norm.mean) / sd_safe
        values = np.where(norm.sd > 0, values, 0.0)
    values[matrix.mask] = np.nan
    return replace(matrix, values=values, mask=matrix.mask.copy(),
                   labels=matrix.labels.copy(), row_keys=list(matrix.row_keys),
                   descriptors=list(matrix.descriptors))


def impute_sentinel(matrix: FeatureMatrix, sentinel: float = -999.0) -> FeatureMatrix:
    """Replace every masked entry by a sentinel and clear the mask.

    Provided for external baseline models that cannot route missing values
    natively; the native pipeline never calls this.
    """
    values = matrix.values.copy()
    values[matrix.mask] = sentinel
    return replace(matrix, values=values,
                   mask=np.zeros_like(matrix.mask),
                   labels=matrix.labels.copy(), row_keys=list(matrix.row_keys),
                   descriptors=list(matrix.descriptors))


def write_matrix_csv(matrix: FeatureMatrix, path, manifest_path=None) -> None:
    """Export rows as CSV with GROUP.source.lag.variable headers, plus a
    companion JSON descriptor manifest."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["county", "target_week", *matrix.column_labels(), "label"])
        for i in range(matrix.n_rows):
            county, week = matrix.row_keys[i]
            cells = ["" if matrix.mask[i, j] else repr(float(matrix.values[i, j]))
                     for j in range(matrix.n_cols)]
            writer.writerow([county, week, *cells, int(matrix.labels[i])])
    if manifest_path is not None:
        with open(manifest_path, "w") as fh:
            json.dump([d.as_dict() for d in matrix.descriptors], fh, indent=2, sort_keys=True)
            fh.write("\n")
