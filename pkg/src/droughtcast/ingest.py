"""Raw-data ingestion: weekly drought-index / impact panel construction.

Parses USDM category-area tables, ESI observations, impact reports and a
county adjacency edge list into a gap-free weekly county panel. County
identifiers (FIPS codes) are treated as opaque strings and sorted
lexicographically wherever a deterministic order is needed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

WEEK = timedelta(days=7)

# Impact categories modeled by default (Business and Energy are parsed from
# input but excluded from modeling unless explicitly requested).
MODELED_CATEGORIES = ("agriculture", "water", "fire", "plants", "relief", "society", "tourism")
EXTRA_CATEGORIES = ("business", "energy")
ALL_CATEGORIES = MODELED_CATEGORIES + EXTRA_CATEGORIES


class InputError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class DroughtCategoryAreas:
    """Categorical (non-cumulative) percent area per drought category D0-D4."""

    d0: float
    d1: float
    d2: float
    d3: float
    d4: float

    def __post_init__(self):
        vals = (self.d0, self.d1, self.d2, self.d3, self.d4)
        for i, v in enumerate(vals):
            if not (0.0 <= v <= 100.0):
                raise InputError(f"d{i} percent area {v!r} outside [0, 100]")
        if sum(vals) > 100.0 + 1e-6:
            raise InputError(f"category percent areas sum to {sum(vals)!r} > 100")


def compute_dsci(areas: DroughtCategoryAreas) -> float:
    """Severity-weighted coverage: weights 1..5 on the D0..D4 percent areas.

    Bounded to [0, 500] since the categorical areas sum to at most 100.
    """
    return 1.0 * areas.d0 + 2.0 * areas.d1 + 3.0 * areas.d2 + 4.0 * areas.d3 + 5.0 * areas.d4


@dataclass(frozen=True)
class ImpactReport:
    """One reported impact span for a single county and category."""

    county_id: str
    span_start: date
    span_end: date
    category: str

    def __post_init__(self):
        if self.span_start > self.span_end:
            raise InputError(
                f"report span for {self.county_id}/{self.category} starts "
                f"{self.span_start} after end {self.span_end}"
            )
        if self.category not in ALL_CATEGORIES:
            raise InputError(f"unknown impact category {self.category!r}")


@dataclass(frozen=True)
class WeeklyCountyRecord:
    """One county-week observation of the panel."""

    county_id: str
    week_start: date
    dsci: float
    esi: float | None
    impacts: dict[str, int]


def binarize_impacts(reports, county: str, week_start: date, category: str) -> int:
    """1 iff any report for (county, category) overlaps the 7-day week."""
    week_end = week_start + timedelta(days=6)
    for r in reports:
        if r.county_id != county or r.category != category:
            continue
        if r.span_start <= week_end and r.span_end >= week_start:
            return 1
    return 0


def week_grid(start_week: date, end_week: date) -> tuple[date, ...]:
    """All week-start dates start, start+7d, ... up to and including end_week."""
    if end_week < start_week:
        raise InputError(f"end week {end_week} precedes start week {start_week}")
    n = (end_week - start_week).days // 7 + 1
    return tuple(start_week + i * WEEK for i in range(n))


def align_esi_weekly(esi_series, weeks: tuple[date, ...]) -> np.ndarray:
    """Weekly mean of dated ESI observations; NaN where a week has none.

    ``esi_series`` is an iterable of (date, value). Observations outside the
    week grid are ignored.
    """
    sums = np.zeros(len(weeks))
    counts = np.zeros(len(weeks), dtype=int)
    start = weeks[0]
    for d, v in esi_series:
        offset = (d - start).days
        if offset < 0:
            continue
        idx = offset // 7
        if idx >= len(weeks):
            continue
        sums[idx] += v
        counts[idx] += 1
    out = np.full(len(weeks), np.nan)
    observed = counts > 0
    out[observed] = sums[observed] / counts[observed]
    return out


@dataclass(frozen=True)
class AdjacencyGraph:
    """Symmetric county neighbor relation with sorted neighbor lists."""

    counties: tuple[str, ...]
    neighbors: dict[str, tuple[str, ...]]

    @classmethod
    def from_edges(cls, edges, counties=None) -> "AdjacencyGraph":
        """Build from (a, b) pairs; one-way edges are symmetrized.

        Self-loops are rejected. If ``counties`` is given, edges touching an
        unknown FIPS raise; counties absent from every edge keep an empty
        neighbor list.
        """
        known = set(counties) if counties is not None else None
        adj: dict[str, set[str]] = {}
        if known is not None:
            adj = {c: set() for c in known}
        for a, b in edges:
            if a == b:
                raise InputError(f"self-loop edge ({a}, {a}) rejected")
            if known is not None and (a not in known or b not in known):
                bad = a if a not in known else b
                raise InputError(f"edge ({a}, {b}) references unknown FIPS {bad!r}")
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        county_list = tuple(sorted(known if known is not None else adj.keys()))
        return cls(county_list, {c: tuple(sorted(adj.get(c, ()))) for c in county_list})

    def degree(self, county: str) -> int:
        return len(self.neighbors[county])

    def max_degree(self) -> int:
        return max((len(v) for v in self.neighbors.values()), default=0)


@dataclass(frozen=True)
class Panel:
    """Gap-free weekly county panel.

    Values are stored as dense arrays indexed (county, week); ``esi`` uses
    NaN for weeks without an observation. The panel behaves as a sequence of
    :class:`WeeklyCountyRecord`, one per (county, week) pair.
    """

    counties: tuple[str, ...]
    weeks: tuple[date, ...]
    categories: tuple[str, ...]
    dsci: np.ndarray
    esi: np.ndarray
    impacts: np.ndarray
    county_index: dict[str, int] = field(repr=False, default_factory=dict)
    week_index: dict[date, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "county_index", {c: i for i, c in enumerate(self.counties)})
        object.__setattr__(self, "week_index", {w: i for i, w in enumerate(self.weeks)})
        self.dsci.setflags(write=False)
        self.esi.setflags(write=False)
        self.impacts.setflags(write=False)

    def __len__(self) -> int:
        return len(self.counties) * len(self.weeks)

    def record(self, county: str, week_start: date) -> WeeklyCountyRecord:
        ci = self.county_index[county]
        wi = self.week_index[week_start]
        esi = self.esi[ci, wi]
        return WeeklyCountyRecord(
            county_id=county,
            week_start=week_start,
            dsci=float(self.dsci[ci, wi]),
            esi=None if np.isnan(esi) else float(esi),
            impacts={cat: int(self.impacts[ci, wi, k]) for k, cat in enumerate(self.categories)},
        )

    def __iter__(self):
        for county in self.counties:
            for week in self.weeks:
                yield self.record(county, week)


def build_panel(usdm_rows, esi_rows, dir_reports, start_week: date, end_week: date,
                counties=None, categories: tuple[str, ...] = MODELED_CATEGORIES) -> Panel:
    """Assemble the weekly panel from parsed inputs.

    ``usdm_rows``: (fips, week_start, DroughtCategoryAreas) triples covering
    every (county, week) of the range exactly once; a missing pair is a hard
    error. ``esi_rows``: (fips, date, value) observations; counties or dates
    outside the panel are ignored. ``dir_reports``: :class:`ImpactReport`
    items; a multi-week span marks every overlapped week.
    """
    weeks = week_grid(start_week, end_week)
    usdm_rows = list(usdm_rows)
    if counties is None:
        counties = sorted({fips for fips, _, _ in usdm_rows})
    counties = tuple(counties)
    if not counties:
        raise InputError("no counties in USDM input")
    cidx = {c: i for i, c in enumerate(counties)}
    widx = {w: i for i, w in enumerate(weeks)}

    dsci = np.full((len(counties), len(weeks)), np.nan)
    for fips, wk, areas in usdm_rows:
        ci = cidx.get(fips)
        wi = widx.get(wk)
        if ci is None or wi is None:
            continue
        if not np.isnan(dsci[ci, wi]):
            raise InputError(f"duplicate USDM row for county {fips} week {wk}")
        dsci[ci, wi] = compute_dsci(areas)
    if np.isnan(dsci).any():
        ci, wi = np.argwhere(np.isnan(dsci))[0]
        raise InputError(f"USDM input missing county {counties[ci]} week {weeks[wi]}")

    esi = np.full((len(counties), len(weeks)), np.nan)
    per_county: dict[int, list] = {}
    for fips, d, v in esi_rows:
        ci = cidx.get(fips)
        if ci is not None:
            per_county.setdefault(ci, []).append((d, v))
    for ci, series in per_county.items():
        esi[ci] = align_esi_weekly(series, weeks)

    impacts = _mark_impacts(dir_reports, counties, weeks, categories, start_week)

    return Panel(counties, weeks, tuple(categories), dsci, esi, impacts)


def _mark_impacts(dir_reports, counties, weeks, categories, start_week):
    impacts = np.zeros((len(counties), len(weeks), len(categories)), dtype=np.uint8)
    cidx = {c: i for i, c in enumerate(counties)}
    kidx = {cat: k for k, cat in enumerate(categories)}
    last = weeks[-1]
    for r in dir_reports:
        ci = cidx.get(r.county_id)
        k = kidx.get(r.category)
        if ci is None or k is None:
            continue
        if r.span_end < start_week or r.span_start > last + timedelta(days=6):
            continue
        # Week wi overlaps the span iff span_start <= week_end(wi) and
        # span_end >= week_start(wi); solve for the index range.
        ds = (r.span_start - start_week).days
        de = (r.span_end - start_week).days
        first_wi = max(0, -(-(ds - 6) // 7))
        last_wi = min(len(weeks) - 1, de // 7)
        impacts[ci, first_wi:last_wi + 1, k] = 1
    return impacts


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def _open_rows(path, required):
    """DictReader over ``path`` validating the header; yields (line, row)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        for row in reader:
            yield reader.line_num, row


def _parse_float(path, line, name, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise InputError(f"{path}:{line}: bad {name} value {raw!r}") from None


def _parse_date(path, line, name, raw):
    try:
        return date.fromisoformat((raw or "").strip())
    except ValueError:
        raise InputError(f"{path}:{line}: bad {name} date {raw!r}") from None


def load_usdm_csv(path, cumulative: bool = False):
    """Parse a USDM table: fips, week_start, d0..d4 percent areas.

    With ``cumulative=True`` the d-columns are treated as cumulative
    (each category includes the more severe ones) and converted to
    categorical by subtracting adjacent categories.
    """
    cols = ("d0", "d1", "d2", "d3", "d4")
    out = []
    for line, row in _open_rows(path, ("fips", "week_start") + cols):
        fips = (row["fips"] or "").strip()
        if not fips:
            raise InputError(f"{path}:{line}: empty fips")
        wk = _parse_date(path, line, "week_start", row["week_start"])
        vals = [_parse_float(path, line, c, row[c]) for c in cols]
        if cumulative:
            vals = [vals[i] - vals[i + 1] for i in range(4)] + [vals[4]]
        try:
            areas = DroughtCategoryAreas(*vals)
        except InputError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
        out.append((fips, wk, areas))
    return out


def load_esi_csv(path):
    """Parse ESI observations: fips, date, esi. Blank esi rows are skipped."""
    out = []
    for line, row in _open_rows(path, ("fips", "date", "esi")):
        raw = (row["esi"] or "").strip()
        if not raw:
            continue
        fips = (row["fips"] or "").strip()
        d = _parse_date(path, line, "date", row["date"])
        out.append((fips, d, _parse_float(path, line, "esi", raw)))
    return out


def load_dir_csv(path):
    """Parse impact reports: fips, span_start, span_end, category."""
    out = []
    for line, row in _open_rows(path, ("fips", "span_start", "span_end", "category")):
        category = (row["category"] or "").strip().lower()
        try:
            out.append(ImpactReport(
                county_id=(row["fips"] or "").strip(),
                span_start=_parse_date(path, line, "span_start", row["span_start"]),
                span_end=_parse_date(path, line, "span_end", row["span_end"]),
                category=category,
            ))
        except InputError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
    return out


def load_adjacency(path, counties=None) -> AdjacencyGraph:
    """Parse a fips_a, fips_b edge list into a symmetric graph."""
    edges = []
    for line, row in _open_rows(path, ("fips_a", "fips_b")):
        a = (row["fips_a"] or "").strip()
        b = (row["fips_b"] or "").strip()
        if not a or not b:
            raise InputError(f"{path}:{line}: empty fips in edge")
        edges.append((a, b))
    try:
        return AdjacencyGraph.from_edges(edges, counties=counties)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_panel_csv(panel: Panel, path) -> None:
    """Export the panel: fips, week_start, dsci, esi, one 0/1 column per
    modeled category. ESI is blank where missing."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fips", "week_start", "dsci", "esi", *MODELED_CATEGORIES])
        kmap = [panel.categories.index(c) for c in MODELED_CATEGORIES]
        for ci, county in enumerate(panel.counties):
            for wi, week in enumerate(panel.weeks):
                esi = panel.esi[ci, wi]
                writer.writerow([
                    county,
                    week.isoformat(),
                    repr(float(panel.dsci[ci, wi])),
                    "" if np.isnan(esi) else repr(float(esi)),
                    *(int(panel.impacts[ci, wi, k]) for k in kmap),
                ])


def read_panel_csv(path) -> Panel:
    """Load a panel previously written by :func:`write_panel_csv`."""
    rows = []
    for line, row in _open_rows(path, ("fips", "week_start", "dsci", "esi") + MODELED_CATEGORIES):
        fips = (row["fips"] or "").strip()
        wk = _parse_date(path, line, "week_start", row["week_start"])
        dsci = _parse_float(path, line, "dsci", row["dsci"])
        raw_esi = (row["esi"] or "").strip()
        esi = _parse_float(path, line, "esi", raw_esi) if raw_esi else np.nan
        flags = []
        for cat in MODELED_CATEGORIES:
            v = (row[cat] or "").strip()
            if v not in ("0", "1"):
                raise InputError(f"{path}:{line}: impact flag {cat}={v!r} not 0/1")
            flags.append(int(v))
        rows.append((fips, wk, dsci, esi, flags))
    if not rows:
        raise InputError(f"{path}: no data rows")

    counties = tuple(sorted({r[0] for r in rows}))
    weeks = tuple(sorted({r[1] for r in rows}))
    grid = week_grid(weeks[0], weeks[-1])
    if weeks != grid:
        missing = sorted(set(grid) - set(weeks))
        raise InputError(f"{path}: week grid has gaps (first missing {missing[0]})")
    cidx = {c: i for i, c in enumerate(counties)}
    widx = {w: i for i, w in enumerate(weeks)}
    dsci = np.full((len(counties), len(weeks)), np.nan)
    esi = np.full((len(counties), len(weeks)), np.nan)
    impacts = np.zeros((len(counties), len(weeks), len(MODELED_CATEGORIES)), dtype=np.uint8)
    for fips, wk, d, e, flags in rows:
        ci, wi = cidx[fips], widx[wk]
        if not np.isnan(dsci[ci, wi]):
            raise InputError(f"{path}: duplicate row for {fips} {wk}")
        dsci[ci, wi] = d
        esi[ci, wi] = e
        impacts[ci, wi, :] = flags
    if np.isnan(dsci).any():
        ci, wi = np.argwhere(np.isnan(dsci))[0]
        raise InputError(f"{path}: missing row for {counties[ci]} {weeks[wi]}")
    return Panel(counties, weeks, tuple(MODELED_CATEGORIES), dsci, esi, impacts)
