"""Synthetic panels with a planted, recoverable impact rule.

Used by the test suite and the demo scripts: the target category fires
exactly when the county's own DSCI averaged over a known set of prior weeks
crosses a threshold, so a correctly wired pipeline must recover it and a
window that cannot see those weeks must not.
"""

from __future__ import annotations

import csv
from datetime import date, timedelta

import numpy as np

from .ingest import MODELED_CATEGORIES, WEEK, AdjacencyGraph, Panel


def chain_graph(counties) -> AdjacencyGraph:
    """Path topology: county i borders i-1 and i+1 (degrees 1 and 2)."""
    edges = [(counties[i], counties[i + 1]) for i in range(len(counties) - 1)]
    return AdjacencyGraph.from_edges(edges, counties=counties)


def ring_graph(counties, k: int = 2) -> AdjacencyGraph:
    """Circulant topology: county i borders i +/- 1..k (degree 2k)."""
    n = len(counties)
    edges = [(counties[i], counties[(i + d) % n])
             for i in range(n) for d in range(1, k + 1)]
    return AdjacencyGraph.from_edges(edges, counties=counties)


def make_planted_panel(n_counties: int = 5, n_weeks: int = 200, seed: int = 0,
                       category: str = "fire", rule_lags=(1, 2, 3, 4),
                       dsci_threshold: float = 300.0, esi_missing_rate: float = 0.1,
                       noise_impact_rate: float = 0.02, topology: str = "chain",
                       start_week: date = date(2020, 1, 6)):
    """Panel whose ``category`` impact fires iff mean DSCI over ``rule_lags``
    prior weeks exceeds ``dsci_threshold``; everything else is noise.

    DSCI follows a per-county two-regime Markov chain (drought weeks near
    420, quiet weeks near 120), mimicking the strong week-to-week
    persistence of real coverage indices. Away from regime transitions the
    planted rule is separable by a single threshold on any recent lag;
    counties evolve independently, so neighbor columns carry no signal
    about the target county's label. Returns (panel, graph).
    """
    rng = np.random.default_rng(seed)
    counties = tuple(f"{35001 + 2 * i:05d}" for i in range(n_counties))
    weeks = tuple(start_week + i * WEEK for i in range(n_weeks))

    dry = np.zeros((n_counties, n_weeks), dtype=bool)
    dry[:, 0] = rng.random(n_counties) < 0.25
    for wi in range(1, n_weeks):
        flip = rng.random(n_counties)
        dry[:, wi] = np.where(dry[:, wi - 1], flip >= 0.15, flip < 0.05)
    dsci = np.clip(np.where(dry, 420.0, 120.0)
                   + rng.normal(0.0, 30.0, size=(n_counties, n_weeks)), 0.0, 500.0)
    esi = rng.normal(0.0, 1.0, size=(n_counties, n_weeks))
    esi[rng.random((n_counties, n_weeks)) < esi_missing_rate] = np.nan

    impacts = np.zeros((n_counties, n_weeks, len(MODELED_CATEGORIES)), dtype=np.uint8)
    for k, cat in enumerate(MODELED_CATEGORIES):
        if cat == category:
            continue
        impacts[:, :, k] = rng.random((n_counties, n_weeks)) < noise_impact_rate
    kt = MODELED_CATEGORIES.index(category)
    max_lag = max(rule_lags)
    for wi in range(max_lag, n_weeks):
        window_mean = np.mean([dsci[:, wi - lag] for lag in rule_lags], axis=0)
        impacts[:, wi, kt] = window_mean > dsci_threshold

    panel = Panel(counties, weeks, MODELED_CATEGORIES, dsci, esi, impacts)
    graph = chain_graph(counties) if topology == "chain" else ring_graph(counties)
    return panel, graph


def write_raw_inputs(panel: Panel, graph: AdjacencyGraph, out_dir) -> dict:
    """Emit usdm/esi/dir/adjacency CSVs that re-ingest into ``panel``.

    DSCI round-trips by putting the whole value into the D4 category
    (dsci = 5 * d4); ESI becomes one mid-week observation per observed
    week; impact flags become per-run span reports.
    """
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv")
             for name in ("usdm", "esi", "dir", "adjacency")}

    with open(paths["usdm"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fips", "week_start", "d0", "d1", "d2", "d3", "d4"])
        for ci, county in enumerate(panel.counties):
            for wi, week in enumerate(panel.weeks):
                writer.writerow([county, week.isoformat(), 0, 0, 0, 0,
                                 repr(float(panel.dsci[ci, wi]) / 5.0)])

    with open(paths["esi"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fips", "date", "esi"])
        for ci, county in enumerate(panel.counties):
            for wi, week in enumerate(panel.weeks):
                v = panel.esi[ci, wi]
                if not np.isnan(v):
                    writer.writerow([county, (week + timedelta(days=2)).isoformat(),
                                     repr(float(v))])

    with open(paths["dir"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fips", "span_start", "span_end", "category"])
        for ci, county in enumerate(panel.counties):
            for k, cat in enumerate(panel.categories):
                flags = panel.impacts[ci, :, k]
                wi = 0
                while wi < len(flags):
                    if flags[wi]:
                        run_end = wi
                        while run_end + 1 < len(flags) and flags[run_end + 1]:
                            run_end += 1
                        writer.writerow([county, panel.weeks[wi].isoformat(),
                                         (panel.weeks[run_end] + timedelta(days=3)).isoformat(),
                                         cat])
                        wi = run_end + 1
                    else:
                        wi += 1

    with open(paths["adjacency"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fips_a", "fips_b"])
        seen = set()
        for county in graph.counties:
            for nbr in graph.neighbors[county]:
                if (nbr, county) not in seen:
                    seen.add((county, nbr))
                    writer.writerow([county, nbr])

    return paths


def write_config(path, input_paths: dict, panel_start: date, panel_end: date,
                 **overrides) -> None:
    """Minimal TOML config pointing at ``input_paths``; keyword overrides
    are written as extra `section.key = value` lines (TOML inline syntax)."""
    lines = [
        f"seed = {overrides.pop('seed', 0)}",
        "",
        "[inputs]",
        f'usdm = "{input_paths["usdm"]}"',
        f'esi = "{input_paths["esi"]}"',
        f'dir = "{input_paths["dir"]}"',
        f'adjacency = "{input_paths["adjacency"]}"',
        "",
        "[panel]",
        f"start_week = {panel_start.isoformat()}",
        f"end_week = {panel_end.isoformat()}",
    ]
    sections: dict[str, list[str]] = {}
    for dotted, value in overrides.items():
        section, key = dotted.split(".", 1)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str):
            rendered = f'"{value}"'
        elif isinstance(value, (list, tuple)):
            rendered = "[" + ", ".join(
                f'"{v}"' if isinstance(v, str) else str(v) for v in value) + "]"
        elif isinstance(value, date):
            rendered = value.isoformat()
        else:
            rendered = str(value)
        sections.setdefault(section, []).append(f"{key} = {rendered}")
    for section in sections:
        lines += ["", f"[{section}]", *sections[section]]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
