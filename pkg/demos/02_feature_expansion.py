#!/usr/bin/env python3
"""Expand the weekly panel into a lagged, neighbor-aware feature matrix.

Shows the column layout (groups DI / IMPs / NEIGH_DI / NEIGH_IMPs), the
structural missingness that comes from counties with fewer neighbors than
the slot count, and the train-only normalizer.
"""

import numpy as np

from droughtcast import (WindowConfig, apply_normalizer, assemble_features,
                         fit_normalizer, impute_sentinel, split_train_test)
from droughtcast.synthetic import make_planted_panel

panel, graph = make_planted_panel(n_counties=5, n_weeks=120, seed=2)

# Window 3:8 means lags 3..8 feed the features -> a three-week lead time.
window = WindowConfig(3)
matrix = assemble_features(panel, graph, category="fire",
                           index_vars="dsci_esi", window=window)

n_lags = len(window.lags)
slots = graph.max_degree()
print(f"window {window.label()}: {n_lags} lags, {slots} neighbor slots")
print(f"matrix: {matrix.n_rows} rows x {matrix.n_cols} columns")
print(f"closed form: {n_lags} * (2 indices + 7 categories) * (1 + {slots}) "
      f"= {n_lags * 9 * (1 + slots)}")

print("\nfirst few column descriptors:")
for d in matrix.descriptors[:6]:
    print(f"  {d.label()}")

by_group = {}
for d in matrix.descriptors:
    by_group[d.group] = by_group.get(d.group, 0) + 1
print(f"\ncolumns per group: {by_group}")

# Chain topology: the first county has one neighbor, so its second
# neighbor slot is masked at every lag.
end_county = panel.counties[0]
rows = [i for i, (c, _) in enumerate(matrix.row_keys) if c == end_county]
slot1 = [j for j, d in enumerate(matrix.descriptors)
         if d.group.startswith("NEIGH") and d.source == 1]
print(f"\ncounty {end_county} (degree {graph.degree(end_county)}): "
      f"slot-1 columns fully masked = {bool(matrix.mask[np.ix_(rows, slot1)].all())}")
print(f"overall missing-cell share: {matrix.mask.mean():.3f}")

# Split first, then fit the normalizer on training rows only.
train, test = split_train_test(matrix, test_fraction=0.2, seed=0)
norm = fit_normalizer(train)
train_n = apply_normalizer(norm, train)
test_n = apply_normalizer(norm, test)
col = train_n.values[~train_n.mask[:, 0], 0]
print(f"\nafter normalization, train column 0: mean={col.mean():+.2e} "
      f"sd={col.std():.6f}")

# Sentinel imputation exists only for external baselines that cannot
# route missing values; the native pipeline never calls it.
dense = impute_sentinel(test_n)
print(f"sentinel-imputed copy has {int((dense.values == -999.0).sum())} cells "
      f"at -999 and mask cleared = {not dense.mask.any()}")
