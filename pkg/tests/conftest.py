import numpy as np
import pytest

from droughtcast.features import FeatureDescriptor, FeatureMatrix
from droughtcast.synthetic import make_planted_panel


def make_matrix(values, labels, mask=None, provenance="train", groups=None):
    """FeatureMatrix from raw arrays, with placeholder descriptors."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.isnan(values)
    else:
        mask = np.asarray(mask, dtype=bool)
        values = values.copy()
        values[mask] = np.nan
    if groups is None:
        groups = ["DI"] * values.shape[1]
    descriptors = [FeatureDescriptor(group=groups[j], source="target", lag=1,
                                     variable=f"x{j}")
                   for j in range(values.shape[1])]
    return FeatureMatrix(values=values, mask=mask,
                         labels=np.asarray(labels, dtype=np.int8),
                         row_keys=[("t", str(i)) for i in range(values.shape[0])],
                         descriptors=descriptors, provenance=provenance)


@pytest.fixture(scope="session")
def planted():
    """Shared 5-county planted-rule panel (fire fires iff mean DSCI over
    lags 1-4 exceeds 300)."""
    return make_planted_panel(n_counties=5, n_weeks=200, seed=11)
