"""Weekly county-level drought impact prediction and forecasting.

The pipeline runs: ingest raw index/impact data into a gap-free weekly
panel, expand it into lagged neighbor-aware feature matrices, rebalance the
rare impact class, train gradient-boosted trees that route missing values
natively, evaluate per category/window/index set, and issue lead-time
forecasts.
"""

__version__ = "0.1.0"

from .ingest import (ALL_CATEGORIES, MODELED_CATEGORIES, AdjacencyGraph,
                     DroughtCategoryAreas, ImpactReport, InputError, Panel,
                     WeeklyCountyRecord, align_esi_weekly, binarize_impacts,
                     build_panel, compute_dsci, load_adjacency, load_dir_csv,
                     load_esi_csv, load_usdm_csv, read_panel_csv, week_grid,
                     write_panel_csv)
from .features import (FeatureDescriptor, FeatureMatrix, Normalizer,
                       WindowConfig, apply_normalizer, assemble_features,
                       fit_normalizer, impute_sentinel, split_train_test)
from .resample import (ResampleParams, ResampleReport, borderline_smote,
                       classify_danger, enn_clean, masked_distance,
                       resample_pipeline)
from .gbdt import (BoostedEnsemble, TrainParams, deserialize, find_best_split,
                   fit, gain_importance, predict_label, predict_proba,
                   serialize)
from .experiments import (ConfusionCounts, EvaluationReport, ExperimentPlan,
                          f1_per_class, group_contribution,
                          run_leave_one_county_out, run_state_pooled, sweep)
from .forecast import (ForecastRange, ForecastRecord, TrainedModel,
                       aggregate_monthly, forecast_range, forecast_week)
