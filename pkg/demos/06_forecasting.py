#!/usr/bin/env python3
"""Lead-time forecasting: a window a:8 model sees panel weeks target-8
through target-a, so it leads the target by a weeks.

Every forecast runs through an access-logged panel view that proves
nothing newer than target-a was read. Ranges across windows bound the
expected impact count; weekly labels roll up into monthly totals.
"""

from datetime import date, timedelta

from droughtcast.experiments import ExperimentPlan, run_state_pooled
from droughtcast.features import WindowConfig
from droughtcast.forecast import (TrainedModel, aggregate_monthly,
                                  forecast_range, forecast_week)
from droughtcast.gbdt import TrainParams
from droughtcast.resample import ResampleParams
from droughtcast.synthetic import make_planted_panel

target = date(2024, 6, 3)
start = target - 40 * 7 * timedelta(days=1)
panel, graph = make_planted_panel(n_counties=6, n_weeks=40, seed=17,
                                  start_week=start)
print(f"panel covers {panel.weeks[0]} .. {panel.weeks[-1]}; "
      f"forecast target {target} is past the end")

models = {}
for a in (1, 2, 4, 8):
    plan = ExperimentPlan(categories=("fire",), index_sets=("dsci",),
                          windows=(a,), seed=5,
                          resample=ResampleParams(seed=0),
                          train=TrainParams(num_rounds=25, max_depth=4))
    _, ensemble, norm = run_state_pooled(panel, graph, "fire", "dsci",
                                         WindowConfig(a), plan)
    models[a] = TrainedModel(category="fire", index_set="dsci",
                             window=WindowConfig(a), ensemble=ensemble,
                             normalizer=norm)

# One-week lead: the newest week the forecast may read is target - 7 days.
log = set()
records = forecast_week(models[1], panel, graph, target, access_log=log)
print(f"\nwindow 1:8 forecast for {target} (lead 1 week):")
for r in records:
    print(f"  {r.county}: p={r.probability:.2f} -> label {r.label}")
print(f"weeks read: {min(log)} .. {max(log)} (cutoff respected)")

log8 = set()
forecast_week(models[8], panel, graph, target, access_log=log8)
print(f"window 8:8 reads only {sorted(log8)} (lead 8 weeks)")

# Range across windows: min/max of total predicted impacts.
rng_out = forecast_range(list(models.values()), panel, graph, target)
print(f"\nforecast range for {target}: {rng_out.min_total} .. {rng_out.max_total} "
      f"impacts, per window {rng_out.per_scenario_totals}")

# Monthly roll-up over four consecutive target weeks.
weekly = []
for k in range(4):
    weekly.extend(forecast_week(models[1], panel, graph,
                                target + k * timedelta(days=7)))
for m in aggregate_monthly(weekly):
    print(f"monthly total {m.month}: {m.predicted_total} predicted impacts")
