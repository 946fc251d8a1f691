"""
Rolling Growth-at-Risk forecasts
================================

One-step-ahead quantile forecasts of a synthetic growth series whose
volatility rises with a financial-conditions index. Each forecast uses
the 50 most recent observations.
"""

from qrfuse import TauGrid
from qrfuse.estimators import Kind
from qrfuse.forecast import (ForecastExercise, ForecastModel, ar1_heteroskedastic,
                             build_target_pairs, rolling_forecast, score_exercise)
from qrfuse.selection import make_grid

raw, dates = ar1_heteroskedastic(200, seed=1)
pairs = build_target_pairs(raw, 1, dates)
grid = TauGrid.equispaced(0.1, 0.9, 0.1)
hg = make_grid(5, 1, 5, 3)
models = [ForecastModel("QR", Kind.QR), ForecastModel("GNCQR", Kind.GNCQR, hypergrid=hg)]

ex = ForecastExercise(pairs, 50, models, grid)
res = rolling_forecast(ex, seed=0)
print(f"{ex.n_windows} windows from {res.dates[0]} to {res.dates[-1]}")

# sorting the raw forecasts can only help when they cross
for row in score_exercise(res.unsorted, res.sorted, res.realized, grid):
    print(f"{row.estimator:6s} CRPS {row.crps[0]:.4f} sorted {row.crps_sorted[0]:.4f}"
          f"  left-tail {row.crps[2]:.4f}  log score {row.log_score:.3f}")

# the 10% quantile is the growth-at-risk figure
print("last GaR(10%) forecast:", round(float(res.sorted["GNCQR"][-1, 0]), 3))
