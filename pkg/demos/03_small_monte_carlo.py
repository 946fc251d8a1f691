"""
A small Monte Carlo run
=======================

Twenty replications of the sparse heteroskedastic design. RMISE measures
how far the fitted quantile functions are from the truth, TPR/TNR how well
each estimator separates varying from constant slopes.
Takes about a minute on one core.
"""

from qrfuse import TauGrid
from qrfuse.selection import make_grid
from qrfuse.simulate import default_estimators, run_experiment

grid = TauGrid.equispaced(0.1, 0.9, 0.2)
res = run_experiment("y2", 100, grid, default_estimators(make_grid(5, 1, 5, 4)), n_reps=20, seed=0)

print("RMISE (x100) by quantile")
for label in res.labels:
    mean, _ = res.rmise[label]
    print(f"  {label:6s}", " ".join(f"{m:6.1f}" for m in mean))

print("selection rates")
for label, (tpr, tnr) in res.rates.items():
    print(f"  {label:6s} TPR {tpr:.3f}  TNR {tnr:.3f}")
