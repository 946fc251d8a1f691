"""
Quantile crossing and the adaptive constraint
==============================================

Fit nine quantiles to the bundled toy data with ordinary quantile
regression, then with the constrained estimator at a few values of alpha.
"""

import numpy as np

from qrfuse import EstimatorConfig, TauGrid, fit, read_csv
from qrfuse.cli import toy_csv_path

data = read_csv(toy_csv_path(), "y")
grid = TauGrid.equispaced(0.1, 0.9, 0.1)
print(f"{data.T} observations, covariates {data.names}")

# separate quantile regressions are free to cross
qr = fit(data, grid, EstimatorConfig.make("QR"))
print(f"QR        loss {qr.objective:8.3f}  crossing rate {qr.crossing_rate:.3f}")

# alpha = 1 is the worst-case constraint, larger alpha pulls slopes together
for alpha in [0.5, 1.0, 5.0, 1e4]:
    f = fit(data, grid, EstimatorConfig.make("GNCQR", alpha))
    print(f"alpha={alpha:<7g} loss {f.objective:8.3f}  crossing rate {f.crossing_rate:.3f}"
          f"  x1 slopes {np.round(f.beta[0, [0, 4, 8]], 3)}")

# the large-alpha fit approaches composite quantile regression
cqr = fit(data, grid, EstimatorConfig.make("CQR"))
print(f"CQR       loss {cqr.objective:8.3f}  x1 slope {cqr.beta[0, 0]:.3f}")
