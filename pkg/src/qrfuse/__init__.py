"""Joint quantile regression with adaptive non-crossing constraints."""

from .core import (
    AffineMap,
    ConstantColumnError,
    DataError,
    Dataset,
    QrfuseError,
    TauGrid,
    fitted_quantiles,
    inverse_transform_coefficients,
    read_csv,
    scale_to_unit,
    tick_loss,
)
from .estimators import (
    EstimationError,
    EstimatorConfig,
    GammaSolution,
    Kind,
    QuantileFit,
    build_constraint_row,
    canonicalize,
    fit,
    fit_path,
    sort_quantiles,
)
from .lp import LpProblem, LpSolution, Status, solve, stack_problems

__version__ = "0.1.0"
