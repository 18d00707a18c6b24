"""Adaptive Lasso with componentwise partial tuning in low-dimensional regression.

Modules
-------
linmodel
    Least squares, the adaptive Lasso solver, KKT residuals and the
    containment slack ``lambda_j - z_j (X'X z)_j``.
asymptotics
    Tuning regimes, the limiting objective ``V_phi`` and its minimizer.
mset
    The limit set ``M`` that shapes confidence regions.
simlab
    Seeded Monte Carlo experiments (coverage, selection, rates, distribution).
cli
    Command-line front end (``alasso`` console script).
"""

from .asymptotics import (
    KKTReport,
    NoiseDraw,
    PhiVector,
    Regime,
    TuningSchedule,
    check_Vphi_kkt,
    eval_Vphi,
    minimize_Vphi,
    regime_from_schedule,
    sample_Z,
)
from .errors import (
    AlassoError,
    ConvergenceError,
    DegenerateWeightError,
    InvalidScheduleError,
    NotAMemberError,
    RankDeficiencyError,
    UndefinedDenominatorError,
    ValidationError,
    ZeroDirectionError,
)
from .extreal import INF, NEG_INF, ExtReal
from .linmodel import (
    FitResult,
    RegressionProblem,
    SolverOptions,
    TuningVector,
    coefficient_path,
    fit_adaptive_lasso,
    kkt_residual,
    lemma1_margin,
    least_squares,
)
from .mset import (
    BoundaryCloud,
    MSetSpec,
    boundary_ray,
    construct_phi,
    contains,
    ls_ellipse,
    sample_boundary,
    scale_set,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AlassoError",
    "BoundaryCloud",
    "ConvergenceError",
    "DegenerateWeightError",
    "ExtReal",
    "FitResult",
    "INF",
    "InvalidScheduleError",
    "KKTReport",
    "MSetSpec",
    "NEG_INF",
    "NoiseDraw",
    "NotAMemberError",
    "PhiVector",
    "RankDeficiencyError",
    "Regime",
    "RegressionProblem",
    "SolverOptions",
    "TuningSchedule",
    "TuningVector",
    "UndefinedDenominatorError",
    "ValidationError",
    "ZeroDirectionError",
    "boundary_ray",
    "check_Vphi_kkt",
    "coefficient_path",
    "construct_phi",
    "contains",
    "eval_Vphi",
    "fit_adaptive_lasso",
    "kkt_residual",
    "least_squares",
    "lemma1_margin",
    "ls_ellipse",
    "minimize_Vphi",
    "regime_from_schedule",
    "sample_Z",
    "sample_boundary",
    "scale_set",
]
