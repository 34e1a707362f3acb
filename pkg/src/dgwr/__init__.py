"""Robust geographically weighted regression.

Local linear models with spatially decaying kernel weights, made resistant to
outliers by replacing the local log-likelihood with a gamma-divergence
objective. The robustness level and the bandwidth are selected from data, the
coefficient covariances come from estimating-equation sandwiches, and small
normalized density weights flag local outliers.
"""

from .data import SpatialDataset
from .diagnostics import (
    CovarianceEstimate,
    DiagnosticsResult,
    compute_diagnostics,
    condition_numbers,
    flag_outliers,
    normalized_outlier_weights,
    sandwich_covariance,
)
from .errors import (
    ConfigError,
    DegenerateObjectiveError,
    DegenerateWeights,
    DgwrError,
    GammaZeroError,
    InputError,
    InsufficientEffectiveSampleSize,
    NumericalError,
    PerfectFitWarning,
    ScoreUnavailable,
    SelectionFailed,
    SingularJacobian,
    SingularMomentMatrix,
)
from .estimator import (
    FitConfig,
    FitFailure,
    LocalEstimate,
    estimating_equation_residual,
    fit_all,
    log_likelihood_objective,
    mm_fit_location,
    mm_weights,
    objective,
)
from .kernels import (
    KernelSpec,
    WeightVector,
    bandwidth_grid,
    distance_matrix,
    kernel_weights,
    median_pairwise_distance,
)
from .selection import DEFAULT_GAMMAS, SelectionResult, TuningGrid, hyvarinen_score, rcv, select
from .simlab import (
    ScenarioConfig,
    SimReport,
    SyntheticDataset,
    generate,
    gp_sample,
    mse,
    run_replications,
    sample_domain,
)

__version__ = "0.1.0"
