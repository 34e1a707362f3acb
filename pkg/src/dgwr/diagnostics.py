"""Robust standard errors, outlier weights and flags, collinearity checks.

The covariance of each local coefficient vector comes from estimating-equation
theory as the sandwich J^-1 I J^-1, where J stacks the derivative of the
weighted estimating function and I its outer products. Outlier detection uses
the fitted density powers, rescaled so they average one over the dataset:
samples whose normalized weight falls below a threshold (0.5 by default) are
flagged as local outliers. Local collinearity is measured by the eigenvalue
ratio of the kernel-weighted covariate moment matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SpatialDataset
from .errors import DegenerateWeights, InputError, SingularJacobian
from .estimator import FitConfig, _logsumexp_rows, _norm_logpdf_sq
from .kernels import KernelSpec, distance_matrix, kernel_weight_matrix

JACOBIAN_CONDITION_LIMIT = 1e12


@dataclass
class CovarianceEstimate:
    """Per-location coefficient covariances and derived standard errors.

    Locations whose Jacobian was numerically singular are listed in
    ``failures`` and carry NaN entries; everything else is unaffected.
    """

    covariances: np.ndarray
    std_errors: np.ndarray
    jacobian_condition: np.ndarray
    failures: list


@dataclass
class DiagnosticsResult:
    """Normalized outlier weights, flags, and local condition numbers."""

    normalized_weights: np.ndarray
    outlier_flags: np.ndarray
    condition_numbers: np.ndarray
    threshold: float


def _stack_estimates(dataset: SpatialDataset, estimates) -> tuple:
    if len(estimates) != dataset.n:
        raise InputError(f"expected {dataset.n} estimates, got {len(estimates)}")
    beta = np.stack([np.asarray(e.beta, dtype=float) for e in estimates])
    sigma2 = np.array([float(e.sigma2) for e in estimates])
    if beta.shape != (dataset.n, dataset.p):
        raise InputError(f"estimate shape mismatch: {beta.shape}")
    if not np.all(sigma2 > 0):
        raise InputError("every sigma2 must be positive")
    return beta, sigma2


def sandwich_covariance(dataset: SpatialDataset, estimates, config: FitConfig) -> CovarianceEstimate:
    """Estimating-equation sandwich covariance of each local coefficient fit.

    J_i = sum_j w_ij phi_j^gamma (gamma r_j^2 / s2 - 1) x_j x_j'
    I_i = sum_j w_ij^2 phi_j^(2 gamma) r_j^2 x_j x_j'
    Var_i = J_i^-1 I_i J_i^-1, symmetrized against rounding. Density powers are
    exponentiated from gamma * logpdf, never formed as phi then powered.
    """
    X = dataset.design
    y = dataset.response
    gamma = config.gamma
    beta, sigma2 = _stack_estimates(dataset, estimates)
    W = kernel_weight_matrix(config.kernel, distance_matrix(dataset.coords))
    resid = y[None, :] - beta @ X.T
    rsq = resid * resid
    t = np.exp(gamma * _norm_logpdf_sq(rsq, sigma2[:, None]))
    cj = W * t * (gamma * rsq / sigma2[:, None] - 1.0)
    jac = np.einsum("ij,jp,jq->ipq", cj, X, X)
    ci = W * W * t * t * rsq
    meat = np.einsum("ij,jp,jq->ipq", ci, X, X)

    n, p = dataset.n, dataset.p
    cond = np.linalg.cond(jac)
    bad = ~np.isfinite(cond) | (cond > JACOBIAN_CONDITION_LIMIT)
    failures = [
        (int(i), str(SingularJacobian(f"Jacobian condition {cond[i]:.3g} exceeds {JACOBIAN_CONDITION_LIMIT:g}")))
        for i in np.flatnonzero(bad)
    ]
    cov = np.full((n, p, p), np.nan)
    se = np.full((n, p), np.nan)
    ok = np.flatnonzero(~bad)
    if ok.size:
        jinv = np.linalg.inv(jac[ok])
        v = jinv @ meat[ok] @ jinv
        v = 0.5 * (v + v.transpose(0, 2, 1))
        cov[ok] = v
        se[ok] = np.sqrt(np.clip(np.diagonal(v, axis1=1, axis2=2), 0.0, None))
    return CovarianceEstimate(cov, se, cond, failures)


def normalized_weights_from_residuals(residuals, sigma2, gamma: float) -> np.ndarray:
    """Normalized density powers from self-prediction residuals and variances.

    This is the single code path behind outlier weighting, shared by the fit
    pipeline and by re-diagnosis from stored residuals, so recomputation is
    bit-identical.
    """
    resid = np.asarray(residuals, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    s = float(gamma) * _norm_logpdf_sq(resid * resid, s2)
    lse = _logsumexp_rows(s[None, :])[0]
    if np.isneginf(lse):
        raise DegenerateWeights("every fitted density power underflowed")
    return np.exp(s - lse + np.log(resid.shape[0]))


def normalized_outlier_weights(dataset: SpatialDataset, estimates, gamma: float) -> np.ndarray:
    """Fitted density powers rescaled to average one over the dataset.

    Each sample is evaluated under its own location's fit; the weights always
    sum to n, and small values signal local outliers.
    """
    beta, sigma2 = _stack_estimates(dataset, estimates)
    resid = dataset.response - np.einsum("ip,ip->i", dataset.design, beta)
    return normalized_weights_from_residuals(resid, sigma2, gamma)


def flag_outliers(normalized_weights, threshold: float = 0.5) -> np.ndarray:
    """Flag samples whose normalized weight is strictly below the threshold."""
    u = np.asarray(normalized_weights, dtype=float)
    return u < float(threshold)


def condition_numbers(
    dataset: SpatialDataset,
    kernel: KernelSpec,
    *,
    include_intercept: bool = False,
) -> np.ndarray:
    """Eigenvalue ratio of the kernel-weighted covariate moment matrix.

    By default the intercept column is excluded so the measure reflects the
    covariates alone; values above roughly 30 indicate local collinearity.
    Exactly collinear (or empty) weighted moments report +inf rather than
    raising.
    """
    cols = dataset.design if include_intercept else dataset.design[:, 1:]
    if cols.shape[1] == 0:
        raise InputError("no covariate columns to diagnose; pass include_intercept=True")
    W = kernel_weight_matrix(kernel, distance_matrix(dataset.coords))
    m = np.einsum("ij,jp,jq->ipq", W, cols, cols)
    m = 0.5 * (m + m.transpose(0, 2, 1))
    ev = np.linalg.eigvalsh(m)
    lmin = ev[:, 0]
    lmax = ev[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cn = lmax / lmin
    return np.where(lmin <= 1e-14 * np.abs(lmax), np.inf, cn)


def compute_diagnostics(
    dataset: SpatialDataset,
    estimates,
    config: FitConfig,
    *,
    threshold: float = 0.5,
    include_intercept_cn: bool = False,
) -> DiagnosticsResult:
    """Bundle outlier weights, flags, and condition numbers for reporting."""
    u = normalized_outlier_weights(dataset, estimates, config.gamma)
    return DiagnosticsResult(
        normalized_weights=u,
        outlier_flags=flag_outliers(u, threshold),
        condition_numbers=condition_numbers(dataset, config.kernel, include_intercept=include_intercept_cn),
        threshold=float(threshold),
    )
