"""Data-driven choice of the robustness level and the bandwidth.

Two-step procedure: the robustness parameter gamma is picked first by
minimizing an asymptotic Hyvarinen score computed from full-data fits at the
largest candidate bandwidth, then the bandwidth is picked by maximizing a
robust leave-one-out cross-validation criterion at the chosen gamma. Candidate
points whose fits fail (too little kernel mass, singular local regressions)
are skipped and reported, never fatal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import SpatialDataset
from .errors import ConfigError, DgwrError, ScoreUnavailable, SelectionFailed, annotate_location
from .estimator import (
    FitConfig,
    _logsumexp_rows,
    _norm_logpdf_sq,
    fit_weight_rows,
)
from .kernels import bandwidth_grid, distance_matrix, kernel_weight_matrix

# gamma = 0 (plain GWR) up to 0.5 in steps of 0.05, with a finer toe near zero.
DEFAULT_GAMMAS = (0.0, 0.01, 0.03, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50)


@dataclass(frozen=True)
class TuningGrid:
    """Candidate gammas and bandwidths, stored ascending."""

    gammas: tuple
    bandwidths: tuple

    def __post_init__(self):
        g = tuple(sorted(float(v) for v in self.gammas))
        b = tuple(sorted(float(v) for v in self.bandwidths))
        if not g or not b:
            raise ConfigError("tuning grid must be non-empty")
        if g[0] < 0:
            raise ConfigError(f"gammas must be >= 0, got {g[0]}")
        if b[0] <= 0:
            raise ConfigError(f"bandwidths must be positive, got {b[0]}")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "bandwidths", b)

    @classmethod
    def default_for(cls, coords, num_bandwidths: int = 10) -> "TuningGrid":
        """Default grid: standard gammas plus a data-driven bandwidth ladder."""
        return cls(DEFAULT_GAMMAS, tuple(bandwidth_grid(coords, num_bandwidths)))


@dataclass
class SelectionResult:
    """Chosen (gamma, bandwidth) plus the full score traces behind the choice."""

    gamma_opt: float
    b_opt: float
    hscore_trace: list
    rcv_trace: list
    skipped: list


def _full_weight_matrix(dataset: SpatialDataset, config: FitConfig) -> np.ndarray:
    return kernel_weight_matrix(config.kernel, distance_matrix(dataset.coords))


def _raise_first(errors: dict):
    i = min(errors)
    raise annotate_location(errors[i], i)


def _self_residuals(dataset: SpatialDataset, fit) -> np.ndarray:
    mu = np.einsum("ip,ip->i", dataset.design, fit.beta)
    return dataset.response - mu


def _check_floored(fit, what: str):
    if fit.floored.any():
        k = int(fit.floored.sum())
        raise ScoreUnavailable(
            f"{what} collapsed onto the variance floor at {k} location(s); "
            "the grid point is too aggressive to score"
        )


def rcv(
    dataset: SpatialDataset,
    config: FitConfig,
    *,
    warm_start: bool = True,
    sigma2_override: float | None = None,
) -> float:
    """Robust leave-one-out cross-validation score; larger is better.

    Each location is refitted with its own sample's weight forced to zero and
    then scores the prediction of that held-out sample. For gamma = 0 the
    criterion degenerates, so the negative leave-one-out sum of squared
    prediction errors is returned instead (classical GWR cross-validation).
    Fits whose variance hits the floor cannot be scored meaningfully and raise
    ScoreUnavailable.

    sigma2_override replaces every held-out variance estimate in the score
    formula; it exists for testing limit behavior and is not used in normal
    operation.
    """
    W = _full_weight_matrix(dataset, config)
    init = None
    if warm_start:
        full = fit_weight_rows(dataset, W, config, record_trace=False, warn_floored=False)
        if full.errors:
            _raise_first(full.errors)
        _check_floored(full, "a full fit")
        init = (full.beta, full.sigma2)
    Wloo = W.copy()
    np.fill_diagonal(Wloo, 0.0)
    loo = fit_weight_rows(dataset, Wloo, config, init=init, record_trace=False, warn_floored=False)
    if loo.errors:
        _raise_first(loo.errors)
    _check_floored(loo, "a leave-one-out fit")
    resid = _self_residuals(dataset, loo)
    gamma = config.gamma
    if gamma == 0.0:
        return -float(resid @ resid)
    sigma2 = loo.sigma2
    if sigma2_override is not None:
        sigma2 = np.full_like(sigma2, float(sigma2_override))
    logphi = _norm_logpdf_sq(resid * resid, sigma2)
    lse = _logsumexp_rows((gamma * logphi)[None, :])[0]
    return float(lse / gamma + gamma / (2.0 * (1.0 + gamma)) * np.log(sigma2.sum()))


def hyvarinen_score_terms(residuals, sigma2, gamma: float) -> np.ndarray:
    """Per-location contributions to the gamma-selection score."""
    r2 = np.asarray(residuals, dtype=float) ** 2
    s2 = np.asarray(sigma2, dtype=float)
    w = np.exp(gamma * _norm_logpdf_sq(r2, s2))
    return (2.0 * (gamma * r2 - s2) * w + r2 * w * w) / (s2 * s2)


def hyvarinen_score(dataset: SpatialDataset, config: FitConfig) -> float:
    """Asymptotic Hyvarinen score of the fitted local models; smaller is better."""
    W = _full_weight_matrix(dataset, config)
    fit = fit_weight_rows(dataset, W, config, record_trace=False, warn_floored=False)
    if fit.errors:
        i = min(fit.errors)
        raise ScoreUnavailable(f"fit failed at location {i}: {fit.errors[i]}") from fit.errors[i]
    _check_floored(fit, "a full fit")
    resid = _self_residuals(dataset, fit)
    return float(np.sum(hyvarinen_score_terms(resid, fit.sigma2, config.gamma)))


def select(dataset: SpatialDataset, grid: TuningGrid, base_config: FitConfig) -> SelectionResult:
    """Two-step tuning: gamma by score at the widest bandwidth, then bandwidth.

    Ties prefer the smaller gamma (efficiency when robustness is indifferent)
    and the larger bandwidth (smoothness when fit is indifferent). Grid points
    whose fits fail are recorded in ``skipped`` with the underlying reason.
    """
    b_top = grid.bandwidths[-1]
    skipped: list = []
    hscore_trace: list = []
    gamma_opt = None
    best_h = math.inf
    for g in grid.gammas:
        cfg = replace(base_config, gamma=g, kernel=replace(base_config.kernel, bandwidth=b_top))
        try:
            h = hyvarinen_score(dataset, cfg)
        except DgwrError as err:
            skipped.append(("gamma", g, str(err)))
            continue
        if not math.isfinite(h):
            skipped.append(("gamma", g, f"non-finite score {h!r}"))
            continue
        hscore_trace.append((g, h))
        if h < best_h:
            best_h, gamma_opt = h, g
    if gamma_opt is None:
        raise SelectionFailed(f"every candidate gamma was skipped: {skipped}")

    rcv_trace: list = []
    b_opt = None
    best_r = -math.inf
    for b in grid.bandwidths:
        cfg = replace(base_config, gamma=gamma_opt, kernel=replace(base_config.kernel, bandwidth=b))
        try:
            r = rcv(dataset, cfg)
        except DgwrError as err:
            skipped.append(("bandwidth", b, str(err)))
            continue
        if not math.isfinite(r):
            skipped.append(("bandwidth", b, f"non-finite score {r!r}"))
            continue
        rcv_trace.append((b, r))
        if r >= best_r:
            best_r, b_opt = r, b
    if b_opt is None:
        raise SelectionFailed(f"every candidate bandwidth was skipped: {skipped}")
    return SelectionResult(gamma_opt, b_opt, hscore_trace, rcv_trace, skipped)
