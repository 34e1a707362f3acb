"""Per-location robust fitting of spatially varying linear models.

The local model at location i is y_j ~ N(x_j' beta_i, sigma2_i), fitted from
all samples with kernel weights that decay with distance. With gamma = 0 the
fit maximizes the kernel-weighted Gaussian log-likelihood, which is classical
GWR and reduces to one weighted least-squares solve. With gamma > 0 the
log-likelihood is replaced by a gamma-divergence objective

    (1/gamma) log( sum_j w_ij phi(y_j; x_j' beta, s2)^gamma )
        + gamma / (2 (1 + gamma)) log s2

whose stationarity condition carries the factor phi(...)^gamma, so samples
with large residuals are automatically discounted. The objective is maximized
by majorization-minimization: normalize the density-power weights at the
current iterate, solve the induced weighted least-squares problem, then update
the variance with the (1 + gamma) consistency factor. Each cycle cannot
decrease the objective, which the per-iteration trace makes checkable.

All density powers live in the log domain; phi^gamma is exponentiated only
after the log-sum-exp normalization, so huge residuals cannot underflow the
weight computation. The heavy lifting happens in a batched core that fits many
target rows against the shared sample set in vectorized passes; the public
single-location and all-locations entry points are thin wrappers over it, and
the tuning module reuses it with leave-one-out weight rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import SpatialDataset
from .errors import (
    ConfigError,
    DegenerateObjectiveError,
    DgwrError,
    GammaZeroError,
    InputError,
    InsufficientEffectiveSampleSize,
    PerfectFitWarning,
    SingularMomentMatrix,
    annotate_location,
)
from .kernels import KernelSpec, distance_matrix, distances_from, kernel_weight_matrix

LN_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class FitConfig:
    """Settings for local fits: robustness level, kernel, iteration control.

    sigma2_floor=None resolves to 1e-12 * var(response) at fit time; the floor
    exists because the variance update can collapse on near-perfect local fits.
    min_ess=None resolves to p + 1, the smallest weight mass that keeps the
    local regression identifiable.
    """

    gamma: float
    kernel: KernelSpec
    max_iter: int = 200
    tol: float = 1e-8
    sigma2_floor: float | None = None
    min_ess: float | None = None

    def __post_init__(self):
        g = float(self.gamma)
        if not np.isfinite(g) or g < 0.0:
            raise ConfigError(f"gamma must be finite and >= 0, got {self.gamma!r}")
        if int(self.max_iter) < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not np.isfinite(self.tol) or self.tol <= 0.0:
            raise ConfigError(f"tol must be positive, got {self.tol!r}")
        if self.sigma2_floor is not None and not self.sigma2_floor > 0.0:
            raise ConfigError(f"sigma2_floor must be positive, got {self.sigma2_floor!r}")
        if self.min_ess is not None and not self.min_ess > 0.0:
            raise ConfigError(f"min_ess must be positive, got {self.min_ess!r}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "max_iter", int(self.max_iter))
        object.__setattr__(self, "tol", float(self.tol))


@dataclass
class LocalEstimate:
    """Fitted (beta, sigma2) at one location plus convergence metadata.

    objective_trace holds the objective value at the initial state and after
    every update pair; for gamma > 0 it is non-decreasing up to rounding.
    """

    beta: np.ndarray
    sigma2: float
    iterations: int
    converged: bool
    final_objective: float
    objective_trace: np.ndarray | None = None


@dataclass
class FitFailure:
    """Per-location fit error collected by fit_all(on_error='collect')."""

    location: int
    error: DgwrError


@dataclass
class BatchFit:
    """Vectorized fit of m target rows against a shared sample set.

    Rows listed in ``errors`` carry NaN state; all other arrays line up with
    the weight-row order passed to fit_weight_rows.
    """

    beta: np.ndarray
    sigma2: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    floored: np.ndarray
    final_objective: np.ndarray
    traces: list
    errors: dict


def _norm_logpdf_sq(rsq, sigma2):
    """Gaussian log-density from squared residuals; broadcasts freely.

    Extreme standardized residuals overflow the ratio and come out as -inf,
    which is the correct log-density limit, so the overflow is not an error.
    """
    with np.errstate(over="ignore"):
        return -0.5 * (LN_2PI + np.log(sigma2)) - rsq / (2.0 * sigma2)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp. Rows that are entirely -inf yield -inf."""
    m = np.max(a, axis=1)
    out = np.full(a.shape[0], -np.inf)
    finite = np.isfinite(m)
    if np.any(finite):
        shifted = a[finite] - m[finite, None]
        out[finite] = m[finite] + np.log(np.exp(shifted).sum(axis=1))
    return out


def _solve_batch(mats: np.ndarray, rhs: np.ndarray):
    """Batched linear solve; returns (solutions, singular_mask).

    Singular systems are isolated row by row rather than failing the batch,
    and no regularization is ever applied.
    """
    m = rhs.shape[0]
    try:
        sol = np.linalg.solve(mats, rhs[..., None])[..., 0]
        bad = ~np.all(np.isfinite(sol), axis=1)
        return sol, bad
    except np.linalg.LinAlgError:
        pass
    sol = np.full(rhs.shape, np.nan)
    bad = np.zeros(m, dtype=bool)
    for k in range(m):
        try:
            sol[k] = np.linalg.solve(mats[k], rhs[k])
            bad[k] = not np.all(np.isfinite(sol[k]))
        except np.linalg.LinAlgError:
            bad[k] = True
    return sol, bad


def _resolve_sigma2_floor(config: FitConfig, y: np.ndarray) -> float:
    if config.sigma2_floor is not None:
        return float(config.sigma2_floor)
    floor = 1e-12 * float(np.var(y))
    if floor <= 0.0:
        floor = 1e-300
    return floor


def _resolve_min_ess(config: FitConfig, p: int) -> float:
    if config.min_ess is not None:
        return float(config.min_ess)
    return float(p + 1)


def _wls_state(X, y, W):
    """One-shot weighted maximum-likelihood state for each weight row.

    Returns (beta, sigma2, singular_mask); sigma2 is the weight-normalized
    mean squared residual.
    """
    u = W / W.sum(axis=1, keepdims=True)
    mats = np.einsum("mj,jp,jq->mpq", u, X, X)
    rhs = (u * y) @ X
    beta, bad = _solve_batch(mats, rhs)
    resid = y[None, :] - beta @ X.T
    sigma2 = np.einsum("mj,mj->m", u, resid * resid)
    return beta, sigma2, bad


def fit_weight_rows(
    dataset: SpatialDataset,
    weight_rows,
    config: FitConfig,
    *,
    init: tuple | None = None,
    record_trace: bool = True,
    warn_floored: bool = True,
) -> BatchFit:
    """Fit every weight row as one independent local regression.

    ``weight_rows`` is an (m, n) array of non-negative sample weights; each row
    is fitted exactly as mm_fit_location would fit it. ``init`` optionally
    supplies warm-start state as (beta (m, p), sigma2 (m,)); without it the
    gamma = 0 weighted least-squares fit seeds the iteration.
    """
    X = dataset.design
    y = dataset.response
    W = np.asarray(weight_rows, dtype=float)
    if W.ndim != 2 or W.shape[1] != dataset.n:
        raise InputError(f"weight rows must have shape (m, {dataset.n}), got {W.shape}")
    m = W.shape[0]
    p = dataset.p
    gamma = config.gamma
    floor = _resolve_sigma2_floor(config, y)
    min_ess = _resolve_min_ess(config, p)

    beta_out = np.full((m, p), np.nan)
    sigma2_out = np.full(m, np.nan)
    iters_out = np.zeros(m, dtype=int)
    conv_out = np.zeros(m, dtype=bool)
    floored_out = np.zeros(m, dtype=bool)
    final_out = np.full(m, np.nan)
    traces: list = [None] * m
    errors: dict = {}

    ess = W.sum(axis=1)
    for k in np.flatnonzero(~(ess >= min_ess)):
        errors[k] = InsufficientEffectiveSampleSize(
            f"effective sample size {ess[k]:.4g} is below the minimum {min_ess:.4g}"
        )
    rows = np.flatnonzero(ess >= min_ess)
    if rows.size == 0:
        return BatchFit(beta_out, sigma2_out, iters_out, conv_out, floored_out, final_out, traces, errors)

    # Initial state: warm start if supplied, else the gamma = 0 WLS fit.
    if init is not None:
        B = np.array(np.asarray(init[0], dtype=float)[rows], copy=True)
        S = np.array(np.asarray(init[1], dtype=float)[rows], copy=True)
        if B.shape != (rows.size, p) or S.shape != (rows.size,):
            raise InputError("warm-start state has the wrong shape")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(S)) and np.all(S > 0)):
            raise InputError("warm-start state must be finite with positive sigma2")
    else:
        B, S, bad = _wls_state(X, y, W[rows])
        if np.any(bad):
            for j in np.flatnonzero(bad):
                errors[rows[j]] = SingularMomentMatrix("weighted moment matrix is singular")
            keep = ~bad
            rows, B, S = rows[keep], B[keep], S[keep]
            if rows.size == 0:
                return BatchFit(
                    beta_out, sigma2_out, iters_out, conv_out, floored_out, final_out, traces, errors
                )
    flo = S < floor
    S = np.where(flo, floor, S)

    a = rows.size
    if gamma == 0.0:
        # The normalized weights do not depend on (beta, sigma2), so a single
        # WLS update pair is the exact maximizer.
        if init is not None:
            B, S, bad = _wls_state(X, y, W[rows])
            if np.any(bad):
                for j in np.flatnonzero(bad):
                    errors[rows[j]] = SingularMomentMatrix("weighted moment matrix is singular")
                keep = ~bad
                rows, B, S = rows[keep], B[keep], S[keep]
            flo = S < floor
            S = np.where(flo, floor, S)
        if rows.size:
            rsq = (y[None, :] - B @ X.T) ** 2
            logphi = _norm_logpdf_sq(rsq, S[:, None])
            final = np.einsum("mj,mj->m", W[rows], logphi)
            beta_out[rows] = B
            sigma2_out[rows] = S
            iters_out[rows] = 1
            conv_out[rows] = ~flo
            floored_out[rows] = flo
            final_out[rows] = final
            if record_trace:
                for j, k in enumerate(rows):
                    traces[k] = np.array([final[j]])
        if warn_floored:
            _warn_floored(floored_out)
        return BatchFit(beta_out, sigma2_out, iters_out, conv_out, floored_out, final_out, traces, errors)

    with np.errstate(divide="ignore"):
        logW = np.log(W)
    gam_c = gamma / (2.0 * (1.0 + gamma))

    it = np.zeros(a, dtype=int)
    conv = np.zeros(a, dtype=bool)
    trace_lists: list = [[] for _ in range(a)] if record_trace else None
    run = ~flo  # a floored start is terminal: the variance cannot recover

    for _ in range(config.max_iter):
        idx = np.flatnonzero(run)
        if idx.size == 0:
            break
        g = rows[idx]
        rsq = (y[None, :] - B[idx] @ X.T) ** 2
        logphi = _norm_logpdf_sq(rsq, S[idx, None])
        amat = logW[g] + gamma * logphi
        lse = _logsumexp_rows(amat)
        if record_trace:
            d_cur = lse / gamma + gam_c * np.log(S[idx])
            for j, k in enumerate(idx):
                trace_lists[k].append(d_cur[j])
        u = np.exp(amat - lse[:, None])
        mats = np.einsum("aj,jp,jq->apq", u, X, X)
        rhs = (u * y) @ X
        b_new, bad = _solve_batch(mats, rhs)
        if np.any(bad):
            for j in np.flatnonzero(bad):
                errors[g[j]] = SingularMomentMatrix("weighted moment matrix is singular")
            run[idx[bad]] = False
        good = np.flatnonzero(~bad)
        if good.size == 0:
            continue
        sel = idx[good]
        b_sel = b_new[good]
        rsq_new = (y[None, :] - b_sel @ X.T) ** 2
        s_new = (1.0 + gamma) * np.einsum("aj,aj->a", u[good], rsq_new)
        fl_now = s_new < floor
        s_new = np.where(fl_now, floor, s_new)
        rel_b = np.abs(b_sel - B[sel]).max(axis=1) / (1.0 + np.abs(b_sel).max(axis=1))
        rel_s = np.abs(s_new - S[sel]) / (1.0 + s_new)
        done = np.maximum(rel_b, rel_s) < config.tol
        B[sel] = b_sel
        S[sel] = s_new
        it[sel] += 1
        flo[sel] = fl_now
        conv[sel] = done & ~fl_now
        run[sel] = ~(done | fl_now)

    # Rows that survived get their final objective (and trace tail) in one pass.
    alive = np.array([j for j in range(a) if rows[j] not in errors], dtype=int)
    if alive.size:
        g = rows[alive]
        rsq = (y[None, :] - B[alive] @ X.T) ** 2
        logphi = _norm_logpdf_sq(rsq, S[alive, None])
        lse = _logsumexp_rows(logW[g] + gamma * logphi)
        d_fin = lse / gamma + gam_c * np.log(S[alive])
        beta_out[g] = B[alive]
        sigma2_out[g] = S[alive]
        iters_out[g] = it[alive]
        conv_out[g] = conv[alive]
        floored_out[g] = flo[alive]
        final_out[g] = d_fin
        if record_trace:
            for pos, (j, k) in enumerate(zip(alive, g)):
                traces[k] = np.array(trace_lists[j] + [d_fin[pos]])
    if warn_floored:
        _warn_floored(floored_out)
    return BatchFit(beta_out, sigma2_out, iters_out, conv_out, floored_out, final_out, traces, errors)


def _warn_floored(floored: np.ndarray):
    hit = np.flatnonzero(floored)
    if hit.size:
        warnings.warn(
            f"sigma2 collapsed to its floor at {hit.size} location(s) "
            f"(first: {int(hit[0])}); the local fit is near-perfect there",
            PerfectFitWarning,
            stacklevel=3,
        )


def _weight_row_for(dataset: SpatialDataset, target: int, config: FitConfig) -> np.ndarray:
    d = distances_from(dataset.coords, target)
    return config.kernel.weights(d)


def mm_fit_location(
    dataset: SpatialDataset,
    target: int,
    config: FitConfig,
    init: LocalEstimate | None = None,
) -> LocalEstimate:
    """Fit (beta, sigma2) at one location.

    Without ``init`` the iteration starts from the gamma = 0 weighted
    least-squares fit. Raises InsufficientEffectiveSampleSize when the kernel
    mass at the location cannot identify p + 1 parameters, and
    SingularMomentMatrix when the weighted normal equations are singular.
    """
    if not 0 <= int(target) < dataset.n:
        raise InputError(f"target index {target} out of range for n={dataset.n}")
    W = _weight_row_for(dataset, int(target), config)[None, :]
    start = None
    if init is not None:
        start = (np.asarray(init.beta, dtype=float)[None, :], np.array([float(init.sigma2)]))
    res = fit_weight_rows(dataset, W, config, init=start)
    if 0 in res.errors:
        raise annotate_location(res.errors[0], int(target))
    return LocalEstimate(
        beta=res.beta[0].copy(),
        sigma2=float(res.sigma2[0]),
        iterations=int(res.iterations[0]),
        converged=bool(res.converged[0]),
        final_objective=float(res.final_objective[0]),
        objective_trace=res.traces[0],
    )


def fit_all(
    dataset: SpatialDataset,
    config: FitConfig,
    *,
    on_error: str = "raise",
) -> list:
    """Independent per-location fits at every sample location, in order.

    on_error='raise' aborts on the first failing location (annotated with its
    index); on_error='collect' substitutes FitFailure entries so the caller
    can report all failures at once.
    """
    if on_error not in ("raise", "collect"):
        raise ConfigError(f"on_error must be 'raise' or 'collect', got {on_error!r}")
    W = kernel_weight_matrix(config.kernel, distance_matrix(dataset.coords))
    res = fit_weight_rows(dataset, W, config)
    out = []
    for i in range(dataset.n):
        if i in res.errors:
            if on_error == "raise":
                raise annotate_location(res.errors[i], i)
            out.append(FitFailure(i, res.errors[i]))
            continue
        out.append(
            LocalEstimate(
                beta=res.beta[i].copy(),
                sigma2=float(res.sigma2[i]),
                iterations=int(res.iterations[i]),
                converged=bool(res.converged[i]),
                final_objective=float(res.final_objective[i]),
                objective_trace=res.traces[i],
            )
        )
    return out


def loglik_given_weights(dataset, weights, beta, sigma2) -> float:
    """Weighted Gaussian log-likelihood for an explicit weight vector."""
    if not sigma2 > 0:
        raise InputError(f"sigma2 must be positive, got {sigma2!r}")
    w = np.asarray(weights, dtype=float)
    rsq = (dataset.response - dataset.design @ np.asarray(beta, dtype=float)) ** 2
    return float(w @ _norm_logpdf_sq(rsq, float(sigma2)))


def log_likelihood_objective(dataset, target, beta, sigma2, config) -> float:
    """Kernel-weighted Gaussian log-likelihood at one location (gamma = 0)."""
    return loglik_given_weights(dataset, _weight_row_for(dataset, int(target), config), beta, sigma2)


def objective_given_weights(dataset, weights, beta, sigma2, gamma) -> float:
    """Divergence objective for an explicit weight vector, constant dropped."""
    if gamma == 0.0:
        raise GammaZeroError("use log_likelihood_objective for gamma = 0")
    if not sigma2 > 0:
        raise InputError(f"sigma2 must be positive, got {sigma2!r}")
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    rsq = (dataset.response - dataset.design @ np.asarray(beta, dtype=float)) ** 2
    lse = _logsumexp_rows((logw + gamma * _norm_logpdf_sq(rsq, float(sigma2)))[None, :])[0]
    if np.isneginf(lse):
        raise DegenerateObjectiveError("every weighted density power underflowed")
    return float(lse / gamma + gamma / (2.0 * (1.0 + gamma)) * np.log(sigma2))


def objective(dataset, target, beta, sigma2, config) -> float:
    """Gamma-divergence objective at one location, additive constant dropped.

    Computed with log-sum-exp accumulation so density powers never underflow.
    """
    return objective_given_weights(
        dataset, _weight_row_for(dataset, int(target), config), beta, sigma2, config.gamma
    )


def mm_weights(dataset, target, beta, sigma2, config) -> np.ndarray:
    """Normalized reweighting step of the iteration; the result sums to one."""
    w = _weight_row_for(dataset, int(target), config)
    gamma = config.gamma
    if gamma == 0.0:
        return w / w.sum()
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    rsq = (dataset.response - dataset.design @ np.asarray(beta, dtype=float)) ** 2
    amat = (logw + gamma * _norm_logpdf_sq(rsq, float(sigma2)))[None, :]
    lse = _logsumexp_rows(amat)[0]
    if np.isneginf(lse):
        raise DegenerateObjectiveError("every weighted density power underflowed")
    return np.exp(amat[0] - lse)


def estimating_equation_residual(dataset, target, beta, sigma2, config) -> float:
    """Normalized first-order-condition residual of the fit at one location.

    Returns ||sum_j w_j phi_j^gamma x_j r_j||_2 / sum_j w_j phi_j^gamma, which
    vanishes at an exact stationary point.
    """
    w = _weight_row_for(dataset, int(target), config)
    beta = np.asarray(beta, dtype=float)
    resid = dataset.response - dataset.design @ beta
    logphi = _norm_logpdf_sq(resid * resid, float(sigma2))
    t = w * np.exp(config.gamma * logphi)
    num = np.linalg.norm(dataset.design.T @ (t * resid))
    den = t.sum()
    return float(num / den)
