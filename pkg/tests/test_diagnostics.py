import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgwr.data import SpatialDataset
from dgwr.diagnostics import (
    compute_diagnostics,
    condition_numbers,
    flag_outliers,
    normalized_outlier_weights,
    sandwich_covariance,
)
from dgwr.errors import DegenerateWeights, InputError
from dgwr.estimator import FitConfig, LocalEstimate, fit_all
from dgwr.kernels import KernelSpec, distance_matrix

from helpers import make_instance, sandwich_oracle


def _manual_estimates(dataset, beta, sigma2):
    return [
        LocalEstimate(beta=np.asarray(beta, dtype=float), sigma2=float(sigma2),
                      iterations=1, converged=True, final_objective=0.0)
        for _ in range(dataset.n)
    ]


class TestSandwichCovariance:
    def test_gamma_zero_reduces_to_classical_form(self):
        rng = np.random.default_rng(50)
        ds = make_instance(rng, n=30, p=2)
        cfg = FitConfig(gamma=0.0, kernel=KernelSpec("gaussian", 0.5))
        fits = fit_all(ds, cfg)
        cov = sandwich_covariance(ds, fits, cfg)
        dmat = distance_matrix(ds.coords)
        for i in (0, 11, 29):
            w = cfg.kernel.weights(dmat[i])
            r = ds.response - ds.design @ fits[i].beta
            A = ds.design.T @ (w[:, None] * ds.design)
            M = ds.design.T @ ((w * w * r * r)[:, None] * ds.design)
            Ainv = np.linalg.inv(A)
            want = Ainv @ M @ Ainv
            assert np.abs(cov.covariances[i] - want).max() < 1e-8

    def test_zero_residuals_give_zero_covariance(self):
        rng = np.random.default_rng(51)
        coords = rng.uniform(0, 1, (10, 2))
        x = rng.normal(size=10)
        design = np.column_stack([np.ones(10), x])
        y = design @ np.array([0.5, -2.0])  # exact fit
        ds = SpatialDataset(coords, design, y)
        cfg = FitConfig(gamma=0.0, kernel=KernelSpec("gaussian", 0.5))
        est = _manual_estimates(ds, [0.5, -2.0], 1.0)
        cov = sandwich_covariance(ds, est, cfg)
        assert np.abs(cov.covariances).max() == 0.0

    def test_micro_instance_matches_highprecision_oracle(self):
        rng = np.random.default_rng(52)
        ds = make_instance(rng, n=6, p=2)
        cfg = FitConfig(gamma=0.35, kernel=KernelSpec("gaussian", 0.7))
        beta = np.array([0.4, 1.2])
        sigma2 = 0.8
        est = _manual_estimates(ds, beta, sigma2)
        cov = sandwich_covariance(ds, est, cfg)
        dmat = distance_matrix(ds.coords)
        for i in range(6):
            w = cfg.kernel.weights(dmat[i])
            want = sandwich_oracle(ds.design, ds.response, w, beta, sigma2, 0.35)
            assert np.abs(cov.covariances[i] - want).max() < 1e-10

    def test_symmetric_positive_semidefinite(self):
        rng = np.random.default_rng(53)
        ds = make_instance(rng, n=40, p=3, contam_frac=0.1)
        cfg = FitConfig(gamma=0.3, kernel=KernelSpec("gaussian", 0.5))
        fits = fit_all(ds, cfg)
        cov = sandwich_covariance(ds, fits, cfg)
        assert not cov.failures
        for v in cov.covariances:
            assert np.abs(v - v.T).max() < 1e-10
            ev = np.linalg.eigvalsh(v)
            assert ev.min() >= -1e-10 * max(np.trace(v), 1e-30)

    def test_gamma_continuity_on_clean_data(self):
        rng = np.random.default_rng(54)
        ds = make_instance(rng, n=30, p=2)
        k = KernelSpec("gaussian", 0.5)
        cfg0 = FitConfig(gamma=0.0, kernel=k)
        cfg_eps = FitConfig(gamma=1e-8, kernel=k)
        cov0 = sandwich_covariance(ds, fit_all(ds, cfg0), cfg0)
        cov_eps = sandwich_covariance(ds, fit_all(ds, cfg_eps), cfg_eps)
        rel = np.abs(cov_eps.covariances - cov0.covariances).max() / np.abs(cov0.covariances).max()
        assert rel < 1e-4

    def test_singular_jacobian_isolated_per_location(self):
        rng = np.random.default_rng(55)
        ds = make_instance(rng, n=20, p=2)
        cfg = FitConfig(gamma=0.0, kernel=KernelSpec("gaussian", 0.5))
        fits = fit_all(ds, cfg)
        # a wildly inflated sigma2 at one location cannot break the others
        fits[3] = LocalEstimate(beta=np.zeros(2), sigma2=1.0, iterations=1,
                                converged=True, final_objective=0.0)
        cov = sandwich_covariance(ds, fits, cfg)
        assert np.all(np.isfinite(cov.std_errors[[i for i in range(20) if i != 3]]))


class TestNormalizedWeights:
    def test_equal_densities_give_unit_weights(self):
        rng = np.random.default_rng(56)
        ds = make_instance(rng, n=15, p=2)
        est = _manual_estimates(ds, [0.0, 0.0], 1.0)
        # gamma = 0 wipes the density differences: all weights exactly 1
        u = normalized_outlier_weights(ds, est, 0.0)
        assert np.allclose(u, 1.0, atol=0)

    def test_weights_sum_to_n(self):
        rng = np.random.default_rng(57)
        for gamma in (0.1, 0.3, 0.5):
            ds = make_instance(rng, n=25, p=2, contam_frac=0.1)
            cfg = FitConfig(gamma=gamma, kernel=KernelSpec("gaussian", 0.5))
            fits = fit_all(ds, cfg)
            u = normalized_outlier_weights(ds, fits, gamma)
            assert u.sum() == pytest.approx(ds.n, abs=1e-8 * ds.n)
            assert np.all(u >= 0)

    def test_wild_outlier_weight_ratio(self):
        # one residual at 10 sigma among exact fits: its weight is smaller by
        # about exp(-gamma * 50)
        n = 12
        rng = np.random.default_rng(58)
        coords = rng.uniform(0, 1, (n, 2))
        design = np.column_stack([np.ones(n), rng.normal(size=n)])
        beta = np.array([1.0, -0.5])
        y = design @ beta
        y[4] += 10.0
        ds = SpatialDataset(coords, design, y)
        est = _manual_estimates(ds, beta, 1.0)
        u = normalized_outlier_weights(ds, est, 0.3)
        others = np.delete(u, 4)
        assert np.allclose(others, others[0])
        assert u[4] / others[0] == pytest.approx(np.exp(-15.0), rel=1e-9)

    def test_joint_underflow_raises(self):
        rng = np.random.default_rng(158)
        ds = make_instance(rng, n=10, p=2)
        # subnormal variances push every log-density power to -inf
        est = _manual_estimates(ds, [0.0, 0.0], 5e-324)
        with pytest.raises(DegenerateWeights):
            normalized_outlier_weights(ds, est, 0.3)

    def test_scale_invariance(self):
        rng = np.random.default_rng(59)
        ds = make_instance(rng, n=30, p=2, contam_frac=0.1)
        lam = 9.0
        ds_scaled = SpatialDataset(ds.coords, ds.design, lam * ds.response)
        cfg = FitConfig(gamma=0.25, kernel=KernelSpec("gaussian", 0.5), tol=1e-12)
        fits = fit_all(ds, cfg)
        scaled = [
            LocalEstimate(beta=lam * f.beta, sigma2=lam**2 * f.sigma2, iterations=f.iterations,
                          converged=f.converged, final_objective=f.final_objective)
            for f in fits
        ]
        u = normalized_outlier_weights(ds, fits, 0.25)
        u_scaled = normalized_outlier_weights(ds_scaled, scaled, 0.25)
        assert np.abs(u - u_scaled).max() < 1e-8


class TestFlagOutliers:
    def test_no_flags_for_unit_weights(self):
        assert not flag_outliers(np.ones(10), 0.5).any()

    def test_strict_threshold_boundary(self):
        flags = flag_outliers(np.array([0.49, 0.5, 0.51]), 0.5)
        assert flags.tolist() == [True, False, False]

    def test_zero_threshold_flags_nothing(self):
        u = np.array([0.0, 0.3, 1.0, 2.0])
        assert not flag_outliers(u, 0.0).any()

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.0, max_value=3.0), min_size=1, max_size=30),
        st.floats(min_value=0.0, max_value=1.5),
        st.floats(min_value=0.0, max_value=1.5),
    )
    def test_flag_set_monotone_in_threshold(self, u, t1, t2):
        lo, hi = sorted([t1, t2])
        u = np.asarray(u)
        f_lo = flag_outliers(u, lo)
        f_hi = flag_outliers(u, hi)
        assert np.all(f_hi[f_lo])  # flags(lo) subset of flags(hi)


class TestConditionNumbers:
    def test_identity_moment_matrix(self):
        # two co-located points with orthonormal covariate rows and a
        # compact-support kernel: each local moment matrix is the identity
        coords = np.array([[0.0, 0.0], [0.0, 0.0], [100.0, 0.0], [100.0, 0.0]])
        design = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
        y = np.zeros(4)
        ds = SpatialDataset(coords, design, y)
        cn = condition_numbers(ds, KernelSpec("bisquare", 1.0))
        assert np.allclose(cn, 1.0, atol=0)

    def test_duplicate_column_is_infinite(self):
        rng = np.random.default_rng(60)
        coords = rng.uniform(0, 1, (10, 2))
        x = rng.normal(size=10)
        design = np.column_stack([np.ones(10), x, x])
        ds = SpatialDataset(coords, design, rng.normal(size=10))
        cn = condition_numbers(ds, KernelSpec("gaussian", 0.5))
        assert np.all(np.isinf(cn))

    def test_at_least_one(self):
        rng = np.random.default_rng(61)
        ds = make_instance(rng, n=30, p=3)
        cn = condition_numbers(ds, KernelSpec("gaussian", 0.4))
        assert np.all(cn >= 1.0)

    def test_invariant_to_rotation_of_covariates(self):
        rng = np.random.default_rng(62)
        ds = make_instance(rng, n=20, p=3)
        theta = 0.7
        q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        rotated = np.column_stack([ds.design[:, 0], ds.design[:, 1:] @ q.T])
        ds_rot = SpatialDataset(ds.coords, rotated, ds.response)
        spec = KernelSpec("gaussian", 0.5)
        assert np.allclose(condition_numbers(ds, spec), condition_numbers(ds_rot, spec), rtol=1e-9)

    def test_intercept_only_needs_flag(self):
        rng = np.random.default_rng(63)
        coords = rng.uniform(0, 1, (5, 2))
        ds = SpatialDataset(coords, np.ones((5, 1)), rng.normal(size=5))
        with pytest.raises(InputError):
            condition_numbers(ds, KernelSpec("gaussian", 0.5))
        cn = condition_numbers(ds, KernelSpec("gaussian", 0.5), include_intercept=True)
        assert np.allclose(cn, 1.0)


class TestComputeDiagnostics:
    def test_bundles_consistent_pieces(self):
        rng = np.random.default_rng(64)
        ds = make_instance(rng, n=25, p=2, contam_frac=0.12, shift=10.0)
        cfg = FitConfig(gamma=0.3, kernel=KernelSpec("gaussian", 0.5))
        fits = fit_all(ds, cfg)
        diag = compute_diagnostics(ds, fits, cfg, threshold=0.5)
        assert diag.threshold == 0.5
        assert diag.normalized_weights.shape == (25,)
        assert np.array_equal(diag.outlier_flags, diag.normalized_weights < 0.5)
        assert diag.condition_numbers.shape == (25,)
