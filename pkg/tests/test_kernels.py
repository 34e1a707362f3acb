import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dgwr.errors import ConfigError, InputError
from dgwr.kernels import (
    KernelSpec,
    bandwidth_grid,
    distance_matrix,
    kernel_weights,
    median_pairwise_distance,
)


class TestDistanceMatrix:
    def test_pythagorean_pair(self):
        d = distance_matrix([(0.0, 0.0), (3.0, 4.0)])
        assert d[0, 1] == pytest.approx(5.0, abs=0)
        assert d[1, 0] == pytest.approx(5.0, abs=0)

    def test_single_point(self):
        d = distance_matrix([(2.0, -1.0)])
        assert d.shape == (1, 1)
        assert d[0, 0] == 0.0

    def test_right_triangle(self):
        d = distance_matrix([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
        assert d[1, 2] == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(InputError):
            distance_matrix([(0.0, 0.0), (np.nan, 1.0)])

    def test_rejects_bad_shape(self):
        with pytest.raises(InputError):
            distance_matrix([(0.0, 0.0, 1.0)])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2**31 - 1))
    def test_symmetry_and_zero_diagonal(self, n, seed):
        pts = np.random.default_rng(seed).uniform(-5, 5, (n, 2))
        d = distance_matrix(pts)
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0.0)
        assert np.all(d >= 0.0)


class TestKernelWeights:
    def test_gaussian_at_zero(self):
        wv = kernel_weights(KernelSpec("gaussian", 2.0), [0.0, 1.0], 0)
        assert wv.weights[0] == 1.0

    def test_gaussian_at_bandwidth(self):
        wv = kernel_weights(KernelSpec("gaussian", 0.7), [0.7], 0)
        assert wv.weights[0] == pytest.approx(np.exp(-0.5), abs=1e-15)

    def test_bisquare_compact_support(self):
        spec = KernelSpec("bisquare", 1.5)
        wv = kernel_weights(spec, [0.0, 1.5, 2.0, 0.75], 0)
        assert wv.weights[0] == 1.0
        assert wv.weights[1] == 0.0
        assert wv.weights[2] == 0.0
        assert wv.weights[3] == pytest.approx((1 - 0.25) ** 2, abs=1e-15)

    def test_bad_bandwidth_rejected(self):
        with pytest.raises(ConfigError):
            KernelSpec("gaussian", 0.0)
        with pytest.raises(ConfigError):
            KernelSpec("gaussian", -1.0)

    def test_bad_family_rejected(self):
        with pytest.raises(ConfigError):
            KernelSpec("tricube", 1.0)

    def test_weights_in_unit_interval(self):
        d = np.linspace(0.0, 10.0, 101)
        for family in ("gaussian", "bisquare"):
            w = KernelSpec(family, 1.3).weights(d)
            assert np.all((0.0 <= w) & (w <= 1.0))

    def test_symmetric_between_locations(self):
        pts = np.random.default_rng(0).uniform(0, 1, (6, 2))
        d = distance_matrix(pts)
        spec = KernelSpec("gaussian", 0.4)
        for i in range(6):
            for j in range(6):
                wi = kernel_weights(spec, d[i], i).weights
                wj = kernel_weights(spec, d[j], j).weights
                assert wi[j] == wj[i]

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.01, max_value=10.0),
        st.floats(min_value=0.1, max_value=5.0),
        st.floats(min_value=1.01, max_value=4.0),
    )
    def test_gaussian_weight_increases_with_bandwidth(self, d, b, factor):
        # keep the smaller weight above the subnormal underflow boundary
        assume(0.5 * (d / b) ** 2 < 700.0)
        w_small = KernelSpec("gaussian", b).weights(d)
        w_big = KernelSpec("gaussian", b * factor).weights(d)
        assert w_big > w_small


class TestMedianPairwiseDistance:
    def test_single_pair(self):
        assert median_pairwise_distance([(0.0, 0.0), (1.0, 0.0)]) == 1.0

    def test_three_collinear(self):
        # distances {1, 1, 2} -> median 1
        assert median_pairwise_distance([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]) == 1.0

    def test_matches_bruteforce_sort(self):
        pts = np.random.default_rng(7).uniform(0, 1, (100, 2))
        all_d = []
        for i in range(100):
            for j in range(i + 1, 100):
                all_d.append(float(np.hypot(*(pts[i] - pts[j]))))
        all_d.sort()
        # even count: median = mean of the two central order statistics
        k = len(all_d)
        expected = 0.5 * (all_d[k // 2 - 1] + all_d[k // 2])
        assert median_pairwise_distance(pts) == pytest.approx(expected, rel=1e-12)

    def test_needs_two_points(self):
        with pytest.raises(InputError):
            median_pairwise_distance([(0.0, 0.0)])


class TestBandwidthGrid:
    def test_unit_median_ten_steps(self):
        pts = [(0.0, 0.0), (1.0, 0.0)]  # b* = 1
        grid = bandwidth_grid(pts, 10)
        assert np.allclose(grid, np.arange(1, 11) / 10.0, atol=0)

    def test_two_steps(self):
        pts = [(0.0, 0.0), (2.0, 0.0)]  # b* = 2
        assert list(bandwidth_grid(pts, 2)) == [1.0, 2.0]

    def test_degenerate_single_step(self):
        pts = [(0.0, 0.0), (0.0, 3.0)]
        assert list(bandwidth_grid(pts, 1)) == [3.0]

    def test_rejects_bad_count(self):
        with pytest.raises(ConfigError):
            bandwidth_grid([(0.0, 0.0), (1.0, 0.0)], 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=30), st.integers(min_value=1, max_value=15))
    def test_ascending_and_tops_at_median(self, n, num):
        pts = np.random.default_rng(n * 1000 + num).uniform(-3, 3, (n, 2))
        grid = bandwidth_grid(pts, num)
        assert len(grid) == num
        assert np.all(np.diff(grid) > 0) or num == 1
        assert grid[-1] == median_pairwise_distance(pts)
