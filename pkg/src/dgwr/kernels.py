"""Spatial kernel machinery: distances, weight functions, and bandwidth grids.

Coordinates are treated as planar Euclidean throughout. Longitude/latitude
input is consumed as-is, so projecting to a sensible planar system is the
caller's responsibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError

KERNEL_FAMILIES = ("gaussian", "bisquare")


def as_coords(points) -> np.ndarray:
    """Validate and return coordinates as a float (n, 2) array."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise InputError(f"coordinates must have shape (n, 2) with n >= 1, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputError("coordinates contain non-finite values")
    return pts


@dataclass(frozen=True)
class KernelSpec:
    """Weight function family plus a fixed bandwidth in coordinate units.

    gaussian: w(d) = exp(-d^2 / (2 b^2)), strictly positive everywhere.
    bisquare: w(d) = (1 - (d/b)^2)^2 for d < b, zero beyond the bandwidth.
    """

    family: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in KERNEL_FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}; choose from {KERNEL_FAMILIES}")
        b = float(self.bandwidth)
        if not np.isfinite(b) or b <= 0.0:
            raise ConfigError(f"bandwidth must be a positive finite number, got {self.bandwidth!r}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "bandwidth", b)

    def weights(self, distances) -> np.ndarray:
        """Evaluate the kernel at the given distances."""
        d = np.asarray(distances, dtype=float)
        z = d / self.bandwidth
        if self.family == "gaussian":
            return np.exp(-0.5 * z * z)
        inside = z < 1.0
        core = 1.0 - z * z
        return np.where(inside, core * core, 0.0)


@dataclass(frozen=True)
class WeightVector:
    """Kernel weights from one target location to every sample."""

    target_index: int
    weights: np.ndarray


def distance_matrix(coords) -> np.ndarray:
    """Dense symmetric matrix of pairwise Euclidean distances."""
    pts = as_coords(coords)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def distances_from(coords, target: int) -> np.ndarray:
    """One row of the distance matrix, without forming the full matrix."""
    pts = as_coords(coords)
    if not 0 <= target < pts.shape[0]:
        raise InputError(f"target index {target} out of range for n={pts.shape[0]}")
    diff = pts - pts[target]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def kernel_weights(spec: KernelSpec, distances, target: int) -> WeightVector:
    """Kernel weights for one target location given its distance row."""
    d = np.asarray(distances, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise InputError("distances must be finite and non-negative")
    return WeightVector(target_index=int(target), weights=spec.weights(d))


def kernel_weight_matrix(spec: KernelSpec, dmat) -> np.ndarray:
    """Full n x n kernel weight matrix (row i = weights of location i)."""
    return spec.weights(dmat)


def median_pairwise_distance(coords) -> float:
    """Sample median of the n(n-1)/2 distinct pairwise distances.

    The unordered nonzero pairs are used; self-distances are excluded.
    """
    pts = as_coords(coords)
    n = pts.shape[0]
    if n < 2:
        raise InputError("median pairwise distance needs at least two points")
    d = distance_matrix(pts)
    iu = np.triu_indices(n, k=1)
    return float(np.median(d[iu]))


def bandwidth_grid(coords, num: int = 10) -> np.ndarray:
    """Ascending candidate bandwidths {k * b_star / num : k = 1..num}.

    b_star is the median pairwise distance, so the grid tops out at b_star.
    """
    if int(num) < 1:
        raise ConfigError(f"grid size must be >= 1, got {num}")
    num = int(num)
    b_star = median_pairwise_distance(coords)
    # grouping keeps the top of the grid exactly equal to b_star
    return b_star * (np.arange(1, num + 1) / num)
