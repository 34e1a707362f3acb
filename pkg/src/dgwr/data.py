"""Container for spatially indexed regression data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .kernels import as_coords


@dataclass(frozen=True)
class SpatialDataset:
    """Aligned (location, covariate row, response) triples.

    By convention the first design column is an all-ones intercept. The arrays
    are treated as immutable once constructed; nothing in the package mutates
    them, which keeps per-location fits safe to run concurrently.
    """

    coords: np.ndarray
    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        coords = as_coords(self.coords)
        design = np.asarray(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float)
        if design.ndim != 2:
            raise InputError(f"design must be a 2-d matrix, got shape {design.shape}")
        if response.ndim != 1:
            raise InputError(f"response must be a 1-d vector, got shape {response.shape}")
        n, p = design.shape
        if coords.shape[0] != n or response.shape[0] != n:
            raise InputError(
                f"row counts disagree: coords {coords.shape[0]}, design {n}, response {response.shape[0]}"
            )
        if not np.all(np.isfinite(design)):
            raise InputError("design matrix contains non-finite values")
        if not np.all(np.isfinite(response)):
            raise InputError("response contains non-finite values")
        if n < p + 1:
            raise InputError(f"need at least p + 1 = {p + 1} samples, got {n}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]
