"""Exception and warning types shared across the package."""


class DgwrError(Exception):
    """Base class for all errors raised by this package."""


class InputError(DgwrError):
    """Malformed or inconsistent data passed by the caller."""


class ConfigError(DgwrError):
    """Invalid configuration value (bandwidth, kernel family, grid, ...)."""


class GammaZeroError(DgwrError):
    """The divergence objective was requested at gamma = 0, where it is undefined."""


class DegenerateObjectiveError(DgwrError):
    """Every weighted density power underflowed; the objective is -inf."""


class InsufficientEffectiveSampleSize(DgwrError):
    """The kernel weights at a location sum to less than the identifiability minimum."""


class SingularMomentMatrix(DgwrError):
    """The weighted moment matrix of the local regression is singular."""


class SingularJacobian(DgwrError):
    """The estimating-equation Jacobian at a location is numerically singular."""


class DegenerateWeights(DgwrError):
    """All fitted density powers underflowed; normalized weights are undefined."""


class ScoreUnavailable(DgwrError):
    """A tuning score could not be computed because the underlying fits failed."""


class SelectionFailed(DgwrError):
    """Every candidate grid point was skipped during tuning."""


class NumericalError(DgwrError):
    """A numerical routine failed beyond the configured recovery attempts."""


class PerfectFitWarning(UserWarning):
    """A local variance estimate collapsed onto its floor (near-perfect local fit)."""


def annotate_location(err: DgwrError, location: int) -> DgwrError:
    """Rebuild ``err`` with the failing location index in the message."""
    new = type(err)(f"location {location}: {err}")
    new.location = location
    return new
