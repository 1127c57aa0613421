"""Exception types shared across the package."""


class SynlikeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SynlikeError):
    """A configuration value is missing, malformed, or inconsistent."""


class ModelValidationError(SynlikeError):
    """A model failed its construction-time smoke test."""


class SimulationError(SynlikeError):
    """A simulator call raised or returned an unusable dataset.

    Parameters
    ----------
    index : int
        Zero-based replicate index of the failed simulation within its batch.
    message : str
        Human-readable description of the failure.
    """

    def __init__(self, index, message):
        super().__init__(f"simulation {index}: {message}")
        self.index = index


class InitializationError(SynlikeError):
    """The chain start point produced no finite log-likelihood estimate."""


class InsufficientSimulationsError(SynlikeError, ValueError):
    """Too few simulated summaries for the requested estimator."""


class DegenerateMarginError(SynlikeError, ValueError):
    """A summary coordinate has zero sample spread."""


class ShrinkageNumericalError(SynlikeError, ValueError):
    """A shrinkage routine broke down numerically on this input."""


class DegenerateChainWarning(UserWarning):
    """A chain (or chain segment) is constant, so autocorrelation is undefined."""


class PenaltyGridWarning(UserWarning):
    """A penalty-selection cell was degraded or dropped."""
