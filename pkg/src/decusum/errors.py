"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model, policy, or experiment configuration is invalid."""


class DomainError(ValueError):
    """An argument is outside the domain of an operation."""


class InfiniteDivergenceError(ConfigurationError):
    """A Kullback-Leibler divergence is infinite for the supplied densities."""


class IncommensurableModelError(ConfigurationError):
    """Model quantities do not share a common lattice step."""


class CalibrationError(RuntimeError):
    """Monte Carlo threshold calibration failed to bracket the target."""
