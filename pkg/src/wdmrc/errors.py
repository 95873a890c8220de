"""Exception types raised across the package."""


class WdmrcError(Exception):
    """Base class for all package errors."""


class ConfigError(WdmrcError, ValueError):
    """Invalid configuration value or file."""


class IntegrationDiverged(WdmrcError, ArithmeticError):
    """The ODE state became non-finite."""

    def __init__(self, time_s: float, component: str):
        self.time_s = time_s
        self.component = component
        super().__init__(f"integration diverged at t={time_s:.6e} s in {component}")

    def __reduce__(self):
        return type(self), (self.time_s, self.component)


class RegularizationRequired(WdmrcError, ArithmeticError):
    """The unregularized normal equations are singular."""


class UndefinedMetric(WdmrcError, ValueError):
    """A metric is undefined for the given data (e.g. constant target)."""


class GenerationFailed(WdmrcError, RuntimeError):
    """A task generator produced a divergent sequence."""


class NoOptimum(WdmrcError, ValueError):
    """Every grid point of a sweep diverged."""
