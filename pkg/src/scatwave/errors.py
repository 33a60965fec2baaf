"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for usage/configuration problems, 3 for numerical failures.
"""


class ScatwaveError(Exception):
    exit_code = 3

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class ConfigError(ScatwaveError):
    exit_code = 2


class InvalidDimensionError(ConfigError):
    pass


class ClassViolationError(ConfigError):
    pass


class OutOfRegionError(ConfigError):
    pass


class ReductionUnavailableError(ConfigError):
    pass


class PreconditionError(ConfigError):
    pass


class InvalidOrderError(ConfigError):
    pass


class DegenerateMetricError(ScatwaveError):
    pass


class ChartError(ScatwaveError):
    pass


class IntegratorFailure(ScatwaveError):
    pass


class InstabilityError(ScatwaveError):
    pass


class ExtractionFailure(ScatwaveError):
    pass


class ConjugationError(ScatwaveError):
    pass


class NumericError(ScatwaveError):
    pass


class WeightViolation(ScatwaveError):
    pass


class FitFailure(ScatwaveError):
    pass
