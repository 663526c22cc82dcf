class GramstabError(Exception):
    """Base class for every failure the stabilizer pipeline reports."""

    exit_code = 1


class ConfigError(GramstabError, ValueError):
    """Invalid run configuration or stabilizer parameters."""

    exit_code = 1


class DimensionError(GramstabError, ValueError):
    """Matrix or vector shapes do not fit together."""


class DomainError(GramstabError, ValueError):
    """Argument outside the domain of an operation."""


class KinkError(DomainError):
    """Weight derivative requested at the junction s = T."""


class DegenerateFitError(DomainError):
    """Decay-rate fit has too few usable samples."""


class NotObservableError(GramstabError):
    """The pair (A, B) fails the observability inequality numerically."""

    exit_code = 2


class IllConditionedError(GramstabError, ArithmeticError):
    """An SPD matrix is too badly conditioned to invert reliably."""

    exit_code = 3


class DecayViolationError(GramstabError):
    """A trajectory broke the prescribed exponential decay bound."""

    exit_code = 4


class VerificationFailedError(GramstabError):
    """At least one verified identity exceeded its tolerance."""

    exit_code = 5

    def __init__(self, message, failed=None):
        super().__init__(message)
        self.failed = list(failed or [])


class DivergenceError(GramstabError, ArithmeticError):
    """Time integration produced non-finite values."""


class GenerationError(GramstabError):
    """Random system generation kept failing its acceptance gate."""
