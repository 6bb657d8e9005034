"""Exception hierarchy shared by every projdyn module."""


class ProjdynError(Exception):
    """Base class for all errors raised by projdyn."""


class InvalidArgumentError(ProjdynError, ValueError):
    pass


class DomainError(ProjdynError, ValueError):
    """A point lies outside the domain of a screen function or field."""


class InconsistentStateError(ProjdynError, ValueError):
    """A state violates the screen constraint or the decomposability of pi."""


class SingularityError(ProjdynError, ArithmeticError):
    """Evaluation too close to the singular line [c] of a central field."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StiffnessError(ProjdynError, RuntimeError):
    """Adaptive step size underflowed away from any singularity."""


class EvaluationError(ProjdynError, RuntimeError):
    """A user callback failed inside a finite-difference stencil."""


class IncompleteError(ProjdynError, RuntimeError):
    """A return map ran out of trajectory before reaching the k-th crossing.

    ``partial`` holds whatever was computed (trajectory, crossings so far).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class VerticalScreenError(ProjdynError, ValueError):
    """Target screen contains the center direction, no closed form available."""


class ConfigError(ProjdynError, ValueError):
    """Scenario configuration could not be parsed or failed validation.

    ``errors`` is a list of ``(path, message)`` pairs, one per violation.
    """

    def __init__(self, message, errors=()):
        self.errors = list(errors)
        if self.errors:
            detail = "; ".join(f"{p}: {m}" for p, m in self.errors)
            message = f"{message}: {detail}"
        super().__init__(message)


class ConfigParseError(ConfigError):
    """The configuration document is not well-formed JSON."""


class ConfigValidationError(ConfigError):
    """The configuration violates the schema or a semantic constraint."""
