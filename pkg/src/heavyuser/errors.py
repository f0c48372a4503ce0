"""Exception hierarchy.

Validation problems (bad parameters, bad input files) derive from
:class:`ValidationError`; problems that only show up while computing on
otherwise well-formed input derive from :class:`ComputationError`.  The CLI
maps the two families to exit codes 1 and 2.
"""


class HeavyUserError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(HeavyUserError, ValueError):
    pass


class ComputationError(HeavyUserError, ArithmeticError):
    pass


class ParameterError(ValidationError):
    """An argument is outside its admissible range."""


class DurationError(ValidationError):
    """Experiment duration too short for the requested operation."""


class ModelError(ValidationError):
    """A behavior model is malformed (e.g. density not normalized)."""


class UnsupportedModelError(ValidationError):
    """The model lacks a property the operation needs (e.g. a finite f(0))."""


class PanelFormatError(ValidationError):
    """A panel CSV could not be parsed.

    ``line`` is the 1-based line number in the file, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateArmError(ComputationError):
    """An arm has too few appearing users in the analysis window."""


class DegenerateModelError(ComputationError):
    """The model implies no user ever appears."""


class ReplicationError(ComputationError):
    """A Monte Carlo replication failed; ``index`` names which one."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"replication {index} failed: {cause}")
