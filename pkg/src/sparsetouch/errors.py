"""Exception hierarchy shared by all toolkit modules.

Every error carries enough context to be reported as a single diagnostic
line by the CLI.  Exit codes: validation/domain problems map to 1,
solver convergence and matrix conditioning problems map to 2.
"""


class SparseTouchError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(SparseTouchError):
    """Invalid configuration, arguments, or data shapes."""

    exit_code = 1


class DomainError(ValidationError):
    """A geometric query or load lies outside the admissible domain."""


class ConvergenceError(SparseTouchError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    exit_code = 2

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConditioningError(SparseTouchError):
    """A matrix factorization failed or an operator is numerically singular."""

    exit_code = 2

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
