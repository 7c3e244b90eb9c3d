"""Exception hierarchy shared across the package.

Every error carries an exit code so the CLI can map failures onto distinct
process statuses without inspecting messages.
"""


class SgError(Exception):
    exit_code = 1


class ConfigError(SgError, ValueError):
    """Invalid user configuration or preconditions on parameters."""

    exit_code = 2


class DataError(SgError, ValueError):
    """Malformed or inconsistent data files (bad header, hash mismatch, ...)."""

    exit_code = 3


class NumericAbort(SgError, ArithmeticError):
    """A numerical procedure produced NaN/inf or failed to converge."""

    exit_code = 4


class SolverError(NumericAbort):
    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")
        self.residual = residual


class ShapeError(SgError, ValueError):
    exit_code = 3
