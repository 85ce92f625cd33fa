"""Exception types shared across the package.

Categorization matters for the CLI exit codes: configuration/input/shape
problems exit 1, numerical failures exit 2.
"""


class TTSOError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TTSOError):
    """Invalid architecture, solver, or run configuration."""


class DimensionError(TTSOError):
    """Operand shapes do not match the declared dimensions."""


class InputError(TTSOError):
    """Caller-supplied data violates a precondition (empty batch, NaN, ...)."""


class ContractError(TTSOError):
    """An operation was invoked outside its stated contract."""


class NumericalError(TTSOError):
    """Non-finite value encountered during iteration.

    ``iteration`` records where the failure happened when known.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ParseError(TTSOError):
    """Malformed data file; message carries file and line context."""


class ManifestError(TTSOError):
    """CSV ingestion manifest is missing or inconsistent."""
