"""Exception types shared across the package.

Everything a user can trigger with bad input derives from ``InputError`` so the
CLI can map it to exit code 2.
"""


class InputError(ValueError):
    """Invalid user-supplied input (exit code 2 at the CLI)."""


class SchemaError(InputError):
    """A class label is unknown or not part of the active dataset schema."""


class InvalidCombinationError(SchemaError):
    """A state/pictogram pair exists in the taxonomy but not in this schema."""


class ParseError(InputError):
    """A malformed line in a JSON Lines file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(InputError):
    """A well-formed value that violates a domain constraint."""


class ModelFormatError(InputError):
    """A model file that cannot be loaded (bad version, truncated, ...)."""


class EvaluationError(InputError):
    """Ground-truth and prediction inputs cannot be evaluated together."""
