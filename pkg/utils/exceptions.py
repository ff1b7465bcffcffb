"""Exception hierarchy shared by every engine and command."""


class FlatsError(Exception):
    """Base error carrying a message template and its parameters."""

    def __init__(self, message, params=None):
        self.message = message
        self.params = params or {}
        super().__init__(message % self.params if self.params else message)


class InvalidArgumentError(FlatsError, ValueError):
    """An argument is outside the domain an operation accepts."""


class InvalidReferenceError(FlatsError, LookupError):
    """An id or index does not resolve."""


class ContractViolationError(FlatsError, RuntimeError):
    """Inputs that must match (e.g. a forward and backward render) do not."""


class TriangulationError(FlatsError):
    """A polygon could not be triangulated."""


class UndefinedMetricError(FlatsError, ValueError):
    """A metric has no defined value for the given inputs."""


class ParseError(FlatsError):
    """A file could not be parsed."""

    def __init__(self, message, path=None, offset=None, params=None):
        self.path = str(path) if path is not None else None
        self.offset = offset
        super().__init__(message, params)

    def __str__(self):
        text = super().__str__()
        if self.offset is not None:
            text = f'{text} (byte offset {self.offset})'
        if self.path:
            text = f'{self.path}: {text}'
        return text


class UsageError(FlatsError):
    """Invalid command-line usage, missing inputs or invalid configuration."""
