"""Exception hierarchy shared across the package."""


class DialogforgeError(Exception):
    """Base class for all package errors."""


class RecordError(DialogforgeError):
    """A dataset line could not be parsed or violates an invariant."""

    def __init__(self, message, path=None, line_number=None):
        if path is not None and line_number is not None:
            message = f"{path}:{line_number}: {message}"
        super().__init__(message)
        self.path = path
        self.line_number = line_number


class InputError(DialogforgeError):
    """Caller supplied invalid arguments (empty text, dimension mismatch, ...)."""


class TransportError(DialogforgeError):
    """A remote service was unreachable, timed out, or returned garbage."""


class ScoringError(DialogforgeError):
    """A scoring provider returned a well-formed but invalid response."""


class UnsupportedOperationError(DialogforgeError):
    """The configured provider cannot perform the requested operation."""


class DialogParseError(DialogforgeError):
    """A model completion could not be parsed into a valid dialog."""

    def __init__(self, message, completion=""):
        super().__init__(message)
        self.completion = completion


class ReplayMissError(DialogforgeError):
    """A replay backend has no recorded completion for the request."""

    def __init__(self, key):
        super().__init__(f"no recorded completion for request key {key}")
        self.key = key


class CheckpointMismatchError(DialogforgeError):
    """A checkpoint was produced under a different configuration."""


class FixtureMissError(DialogforgeError):
    """A search fixture file has no page recorded for the query."""

    def __init__(self, query):
        super().__init__(f"no recorded search page for query: {query!r}")
        self.query = query
