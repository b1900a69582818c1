"""Exception types shared across the toolkit."""

from __future__ import annotations


class GestalkError(Exception):
    """Base class for all errors raised by this package."""


class ChatSyntaxError(GestalkError):
    """A transcript tier line could not be parsed.

    Carries the 1-based line and column of the offending text.
    """

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class EncodingError(GestalkError):
    """Input bytes were not valid UTF-8."""


class UnknownFormatError(GestalkError, ValueError):
    """An output format name was not recognized."""


class InvalidThresholdError(GestalkError, ValueError):
    """A confidence threshold fell outside [0, 1]."""


class EmptyReferenceError(GestalkError):
    """WER was requested against an empty reference in strict mode."""


class DuplicateIdError(GestalkError, ValueError):
    """Two corpus items shared the same id."""


class TransportError(GestalkError):
    """A remote call failed at the network level (connect/timeout)."""


class BackendError(GestalkError):
    """A backend answered with an error.

    For HTTP backends this is a non-2xx response; ``status`` and ``body``
    are kept for diagnosis. Mock backends use it for unknown fixtures.
    """

    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class DecodeError(GestalkError):
    """A backend response or data file did not match its documented shape."""


class UnparseableLabelError(GestalkError):
    """A model reply could not be mapped onto any candidate gesture label."""


class EmptyResponseError(GestalkError):
    """A rewrite backend returned an empty message."""


class TemplateError(GestalkError):
    """A prompt template referenced an unknown placeholder."""


class ManifestError(GestalkError):
    """A pipeline manifest failed schema validation; aborts the whole run."""


class ConfigError(GestalkError):
    """A configuration file, env var, or flag value failed validation."""
