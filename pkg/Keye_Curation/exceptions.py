"""
Exception hierarchy shared by every curation app.

Each error can carry the file, line and record id it was raised for, so the
command layer can report data errors with full context.
"""


class CurationError(Exception):
    """Base class for toolkit errors."""

    def __init__(self, message, *, path=None, line=None, record_id=None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line
        self.record_id = record_id

    def with_context(self, *, path=None, line=None, record_id=None):
        """Fill in missing context and return self for re-raising."""
        if self.path is None:
            self.path = path
        if self.line is None:
            self.line = line
        if self.record_id is None:
            self.record_id = record_id
        return self

    def __str__(self):
        location = []
        if self.path is not None:
            location.append(str(self.path))
        if self.line is not None:
            location.append(str(self.line))
        prefix = ':'.join(location)
        if self.record_id is not None:
            prefix = f"{prefix} [{self.record_id}]" if prefix else f"[{self.record_id}]"
        return f"{prefix}: {self.message}" if prefix else self.message


class InvalidInputError(CurationError, ValueError):
    """Input violates a documented precondition."""


class ConfigurationError(CurationError):
    """Inconsistent parameters or mismatched index/config."""


class DataIntegrityError(CurationError):
    """Records reference data that is missing or inconsistent."""


class ImageDecodeError(DataIntegrityError):
    """An image file could not be decoded."""


class FormatError(CurationError):
    """A binary container is malformed or truncated."""


class CorruptionError(FormatError):
    """Integrity code of a binary container does not match its payload."""


class GroundingSyntaxError(InvalidInputError):
    """Grounding label failed to parse; `offset` is a byte offset into the UTF-8 input."""

    def __init__(self, code, offset, message, **context):
        super().__init__(f"{code} at byte {offset}: {message}", **context)
        self.code = code
        self.offset = offset
        self.detail = message
