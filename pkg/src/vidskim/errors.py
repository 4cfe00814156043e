"""Exception types shared across the pipeline."""


class VidskimError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(VidskimError):
    """A file does not conform to one of the on-disk formats."""


class MagicError(FormatError):
    """File header carries an unknown magic string."""


class VersionError(FormatError):
    """File header carries an unsupported format version."""


class TruncatedError(FormatError):
    """File ended before the declared payload was complete."""


class SchemaError(FormatError):
    """A JSON document violates its schema; message names the offending field."""


class InvariantError(VidskimError):
    """A constructed value would violate a declared invariant."""


class BackendError(VidskimError):
    """A caption or chat backend failed to produce a usable reply."""


class TransientBackendError(BackendError):
    """Retryable backend failure (timeouts, 429/5xx, connection resets)."""


class FixtureMissError(BackendError):
    """Strict fixture store has no recorded reply for a request digest."""

    def __init__(self, digest: str):
        super().__init__(f"no recorded reply for request digest {digest}")
        self.digest = digest


class ScoreParseError(VidskimError):
    """An LLM reply did not contain a parsable in-range score."""

    def __init__(self, message: str, reply: str, missing: list[int] | None = None):
        super().__init__(message)
        self.reply = reply
        self.missing = missing or []


class StageError(VidskimError):
    """A pipeline stage cannot run, e.g. because an upstream artifact is missing."""
