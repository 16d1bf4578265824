"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit codes (2 usage, 3 I/O, 4 contract
violation) and the HTTP service maps them onto status codes, so new
error types should subclass one of the branches below rather than
raising bare ValueError.
"""


class SrkitError(Exception):
    """Base class for all toolkit errors."""


class ContractError(SrkitError):
    """A precondition or invariant was violated by the caller."""


class DecodeError(SrkitError):
    """A file could not be parsed. ``offset`` is the byte position of the
    first defect when it could be located, else None."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class UnsupportedFormatError(SrkitError):
    """The file parsed but uses a feature outside the supported subset."""


class TrainingDiverged(SrkitError):
    """Loss or gradients became non-finite; carries the layer or epoch."""
