"""Exception types shared across the toolkit.

Domain errors (coverage, divergence, unknown triplets) are kept separate from
file-format errors so the CLI can map them to distinct exit codes.
"""

from __future__ import annotations


class VqtokError(Exception):
    """Base class for all toolkit errors."""


class FormatError(VqtokError):
    """A serialized file does not match the expected format or version."""

    def __init__(self, message: str, expected=None, found=None):
        if expected is not None or found is not None:
            message = f"{message} (expected {expected!r}, found {found!r})"
        super().__init__(message)
        self.expected = expected
        self.found = found


class CoverageError(VqtokError):
    """A word cannot be segmented with the given vocabulary."""

    def __init__(self, position: int, message: str | None = None):
        super().__init__(message or f"no vocabulary prefix matches the suffix starting at symbol {position}")
        self.position = position


class UnknownTripletError(VqtokError):
    """A triplet has no vocabulary entry during detokenization."""

    def __init__(self, triplet, position: int):
        super().__init__(f"unknown triplet {triplet} at position {position}")
        self.triplet = triplet
        self.position = position


class TrainingDivergedError(VqtokError):
    """Training produced a non-finite loss; carries diagnostic state."""

    def __init__(self, step: int, loss: float, diagnostics: dict | None = None):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss
        self.diagnostics = diagnostics or {}


class WordLengthError(VqtokError):
    """A word exceeds the configured maximum symbol length."""

    def __init__(self, length: int, limit: int):
        super().__init__(f"word of {length} symbols exceeds the maximum of {limit}")
        self.length = length
        self.limit = limit


class VocabularyError(VqtokError):
    """The vocabulary cannot be built or fails an integrity check."""
