"""Exception hierarchy shared by all splatedit modules.

Every error carries a ``stage`` tag so the service layer and the web UI can
attribute failures to the pipeline phase that produced them.
"""

from __future__ import annotations


class SplatEditError(Exception):
    """Base class for all errors raised by this package."""

    stage = "internal"


# --- scene / sidecar I/O -------------------------------------------------

class FormatError(SplatEditError):
    """File does not conform to the documented wire format."""

    stage = "io"


class TruncationError(FormatError):
    """Binary payload ends before the declared record count."""

    def __init__(self, expected_bytes: int, actual_bytes: int, offset: int):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        self.offset = offset
        super().__init__(
            f"payload truncated at byte offset {offset}: "
            f"expected {expected_bytes} payload bytes, got {actual_bytes}"
        )


class IoError(SplatEditError):
    """Underlying OS-level read/write failure."""

    stage = "io"


class LabelMismatchError(FormatError):
    """Label sidecar record count differs from the scene splat count."""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"label record count {actual} does not match scene splat count {expected}")


class DanglingIdError(FormatError):
    """labels.bin references an instance id absent from labels.json."""


class EmptyInstanceError(SplatEditError):
    """Instance id has no assigned Gaussians."""


# --- prompt parsing ------------------------------------------------------

class ParseError(SplatEditError):
    stage = "parser"


class NoOperationError(ParseError):
    """Prompt does not begin with a supported operation keyword."""


class NoTargetError(ParseError):
    """No target object tokens remain after keyword extraction."""


class UnknownColorError(ParseError):
    """Color word is not present in the shipped color table."""

    def __init__(self, word: str):
        self.word = word
        super().__init__(f"unknown color {word!r}")


class MissingAssetError(ParseError):
    """add/replace prompt does not name the object to insert."""


# --- spatial index -------------------------------------------------------

class EmptyInputError(SplatEditError):
    """Index build requested over an empty point set."""


# --- grounding -----------------------------------------------------------

class GroundingError(SplatEditError):
    stage = "grounding"


class AmbiguousRelationError(GroundingError):
    """'middle' used with fewer than two reference instances."""


class NoMatchError(GroundingError):
    """Every candidate was eliminated; ``trace`` records which stage did it."""

    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)


# --- editing -------------------------------------------------------------

class EditError(SplatEditError):
    stage = "editor"


class InvalidScaleError(EditError):
    """Scale factor must be strictly positive."""


class EmptyAssetError(EditError):
    """Asset contains no Gaussians."""


class AssetNotFoundError(EditError):
    """Named asset is not registered in the assets directory."""


class DegenerateDirectionError(EditError):
    """Target and reference centroids coincide; move direction undefined."""


# --- session -------------------------------------------------------------

class SessionError(SplatEditError):
    stage = "session"


class NothingToUndoError(SessionError):
    """Undo requested on an empty journal."""
