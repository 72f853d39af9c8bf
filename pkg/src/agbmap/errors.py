"""Exception types raised by the agbmap pipeline.

All errors derive from AgbMapError so callers (notably the CLI) can
distinguish data problems from programming errors.
"""


class AgbMapError(Exception):
    """Base class for all agbmap data and format errors."""


class InvalidTreeError(AgbMapError):
    """A tree attribute violates its physical constraints (e.g. DBH <= 0)."""

    def __init__(self, field, value, tree_id=None):
        self.field = field
        self.value = value
        self.tree_id = tree_id
        where = f" (tree id={tree_id})" if tree_id is not None else ""
        super().__init__(f"invalid tree attribute {field}={value!r}{where}")


class EmptySceneError(AgbMapError):
    """A scene contains no trees."""


class DegeneratePlotError(AgbMapError):
    """The tree bounding box is too small to define a meaningful plot area."""


class InconsistentSceneError(AgbMapError):
    """The instance map references a tree index absent from the scene metadata."""


class MetadataParseError(AgbMapError):
    """Scene metadata text does not conform to the documented schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownInstanceColorError(AgbMapError):
    """An instance-map pixel color is not present in the color-index table."""

    def __init__(self, rgb, x, y):
        self.rgb = tuple(rgb)
        self.x = x
        self.y = y
        super().__init__(
            f"unknown instance color rgb={self.rgb} at pixel (x={x}, y={y})"
        )


class FormatError(AgbMapError):
    """A binary raster file is malformed; `offset` is the failing byte position."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class ManifestError(AgbMapError):
    """A manifest CSV is missing, malformed, or lacks required columns."""


class MissingTotalError(AgbMapError):
    """A sample has no cached total AGB; run map generation (gen-maps) first."""


class UndefinedCorrelationError(AgbMapError):
    """Rank correlation is undefined (fewer than two points or zero rank variance)."""
