"""Exception types shared across the package."""


class BlueSurfelsError(Exception):
    """Base class for all errors raised by this package."""


class SceneError(BlueSurfelsError):
    """Invalid scene input (empty scenes, malformed manifests, bad graphs)."""


class EmptySceneError(SceneError):
    """An operation that needs geometry was given none."""


class FormatError(BlueSurfelsError):
    """A file did not match its expected on-disk layout."""


class SurfelFormatError(FormatError):
    """Bad magic, version, or truncated header in a .bsrf file."""


class ObjParseError(FormatError):
    """Unparsable record in a Wavefront OBJ file."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ImageError(FormatError):
    """Invalid raster dimensions or an undecodable image file."""


class GenerationError(BlueSurfelsError):
    """Surfel generation failed for a node."""
