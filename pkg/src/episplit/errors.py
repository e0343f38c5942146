"""Exception types raised across the episode pipeline.

Everything inherits from EpisplitError so callers can catch the whole
family at once. The CLI maps these to exit code 1 (data/contract
problems) while reserving exit code 2 for usage errors.
"""


class EpisplitError(Exception):
    """Base class for all errors raised by this package."""


class EmptyMaskError(EpisplitError):
    """A mask with no foreground pixels was passed where foreground is required."""


class DimensionMismatchError(EpisplitError):
    """Two arrays that must share a shape do not."""


class InsufficientForegroundError(EpisplitError):
    """An image's saliency foreground is too small to build an episode from."""


class ParseError(EpisplitError):
    """A manifest or metadata file is malformed."""


class MissingFileError(EpisplitError):
    """A file referenced by a manifest does not exist."""


class UnsupportedFormatError(EpisplitError):
    """An image file is unreadable or has an unexpected pixel format."""


class ChecksumMismatchError(EpisplitError):
    """Stored CRC32 does not match the bytes on disk."""


class ValidationError(EpisplitError):
    """Episode data violates the pack contract (e.g. stray label values)."""


class UnknownDatasetError(EpisplitError):
    """Dataset name has no registered fold layout."""


class InsufficientImagesError(EpisplitError):
    """A test class does not have enough distinct images to sample tasks from."""


class MissingPredictionError(EpisplitError):
    """Evaluation requested a prediction that the prediction set lacks."""


class MissingSaliencyError(EpisplitError):
    """The saliency baseline needs a saliency mask the manifest lacks."""
