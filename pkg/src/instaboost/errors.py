"""Exception types shared across the toolkit."""


class InstaBoostError(Exception):
    """Base class for all toolkit errors."""


class MalformedDocument(InstaBoostError):
    """Annotation document does not have the expected structure."""


class DanglingReference(InstaBoostError):
    """A record references an id that does not exist in the dataset."""


class IoFailure(InstaBoostError):
    """Reading or writing a file failed."""


class ValidationFailure(InstaBoostError):
    """A dataset failed invariant validation and was refused."""


class DegenerateGeometry(InstaBoostError):
    """Polygon has fewer than 3 vertices or encloses no pixels."""


class EmptyMask(InstaBoostError):
    """Operation requires a mask with at least one foreground pixel."""


class HoleCoversImage(InstaBoostError):
    """Inpainting hole leaves no known pixels to diffuse from."""


class FullyClipped(InstaBoostError):
    """Transformed patch has no visible pixels inside the canvas."""


class EmptyResult(InstaBoostError):
    """Warped alpha has nothing above the mask-regeneration threshold."""


class DegenerateDistribution(InstaBoostError):
    """Probability normalization has no mass left after exclusion."""
