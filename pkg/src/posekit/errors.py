"""Exception hierarchy shared by all posekit modules."""


class PosekitError(Exception):
    """Base class for every error raised by posekit."""


class SkeletonError(PosekitError):
    """A skeleton definition violates its structural invariants."""


class CyclicSkeleton(SkeletonError):
    pass


class DisconnectedSkeleton(SkeletonError):
    pass


class BadIndex(SkeletonError):
    pass


class NonPositiveSigma(SkeletonError):
    pass


class NoVisibleKeypoints(PosekitError):
    """A pose instance must have at least one visible keypoint."""


class EmptyCanvas(PosekitError):
    """Heatmap width or height is zero."""


class MismatchedChannelCounts(PosekitError):
    pass


class ShapeMismatch(PosekitError):
    pass


class InconsistentReference(PosekitError):
    """A connection cites a peak that is not in the peak list."""


class NoVisibleTruth(PosekitError):
    pass


class UnknownImageId(PosekitError):
    pass


class ParseError(PosekitError):
    """Input file is not syntactically valid."""


class SchemaError(PosekitError):
    """Input file parses but violates the documented schema."""


class BoundsError(PosekitError):
    """A keypoint lies outside its image."""


class UnknownImageRef(PosekitError):
    """An annotation or result refers to an image id that does not exist."""


class PlacementFailure(PosekitError):
    """Scene generator could not place instances at the requested density."""


class PkhmFormatError(PosekitError):
    """A PKHM heatmap file is missing, truncated or corrupt."""
