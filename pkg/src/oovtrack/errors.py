"""Exception types raised across the toolkit."""


class OovtrackError(Exception):
    """Base class for all toolkit errors."""


class DepthError(OovtrackError):
    """A point lies behind (or on) the camera plane during projection."""


class SingularTransform(OovtrackError):
    """The linear part of a 2D affine transform is not invertible."""


class ChannelOutOfRange(OovtrackError, IndexError):
    """Heatmap channel index outside the stack."""


class OOVHFormatError(OovtrackError):
    """Malformed OOVH heatmap file."""


class BadMagic(OOVHFormatError):
    """File does not start with the OOVH magic bytes."""


class VersionMismatch(OOVHFormatError):
    """OOVH file version is not supported."""


class TruncatedFile(OOVHFormatError):
    """OOVH file ends before the declared payload."""


class DegenerateConfiguration(OovtrackError):
    """2D-3D correspondences too degenerate to solve for pose."""


class NoSolution(OovtrackError):
    """No pose satisfying the cheirality constraints was found."""


class Diverged(OovtrackError):
    """Pose refinement could not decrease the reprojection cost."""


class DegenerateRotation(OovtrackError):
    """Weighted quaternion sum too close to zero to average."""


class DegenerateHull(OovtrackError):
    """Fewer than 3 non-collinear points; convex hull has no area."""


class NonFiniteCost(OovtrackError):
    """Pose cost evaluated to NaN or infinity (invariant violation)."""


class ConfigError(OovtrackError):
    """Invalid or inconsistent configuration file."""
