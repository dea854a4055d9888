"""Exception hierarchy for the pcx library.

All library errors derive from :class:`PcxError` so callers (and the CLI,
which maps them to exit code 3) can catch one base class.
"""


class PcxError(Exception):
    """Base class for all pcx errors."""


# geometry
class CountExceedsPopulation(PcxError):
    """Sampling was asked for more points than exist."""


# segmentation
class MissingFeatures(PcxError):
    """A feature-weighted affinity was requested but no features were given."""


# exchange
class PlanSceneMismatch(PcxError):
    """An exchange plan references cluster ids absent from the segmentations."""


class InsufficientPartners(PcxError):
    """Dataset-level corruption needs at least two scenes."""


# objective
class EmptyCluster(PcxError):
    """A cluster id has no member points."""


class ZeroVector(PcxError):
    """A feature vector has (near-)zero norm and cannot be normalized."""


class ShapeMismatch(PcxError):
    """Array shapes are inconsistent."""


# analysis
class NoLabels(PcxError):
    """An operation requiring semantic labels got a scene without them."""


class LengthMismatch(PcxError):
    """Prediction and ground-truth arrays differ in length."""


class NoValidPoints(PcxError):
    """Every point carries the ignore label."""


class DivisionByZero(PcxError):
    """A ratio was requested against a zero denominator."""


class TooFewClusters(PcxError):
    """Pairwise statistics need at least two clusters."""


# file formats
class MalformedHeader(PcxError):
    """A PLY or binary-array header could not be parsed."""


class UnsupportedEncoding(PcxError):
    """The file uses an encoding this reader does not support (e.g. big-endian)."""


class MissingRequiredProperty(PcxError):
    """A PLY file lacks one of the required vertex properties."""


class IoFailure(PcxError):
    """A file could not be written."""


class ManifestError(PcxError):
    """A dataset manifest is invalid (duplicate ids, dangling paths, bad schema)."""
