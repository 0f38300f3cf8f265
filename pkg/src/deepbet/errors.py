"""Exception types raised across the toolkit.

Everything derives from :class:`DeepbetError` so callers (and the CLI) can
separate data/usage problems from genuine bugs.
"""


class DeepbetError(Exception):
    """Base class for all errors raised by this package."""


# --- volume I/O ---------------------------------------------------------

class CorruptHeader(DeepbetError):
    """File is not a parseable single-file NIfTI-1 volume."""


class UnsupportedDtype(DeepbetError):
    """Voxel dtype outside the supported set (uint8, int16, float32)."""


class TruncatedData(DeepbetError):
    """Header promises more voxel data than the file contains."""


class RangeOverflow(DeepbetError):
    """Values do not fit the requested integer storage dtype."""


class IoFailure(DeepbetError):
    """Underlying filesystem read/write failed."""


class DegenerateAffine(DeepbetError):
    """Affine has no invertible axis-to-axis assignment."""


class BoxOutOfRange(DeepbetError):
    """Bounding box exceeds the volume it indexes into."""


# --- preprocessing ------------------------------------------------------

class ZeroVariance(DeepbetError):
    """Normalization is undefined for (nearly) constant volumes."""


class NonPositiveIntensities(DeepbetError):
    """Log-domain bias fit needs strictly positive foreground values."""


class SingularFit(DeepbetError):
    """Polynomial design matrix is rank deficient."""


# --- augmentation -------------------------------------------------------

class TooFewSlices(DeepbetError):
    """Slice merge needs at least 3 slices along the merge axis."""


# --- network / training -------------------------------------------------

class ShapeMismatch(DeepbetError):
    """Tensor shapes are inconsistent with the network contract."""


class NonFiniteLoss(DeepbetError):
    """Loss evaluated to NaN or infinity."""


class NonFiniteGradient(DeepbetError):
    """Gradient table contains NaN or infinity."""


# --- pipeline / phantoms ------------------------------------------------

class NoForeground(DeepbetError):
    """No voxel reaches the binarization threshold."""


class SpecInfeasible(DeepbetError):
    """Phantom geometry constraints cannot be satisfied."""


class ConfigError(DeepbetError):
    """Config file contains unknown keys or malformed values."""
