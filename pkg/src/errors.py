"""
Exception hierarchy for the whole package.

Every error raised on purpose by embodiswap derives from EmbodiSwapError,
so callers (the pipeline, the CLI) can tell expected data problems apart
from programming bugs. The intermediate groups let the pipeline map a
whole family of failures to a single exclusion reason.
"""


class EmbodiSwapError(Exception):
    """Base class for all expected embodiswap failures."""


# --- geometry -------------------------------------------------------------

class GeometryError(EmbodiSwapError):
    pass


class NonPositiveDepth(GeometryError):
    """A point handed to the pinhole model lies on or behind the camera plane."""


# --- hands / retargeting --------------------------------------------------

class HandError(EmbodiSwapError):
    pass


class DegenerateHand(HandError):
    """Palm landmarks are collinear or the thumb axis is parallel to the palm normal."""


class ImplausibleHand(DegenerateHand):
    """Keypoint span is outside the plausible human hand scale."""


class UnknownHand(HandError):
    """Hand side is neither left nor right."""


# --- URDF / kinematics ----------------------------------------------------

class UrdfError(EmbodiSwapError):
    pass


class MalformedXml(UrdfError):
    pass


class UnsupportedJointType(UrdfError):
    pass


class CyclicKinematics(UrdfError):
    pass


class MissingLink(UrdfError):
    pass


class ConfigLengthMismatch(EmbodiSwapError):
    """Joint vector length does not match the model's movable joint count."""


# --- meshes ---------------------------------------------------------------

class MeshError(EmbodiSwapError):
    pass


class UnsupportedFormat(MeshError):
    pass


class CorruptFile(MeshError):
    pass


class NonPositiveDimension(MeshError):
    pass


# --- compositing ----------------------------------------------------------

class DimensionMismatch(EmbodiSwapError):
    pass


# --- labels ---------------------------------------------------------------

class LabelError(EmbodiSwapError):
    pass


class LookaheadOutOfRange(LabelError):
    pass


class UnknownActionClass(LabelError):
    pass


# --- annotations ----------------------------------------------------------

class AnnotationError(EmbodiSwapError):
    pass


class OverlappingSubActions(AnnotationError):
    pass


class UnorderedSpans(AnnotationError):
    pass


class NoUsedSubActions(AnnotationError):
    pass


# --- pipeline -------------------------------------------------------------

class PipelineError(EmbodiSwapError):
    pass


class BundleInvalid(PipelineError):
    """Raised with the validation report attached when a clip cannot be processed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UrdfLoadFailure(PipelineError):
    pass


class ConfigInvalid(PipelineError):
    pass
