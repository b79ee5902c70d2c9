"""Exception hierarchy shared by every stage of the pipeline."""


class GestureError(Exception):
    """Base class for all pedgesture errors."""


class DataValidationError(GestureError, ValueError):
    """Input data violates a documented contract."""


class DegenerateTorso(DataValidationError):
    def __init__(self, size, frame_index=None):
        self.size = size
        self.frame_index = frame_index
        where = "" if frame_index is None else f" at frame {frame_index}"
        super().__init__(f"degenerate torso{where}: size {size:.3g} px below 1e-3 px")


class EmptySequence(DataValidationError):
    pass


class TooFewFrames(DataValidationError):
    pass


class ClassTooSmall(DataValidationError):
    pass


class EmptyTrainingSet(DataValidationError):
    pass


class EmptyTestSet(DataValidationError):
    pass


class DimensionMismatch(DataValidationError):
    pass


class TooFewSamples(DataValidationError):
    pass


class NonFiniteInput(DataValidationError):
    pass


class SingleCluster(DataValidationError):
    pass


class MalformedFile(DataValidationError):
    pass


class SchemaViolation(DataValidationError):
    pass


class VersionUnsupported(DataValidationError):
    pass


class KeypointNeverValid(DataValidationError):
    def __init__(self, keypoint):
        self.keypoint = keypoint
        super().__init__(f"keypoint {keypoint.name} below confidence threshold in every frame")


class TorsoUnrecoverable(KeypointNeverValid):
    pass


class MissingRange(DataValidationError):
    pass


class RangeOutOfBounds(DataValidationError):
    pass


class ManifestError(DataValidationError):
    """One or more manifest entries failed to load."""

    def __init__(self, failures):
        self.failures = list(failures)
        lines = [f"{path}: {exc}" for path, exc in self.failures]
        super().__init__("manifest entries failed:\n  " + "\n  ".join(lines))
