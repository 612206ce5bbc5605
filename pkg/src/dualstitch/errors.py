"""Exception hierarchy. CLI exit codes hang off ``exit_code``."""


class StitchError(Exception):
    exit_code = 1


class CalibrationError(StitchError):
    """Calibration file or lens parameters are unusable."""

    exit_code = 2


class CoverageError(StitchError):
    """Neither lens covers some output pixels."""

    exit_code = 3

    def __init__(self, bbox):
        x0, y0, x1, y1 = bbox
        self.bbox = (int(x0), int(y0), int(x1), int(y1))
        super().__init__(f"coverage hole in bounding box x=[{x0},{x1}] y=[{y0},{y1}]")


class SequenceGapError(StitchError):
    exit_code = 4

    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"frame index {index} is missing from the sequence")


class DeformationDegenerateError(StitchError):
    pass


class EstimationDegenerateError(StitchError):
    pass


class MatchUndefinedError(StitchError):
    pass


class ReportUndefinedError(StitchError):
    pass
