"""Solver failure modes, raised (never returned) by the calibration suite."""


class CalibrationError(ValueError):
    """Base class for calibration solver failures."""


class DegenerateInput(CalibrationError):
    """Too few samples, or a rank-deficient geometry (coplanar, collinear)."""


class PoorConditioning(CalibrationError):
    """The data is formally solvable but too ill-conditioned to trust."""


class DegenerateMotion(CalibrationError):
    """Hand-eye motions with (near-)parallel rotation axes: X is not unique."""


class LengthMismatch(CalibrationError):
    """Corresponded point lists differ in length."""


class ScaleUnobservable(CalibrationError):
    """Image points span too few pixels to register against."""
