"""needleguide: tracked-needle guidance middleware and calibration toolkit.

A streaming server sits between a rigid-body tracking source and guidance
displays: it converts handedness, applies tip/axis/hand-eye/US-plane
calibrations, keeps lag-compensating pose history, computes trajectory
deviation guides, and broadcasts everything over a binary TCP protocol and
a WebSocket bridge. A deterministic simulator with ground truth stands in
for the physical tracker.
"""

from .geometry import (
    Handedness,
    Pose,
    Quat,
    Vec3,
    compose,
    convert_handedness,
    invert,
    slerp,
    transform_point,
)
from .guidance import (
    GuidanceState,
    GuidanceStatus,
    InvalidPlan,
    NeedleState,
    TrajectoryPlan,
    apply_needle_calibration,
    compute_guidance,
)
from .history import EmptyBuffer, PoseBuffer, QueryQuality, QueryResult

__version__ = "0.1.0"
