"""Generalized-camera pose solvers via single-path homotopy continuation.

A rough pose from a pluggable initializer seeds a geometric reprojection
simulator that manufactures a start problem whose root is known exactly;
one homotopy path is then tracked from that start problem to the measured
one.  Includes the generalized absolute pose solver, the generalized
relative pose and scale solver, synthetic benchmark generation, and a
RANSAC harness.
"""

from . import cli, geometry, grps, initializers, ransac, synth, tracker, upnp
from .geometry import (
    Pose,
    Quaternion,
    Rotation6D,
    quat_to_rotmat,
    rotation_error_deg,
    rotmat_to_quat,
    scale_error_pct,
    sixd_to_rotmat,
    skew,
    translation_error_pct,
)
from .tracker import (
    Homotopy,
    TrackerConfig,
    TrackResult,
    TrackStatus,
    lm_refine,
    newton_correct,
    predict_step,
    track_path,
)

__all__ = [
    "cli",
    "geometry",
    "grps",
    "initializers",
    "ransac",
    "synth",
    "tracker",
    "upnp",
    "Pose",
    "Quaternion",
    "Rotation6D",
    "quat_to_rotmat",
    "rotmat_to_quat",
    "sixd_to_rotmat",
    "skew",
    "rotation_error_deg",
    "translation_error_pct",
    "scale_error_pct",
    "Homotopy",
    "TrackerConfig",
    "TrackResult",
    "TrackStatus",
    "track_path",
    "newton_correct",
    "predict_step",
    "lm_refine",
]

__version__ = "0.1.0"
