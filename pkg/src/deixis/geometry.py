"""Rigid-frame algebra and pinhole projection for the gaze pipeline.

Conventions:
- A ``Pose`` maps points from its ``from_frame`` into its ``to_frame``:
  ``p_to = R @ p_from + t``.
- Rotations are 3x3 orthonormal matrices (row-major in JSON), translations
  are meters, image coordinates are pixels, timestamps are seconds.
- Frames follow the rig layout: robot base, robot camera, glasses camera,
  glasses pupil, and the SLAM world frame head poses are expressed in.
  A frame without a timestamp is time-invariant and chains with any
  timestamped instance of the same frame.

All operations are pure functions on immutable values and are safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import BehindCamera, FrameMismatch

# Constructed poses must be orthonormal to this tolerance; serialized input
# up to INGEST_TOL is repaired by polar projection, anything worse rejected.
ORTHONORMAL_TOL = 1e-9
INGEST_TOL = 1e-6
MIN_DEPTH = 1e-9


class Frame(str, Enum):
    ROBOT_BASE = "r"
    ROBOT_CAMERA = "c"
    GLASSES_CAMERA = "gc"
    GLASSES_PUPIL = "gp"
    SLAM_WORLD = "s"


@dataclass(frozen=True)
class FrameId:
    """A named frame, optionally pinned to a point in time."""

    frame: Frame
    t: Optional[float] = None

    def __post_init__(self):
        if self.t is not None:
            if not math.isfinite(self.t) or self.t < 0.0:
                raise ValueError(f"frame timestamp must be finite and >= 0, got {self.t}")

    def matches(self, other: "FrameId") -> bool:
        """True when both ids can denote the same frame.

        An untimestamped id is time-invariant and matches any timestamp of
        the same frame name.
        """
        if self.frame is not other.frame:
            return False
        if self.t is None or other.t is None:
            return True
        return self.t == other.t

    def __str__(self) -> str:
        return self.frame.value if self.t is None else f"{self.frame.value}@{self.t:g}"


def _orthonormality_error(rotation: np.ndarray) -> float:
    return float(np.max(np.abs(rotation.T @ rotation - np.eye(3))))


@dataclass(frozen=True)
class Pose:
    """Rigid transform taking points in ``from_frame`` to ``to_frame``."""

    from_frame: FrameId
    to_frame: FrameId
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {translation.shape}")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            raise ValueError("pose entries must be finite")
        err = _orthonormality_error(rotation)
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"rotation not orthonormal (error {err:.3e})")
        det = float(np.linalg.det(rotation))
        if abs(det - 1.0) > 1e-9:
            raise ValueError(f"rotation determinant must be +1, got {det}")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)


def identity_pose(from_frame: FrameId, to_frame: FrameId) -> Pose:
    return Pose(from_frame, to_frame, np.eye(3), np.zeros(3))


def compose(a: Pose, b: Pose) -> Pose:
    """Chain two poses: the result maps ``b.from_frame`` to ``a.to_frame``."""
    if not a.from_frame.matches(b.to_frame):
        raise FrameMismatch(
            f"cannot chain: {a.to_frame}<-{a.from_frame} with {b.to_frame}<-{b.from_frame}"
        )
    rotation = a.rotation @ b.rotation
    translation = a.rotation @ b.translation + a.translation
    return Pose(b.from_frame, a.to_frame, rotation, translation)


def invert(pose: Pose) -> Pose:
    rotation = pose.rotation.T
    return Pose(pose.to_frame, pose.from_frame, rotation, -(rotation @ pose.translation))


def transform_point(pose: Pose, point: np.ndarray) -> np.ndarray:
    """Apply ``R @ p + t`` to a 3D point."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {point.shape}")
    if not np.all(np.isfinite(point)):
        raise ValueError("point must be finite")
    return pose.rotation @ point + pose.translation


def to_homogeneous(pose: Pose) -> np.ndarray:
    """4x4 homogeneous form, mainly useful as an independent test oracle."""
    matrix = np.eye(4)
    matrix[:3, :3] = pose.rotation
    matrix[:3, 3] = pose.translation
    return matrix


def pose_from_homogeneous(matrix: np.ndarray, from_frame: FrameId, to_frame: FrameId) -> Pose:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (4, 4):
        raise ValueError(f"expected 4x4 matrix, got {matrix.shape}")
    if np.max(np.abs(matrix[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
        raise ValueError("last row must be [0, 0, 0, 1]")
    return Pose(from_frame, to_frame, matrix[:3, :3], matrix[:3, 3])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")


def project(k: Intrinsics, point: np.ndarray) -> np.ndarray:
    """Project a 3D camera-frame point to pixels, with explicit perspective divide."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {point.shape}")
    z = float(point[2])
    if z <= MIN_DEPTH:
        raise BehindCamera(f"point depth {z} is at or behind the camera")
    return np.array([k.fx * point[0] / z + k.cx, k.fy * point[1] / z + k.cy])


def unproject(k: Intrinsics, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Inverse of ``project`` at a given depth (meters along the optical axis)."""
    pixel = np.asarray(pixel, dtype=np.float64)
    if depth <= MIN_DEPTH:
        raise BehindCamera(f"depth {depth} is at or behind the camera")
    return np.array([(pixel[0] - k.cx) * depth / k.fx, (pixel[1] - k.cy) * depth / k.fy, depth])


def reproject_gaze(
    gaze_pupil: np.ndarray,
    t_gc_gp: Pose,
    world_gc_ti: Pose,
    world_gc_tin: Pose,
    k: Intrinsics,
) -> np.ndarray:
    """Project a later pupil-frame gaze point onto the reference image plane.

    The gaze point sampled while the head was at ``world_gc_tin`` is carried
    into the glasses-camera frame of the earlier timestamp ``world_gc_ti``
    (both poses map glasses camera to the SLAM world), then projected with
    the camera intrinsics. With an unmoving head the two world poses cancel
    and the result reduces to projecting the calibrated gaze point directly.
    """
    if t_gc_gp.from_frame.frame is not Frame.GLASSES_PUPIL or (
        t_gc_gp.to_frame.frame is not Frame.GLASSES_CAMERA
    ):
        raise FrameMismatch(f"calibration pose must map gp->gc, got {t_gc_gp.to_frame}<-{t_gc_gp.from_frame}")
    for name, pose in (("reference", world_gc_ti), ("sample", world_gc_tin)):
        if pose.from_frame.frame is not Frame.GLASSES_CAMERA or pose.to_frame.frame is not Frame.SLAM_WORLD:
            raise FrameMismatch(f"{name} head pose must map gc->s, got {pose.to_frame}<-{pose.from_frame}")
    relative = compose(invert(world_gc_ti), world_gc_tin)
    chain = compose(relative, t_gc_gp)
    return project(k, transform_point(chain, gaze_pupil))


def orthonormalize_rotation(rotation: np.ndarray) -> np.ndarray:
    """Repair a near-orthonormal rotation by polar projection.

    Accepts input with orthonormality error up to INGEST_TOL; rejects worse
    input and reflections instead of silently repairing them.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
    err = _orthonormality_error(rotation)
    if err > INGEST_TOL:
        raise ValueError(f"rotation too far from orthonormal to repair (error {err:.3e})")
    u, _, vt = np.linalg.svd(rotation)
    repaired = u @ vt
    if np.linalg.det(repaired) < 0:
        raise ValueError("input is a reflection, not a rotation")
    return repaired


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = float(np.linalg.norm(axis))
    if norm == 0.0:
        raise ValueError("axis must be nonzero")
    x, y, z = axis / norm
    skew = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle_rad) * skew + (1.0 - math.cos(angle_rad)) * (skew @ skew)


# --- JSON serialization used by scenario files ---

def frame_id_to_json(frame_id: FrameId) -> dict:
    out: dict = {"frame": frame_id.frame.value}
    if frame_id.t is not None:
        out["t"] = frame_id.t
    return out


def frame_id_from_json(data: dict) -> FrameId:
    return FrameId(Frame(data["frame"]), data.get("t"))


def pose_to_json(pose: Pose) -> dict:
    return {
        "from": frame_id_to_json(pose.from_frame),
        "to": frame_id_to_json(pose.to_frame),
        "rotation": [[float(v) for v in row] for row in pose.rotation],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_json(data: dict) -> Pose:
    """Parse a serialized pose, repairing mild rotation drift at ingestion."""
    rotation = orthonormalize_rotation(np.asarray(data["rotation"], dtype=np.float64))
    return Pose(
        frame_id_from_json(data["from"]),
        frame_id_from_json(data["to"]),
        rotation,
        np.asarray(data["translation"], dtype=np.float64),
    )


def intrinsics_to_json(k: Intrinsics) -> dict:
    return {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height}


def intrinsics_from_json(data: dict) -> Intrinsics:
    return Intrinsics(
        fx=float(data["fx"]),
        fy=float(data["fy"]),
        cx=float(data["cx"]),
        cy=float(data["cy"]),
        width=int(data["width"]),
        height=int(data["height"]),
    )
