"""Temporal (4D) pointmaps: per-pixel world coordinates across frames.

A pointmap sequence associates every valid pixel of every frame with a 3D
point in one shared world frame anchored at the first camera. Construction
unprojects each depth map through the shared intrinsics and maps it through
the frame's camera-to-world pose; normalization rescales the whole scene so
the mean distance of valid points to the origin is one.

Pixel convention: integer pixel (column j, row i) has continuous image
coordinate (j + 0.5, i + 0.5), which makes a centered principal point exact
for even image sizes. Invalid pixels carry a -1 sentinel and a False mask
bit; consumers must consult the mask only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTrajectory,
    FirstFrameNotIdentity,
    NonPositiveScale,
    NoValidPoints,
)
from .geometry import Intrinsics, RigidPose, compose, inverse

DEPTH_SENTINEL = -1.0
POINT_SENTINEL = 0.0


def _as_mask(valid, shape) -> np.ndarray:
    m = np.array(valid, dtype=bool)
    if m.shape != shape:
        raise DimensionMismatch(f"mask shape {m.shape} != data shape {shape}")
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class DepthSequence:
    """Per-frame metric depth, shape (N, H, W), with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3:
            raise DimensionMismatch(f"depth values must be (N, H, W), got {v.shape}")
        m = _as_mask(self.valid, v.shape)
        ok = v[m]
        if ok.size and not (np.all(np.isfinite(ok)) and np.all(ok > 0)):
            raise ValueError("valid depth values must be finite and > 0")
        v[~m] = DEPTH_SENTINEL
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PointmapSequence:
    """Per-frame, per-pixel world-frame XYZ, shape (N, H, W, 3), with mask.

    ``norm_scale`` records the cumulative divisor applied by normalization
    (1.0 for an unnormalized map).
    """

    points: np.ndarray
    valid: np.ndarray
    norm_scale: float = 1.0

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 4 or p.shape[-1] != 3:
            raise DimensionMismatch(f"points must be (N, H, W, 3), got {p.shape}")
        m = _as_mask(self.valid, p.shape[:3])
        if not (np.isfinite(self.norm_scale) and self.norm_scale > 0):
            raise NonPositiveScale(f"norm_scale must be positive, got {self.norm_scale}")
        ok = p[m]
        if ok.size and not np.all(np.isfinite(ok)):
            raise ValueError("valid points must be finite")
        p[~m] = POINT_SENTINEL
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "valid", m)
        object.__setattr__(self, "norm_scale", float(self.norm_scale))

    @property
    def frames(self) -> int:
        return self.points.shape[0]

    @property
    def height(self) -> int:
        return self.points.shape[1]

    @property
    def width(self) -> int:
        return self.points.shape[2]

    def valid_points(self) -> np.ndarray:
        """All valid points as a flat (M, 3) array."""
        return self.points[self.valid]

    def mean_distance(self) -> float:
        """Mean distance of valid points to the world origin."""
        pts = self.valid_points()
        if pts.size == 0:
            raise NoValidPoints("pointmap has no valid points")
        return float(np.mean(np.linalg.norm(pts, axis=1)))


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera-to-world poses with strictly increasing timestamps."""

    poses: tuple
    timestamps: np.ndarray

    def __post_init__(self):
        poses = tuple(self.poses)
        ts = np.array(self.timestamps, dtype=float)
        if len(poses) == 0:
            raise EmptyTrajectory("trajectory must contain at least one pose")
        if ts.shape != (len(poses),):
            raise DimensionMismatch(
                f"{len(poses)} poses but {ts.shape} timestamps")
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        ts.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return len(self.poses)

    def translations(self) -> np.ndarray:
        """(N, 3) array of camera centers."""
        return np.array([p.translation for p in self.poses])

    @staticmethod
    def from_poses(poses, timestamps=None) -> "Trajectory":
        poses = tuple(poses)
        if timestamps is None:
            timestamps = np.arange(len(poses), dtype=float)
        return Trajectory(poses, timestamps)


def rebase_to_first_frame(traj: Trajectory) -> Trajectory:
    """Re-express all poses relative to the first one.

    Output pose i is inverse(poses[0]) o poses[i]; the first pose becomes the
    exact identity and all relative motions are preserved.
    """
    anchor = inverse(traj.poses[0])
    rebased = [RigidPose.identity()]
    rebased.extend(compose(anchor, p) for p in traj.poses[1:])
    return Trajectory(tuple(rebased), traj.timestamps)


def _pixel_grid(height: int, width: int):
    """Continuous pixel-center coordinates u (columns) and v (rows)."""
    u = np.arange(width, dtype=float) + 0.5
    v = np.arange(height, dtype=float) + 0.5
    return np.meshgrid(u, v)  # each (H, W)


def build_pointmap(depth: DepthSequence, traj: Trajectory,
                   k: Intrinsics) -> PointmapSequence:
    """Lift a depth sequence into a world-frame pointmap sequence.

    For every valid pixel, the camera-frame point from :func:`~.geometry.unproject`
    is mapped through that frame's camera-to-world pose. The trajectory must be
    rebased (first pose exactly identity) so the world frame is the first camera.
    Invalid depth pixels stay invalid; norm_scale of the result is 1.
    """
    if len(traj) != depth.frames:
        raise DimensionMismatch(
            f"{depth.frames} depth frames but {len(traj)} poses")
    if not traj.poses[0].is_identity():
        raise FirstFrameNotIdentity(
            "trajectory must be rebased before building a pointmap")

    uu, vv = _pixel_grid(depth.height, depth.width)
    ray_x = (uu - k.cx) / k.focal
    ray_y = (vv - k.cy) / k.focal

    points = np.zeros(depth.values.shape + (3,), dtype=float)
    for i, pose in enumerate(traj.poses):
        d = np.where(depth.valid[i], depth.values[i], 0.0)
        cam = np.stack([ray_x * d, ray_y * d, d], axis=-1)
        points[i] = cam @ pose.rotation.T + pose.translation
    return PointmapSequence(points, depth.valid, norm_scale=1.0)


def normalize_pointmap(p: PointmapSequence) -> PointmapSequence:
    """Divide every valid point by the mean valid-point distance to the origin.

    The mean is taken over valid pixels only. The divisor accumulates into
    ``norm_scale``, so normalizing twice is a no-op up to roundoff.
    """
    s = p.mean_distance()  # raises NoValidPoints on an all-invalid map
    points = p.points / s
    return PointmapSequence(points, p.valid, norm_scale=p.norm_scale * s)


def apply_scale_to_camera(traj: Trajectory, depth: DepthSequence,
                          s: float) -> tuple[Trajectory, DepthSequence]:
    """Divide camera translations and depths by s, leaving rotations alone.

    Building a pointmap from the scaled inputs matches normalizing the
    pointmap built from the originals (when s is that map's mean distance).
    """
    if not (np.isfinite(s) and s > 0):
        raise NonPositiveScale(f"scale must be positive, got {s}")
    poses = tuple(RigidPose(p.rotation, p.translation / s) for p in traj.poses)
    values = np.where(depth.valid, depth.values / s, DEPTH_SENTINEL)
    return (Trajectory(poses, traj.timestamps),
            DepthSequence(values, depth.valid))
