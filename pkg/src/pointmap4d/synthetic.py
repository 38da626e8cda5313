"""Deterministic synthetic dynamic scenes with exact analytic ground truth.

A scene is a room of axis-aligned planes plus spheres under rigid motion,
ray-cast from a camera following an orbit, line, or spline path. Plane and
sphere intersections are closed form, so the rendered depth maps, poses,
intrinsics, and the pointmap built from them are exact (up to float32
quantization of depth, applied so that serialized scenes round-trip without
loss). Everything is a pure function of the seed.

``corrupt_pointmap`` reproduces the wide-range-pointcloud failure regime:
Gaussian jitter on all valid points plus a seeded fraction replaced by gross
outliers far outside the scene.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoGeometryVisible
from .geometry import Intrinsics, RigidPose
from .pointmap import (
    DepthSequence,
    PointmapSequence,
    Trajectory,
    build_pointmap,
    rebase_to_first_frame,
)

ORBIT_SWEEP_DEG = 36.0   # total orbit sweep; step = sweep / (n_frames - 1)
TARGET_MEDIAN_DEPTH = 5.0
_MIN_RAY_T = 1e-9


@dataclass(frozen=True)
class Plane:
    """Axis-aligned plane ``coord[axis] == offset``.

    ``bounds`` optionally restricts the plane to a rectangle: ((lo0, hi0),
    (lo1, hi1)) over the two remaining axes in increasing-axis order.
    """

    axis: int
    offset: float
    bounds: tuple | None = None


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    dynamic: bool = False


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene; every field has a sane default."""

    seed: int = 0
    n_frames: int = 17
    width: int = 512
    height: int = 384
    focal: float = 500.0
    n_static_planes: int = 6
    n_dynamic_spheres: int = 2
    camera_path: str = "orbit"      # orbit | line | spline
    motion_scale: float = 1.0
    outlier_fraction: float = 0.0
    depth_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.width < 16 or self.height < 16:
            raise ValueError("width and height must be >= 16")
        if self.focal <= 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if not 0.0 <= self.outlier_fraction < 0.5:
            raise ValueError("outlier_fraction must lie in [0, 0.5)")
        if self.depth_noise_sigma < 0 or self.motion_scale < 0:
            raise ValueError("noise sigma and motion scale must be >= 0")
        if self.camera_path not in ("orbit", "line", "spline"):
            raise ValueError(f"unknown camera path {self.camera_path!r}")
        if self.n_static_planes < 0 or self.n_dynamic_spheres < 0:
            raise ValueError("primitive counts must be >= 0")


@dataclass(frozen=True)
class SyntheticScene:
    """Ground truth bundle: everything downstream code might recover."""

    depth: DepthSequence
    trajectory: Trajectory            # rebased: first pose is the identity
    intrinsics: Intrinsics
    gt_pointmap: PointmapSequence
    dynamic_mask: np.ndarray          # (N, H, W) bool
    spec: SceneSpec


def look_at(position, target, up=(0.0, 1.0, 0.0)) -> RigidPose:
    """Camera-to-world pose at ``position`` with +z (optical axis) toward target."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position coincides with the look-at target")
    forward = forward / norm
    up = np.asarray(up, dtype=float)
    if np.linalg.norm(np.cross(up, forward)) < 1e-9:
        up = np.array([1.0, 0.0, 0.0])  # forward parallel to up: pick another
    right = np.cross(up, forward)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return RigidPose(np.column_stack([right, down, forward]), position)


def cast_depth(planes: Sequence[Plane], spheres: Sequence[Sphere],
               pose: RigidPose, k: Intrinsics, width: int,
               height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ray-cast one frame; returns (depth, valid, hit_dynamic), each (H, W).

    Depth is the camera-frame z of the nearest hit (rays are parameterized so
    the ray parameter equals camera z); pixels with no hit are invalid.
    """
    u = np.arange(width, dtype=float) + 0.5
    v = np.arange(height, dtype=float) + 0.5
    uu, vv = np.meshgrid(u, v)
    dirs_cam = np.stack([(uu - k.cx) / k.focal,
                         (vv - k.cy) / k.focal,
                         np.ones_like(uu)], axis=-1)
    dirs = dirs_cam @ pose.rotation.T
    origin = pose.translation

    best = np.full((height, width), np.inf)
    dynamic = np.zeros((height, width), dtype=bool)

    for plane in planes:
        denom = dirs[..., plane.axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane.offset - origin[plane.axis]) / denom
        s = np.where(np.abs(denom) > 1e-12, s, np.inf)
        s = np.where(s > _MIN_RAY_T, s, np.inf)
        if plane.bounds is not None:
            other = [a for a in range(3) if a != plane.axis]
            inside = np.ones_like(s, dtype=bool)
            for (lo, hi), axis in zip(plane.bounds, other):
                coord = origin[axis] + s * dirs[..., axis]
                inside &= (coord >= lo) & (coord <= hi)
            s = np.where(inside, s, np.inf)
        closer = s < best
        best = np.where(closer, s, best)
        dynamic = np.where(closer, False, dynamic)

    for sphere in spheres:
        oc = origin - np.asarray(sphere.center, dtype=float)
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * (dirs @ oc)
        c = oc @ oc - sphere.radius ** 2
        disc = b * b - 4.0 * a * c
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        near = (-b - sq) / (2.0 * a)
        far = (-b + sq) / (2.0 * a)
        s = np.where(near > _MIN_RAY_T, near, far)
        s = np.where(hit & (s > _MIN_RAY_T), s, np.inf)
        closer = s < best
        best = np.where(closer, s, best)
        dynamic = np.where(closer, sphere.dynamic, dynamic)

    valid = np.isfinite(best)
    depth = np.where(valid, best, -1.0)
    return depth, valid, dynamic & valid


# Room walls ordered so the far wall (which the camera faces) comes first;
# dropping trailing walls leaves rays at the image border unmatched, which
# exercises invalid-pixel handling. Walls are finite rectangles bounded by
# the room box (with a hair of overlap so edge rays cannot slip through).
def _room_planes(n: int, hx: float, hy: float, hz: float,
                 rng: np.random.Generator) -> list[Plane]:
    pad = 1e-6
    bx = (-hx - pad, hx + pad)
    by = (-hy - pad, hy + pad)
    bz = (-hz - pad, hz + pad)
    walls = [
        Plane(2, +hz, (bx, by)), Plane(0, -hx, (by, bz)),
        Plane(0, +hx, (by, bz)), Plane(1, -hy, (bx, bz)),
        Plane(1, +hy, (bx, bz)), Plane(2, -hz, (bx, by)),
    ]
    planes = walls[:min(n, 6)]
    for _ in range(max(0, n - 6)):
        axis = int(rng.integers(0, 3))
        offset = float(rng.uniform(-3.0, 3.0))
        center = rng.uniform(-3.0, 3.0, size=2)
        half = rng.uniform(1.0, 2.5, size=2)
        bounds = ((float(center[0] - half[0]), float(center[0] + half[0])),
                  (float(center[1] - half[1]), float(center[1] + half[1])))
        planes.append(Plane(axis, offset, bounds))
    return planes


@dataclass(frozen=True)
class _MovingSphere:
    pivot: np.ndarray
    arm: np.ndarray
    axis: np.ndarray
    spin_rate: float
    velocity: np.ndarray
    radius: float

    def at(self, t: float) -> Sphere:
        angle = self.spin_rate * t
        # Rodrigues rotation of the arm about the spin axis.
        k = self.axis
        a = self.arm
        rot = (a * np.cos(angle) + np.cross(k, a) * np.sin(angle)
               + k * (k @ a) * (1.0 - np.cos(angle)))
        center = self.pivot + rot + self.velocity * t
        moving = self.spin_rate != 0.0 or np.any(self.velocity != 0.0)
        return Sphere(center, self.radius, dynamic=bool(moving))


def _make_spheres(n: int, motion_scale: float,
                  rng: np.random.Generator) -> list[_MovingSphere]:
    spheres = []
    for _ in range(n):
        pivot = np.array([rng.uniform(-3.5, 3.5), rng.uniform(-2.5, 2.5),
                          rng.uniform(-1.0, 3.5)])
        arm_dir = rng.standard_normal(3)
        arm = arm_dir / np.linalg.norm(arm_dir) * rng.uniform(0.3, 0.8)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        vel_dir = rng.standard_normal(3)
        vel = vel_dir / np.linalg.norm(vel_dir) * rng.uniform(0.05, 0.15)
        spheres.append(_MovingSphere(
            pivot=pivot, arm=arm, axis=axis,
            spin_rate=float(rng.uniform(0.2, 0.5)) * motion_scale,
            velocity=vel * motion_scale,
            radius=float(rng.uniform(0.6, 1.4))))
    return spheres


def _camera_positions(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n_frames
    radius = float(rng.uniform(6.5, 8.0))
    y_off = float(rng.uniform(-1.5, 1.5))
    theta0 = float(rng.uniform(-0.35, 0.35))
    if spec.camera_path == "orbit":
        step = np.radians(ORBIT_SWEEP_DEG) / max(n - 1, 1)
        theta = theta0 + step * np.arange(n)
        return np.stack([radius * np.sin(theta),
                         np.full(n, y_off),
                         -radius * np.cos(theta)], axis=1)
    if spec.camera_path == "line":
        start = np.array([radius * np.sin(theta0), y_off,
                          -radius * np.cos(theta0)])
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        step = 1.5 / max(n - 1, 1)
        return start + np.arange(n)[:, None] * step * d
    # spline: orbit arc plus a vertical sinusoid, a smooth non-planar curve
    step = np.radians(ORBIT_SWEEP_DEG) / max(n - 1, 1)
    theta = theta0 + step * np.arange(n)
    tau = np.linspace(0.0, 1.0, n)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    y = y_off + 0.8 * np.sin(2.0 * np.pi * tau + phase)
    return np.stack([radius * np.sin(theta), y,
                     -radius * np.cos(theta)], axis=1)


def generate(spec: SceneSpec) -> SyntheticScene:
    """Render the scene described by ``spec``; identical seeds give identical
    scenes bit for bit.

    Raises NoGeometryVisible when no ray in the whole sequence hits anything.
    """
    rng = np.random.default_rng(spec.seed & 0xFFFFFFFFFFFFFFFF)
    hx, hy, hz = rng.uniform(9.0, 12.0, size=3)
    planes = _room_planes(spec.n_static_planes, hx, hy, hz, rng)
    movers = _make_spheres(spec.n_dynamic_spheres, spec.motion_scale, rng)
    positions = _camera_positions(spec, rng)
    timestamps = np.arange(spec.n_frames, dtype=float)

    if spec.camera_path == "line":
        fixed = look_at(positions[0], (0.0, 0.0, 0.0))
        raw_poses = [RigidPose(fixed.rotation, pos) for pos in positions]
    else:
        raw_poses = [look_at(pos, (0.0, 0.0, 0.0)) for pos in positions]

    k = Intrinsics.centered(spec.focal, spec.width, spec.height)
    depth = np.empty((spec.n_frames, spec.height, spec.width))
    valid = np.empty(depth.shape, dtype=bool)
    dyn = np.empty(depth.shape, dtype=bool)
    for i, pose in enumerate(raw_poses):
        spheres = [m.at(timestamps[i]) for m in movers]
        depth[i], valid[i], dyn[i] = cast_depth(
            planes, spheres, pose, k, spec.width, spec.height)

    if not valid.any():
        raise NoGeometryVisible("camera path sees no scene geometry")

    # Rescale the implied world so the median depth sits at the target, then
    # quantize depth to float32 so serialized scenes round-trip losslessly.
    scale = TARGET_MEDIAN_DEPTH / float(np.median(depth[valid]))
    depth = np.where(valid, depth * scale, -1.0)
    depth = depth.astype(np.float32).astype(np.float64)
    scaled_poses = [RigidPose(p.rotation, p.translation * scale)
                    for p in raw_poses]

    traj = rebase_to_first_frame(Trajectory(tuple(scaled_poses), timestamps))
    depth_seq = DepthSequence(depth, valid)
    gt_pointmap = build_pointmap(depth_seq, traj, k)
    return SyntheticScene(depth=depth_seq, trajectory=traj, intrinsics=k,
                          gt_pointmap=gt_pointmap, dynamic_mask=dyn, spec=spec)


def corrupt_pointmap(p: PointmapSequence, outlier_fraction: float,
                     noise_sigma: float, seed: int) -> PointmapSequence:
    """Jitter all valid points and replace a seeded fraction with gross outliers.

    Noise is isotropic Gaussian with sigma ``noise_sigma * scene_scale``,
    drawn from a per-frame stream keyed on (seed, frame). Outliers are exactly
    ``floor(outlier_fraction * valid_count)`` valid points (chosen by one
    seeded permutation, so smaller fractions select a subset of larger ones),
    moved to 10-100x the scene scale. Masks are untouched.
    """
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if outlier_fraction == 0.0 and noise_sigma == 0.0:
        return p

    scene_scale = p.mean_distance()
    points = np.array(p.points)
    key = seed & 0xFFFFFFFFFFFFFFFF

    if noise_sigma > 0:
        for i in range(p.frames):
            rng = np.random.default_rng(np.random.SeedSequence([key, 1, i]))
            m = p.valid[i]
            points[i][m] += noise_sigma * scene_scale * \
                rng.standard_normal((int(np.count_nonzero(m)), 3))

    n_valid = int(np.count_nonzero(p.valid))
    n_out = int(np.floor(outlier_fraction * n_valid))
    if n_out > 0:
        rng = np.random.default_rng(np.random.SeedSequence([key, 2]))
        perm = rng.permutation(n_valid)
        flat_idx = np.flatnonzero(p.valid.ravel())[perm[:n_out]]
        dirs = rng.standard_normal((n_out, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        mags = rng.uniform(10.0, 100.0, size=n_out) * scene_scale
        flat = points.reshape(-1, 3)
        flat[flat_idx] = dirs * mags[:, None]
        points = flat.reshape(points.shape)

    return PointmapSequence(points, p.valid, norm_scale=p.norm_scale)
