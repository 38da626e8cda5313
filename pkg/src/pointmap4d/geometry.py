"""Rigid transforms, similarity transforms, and the pinhole camera model.

All types are immutable value objects backed by read-only numpy arrays, and
all operations are pure functions, so everything here is safe to share across
threads. Conventions:

* poses are camera-to-world: ``world = R @ cam + t``;
* pixel coordinates are ``(u, v)`` with u along columns and v along rows;
* one shared focal length, square pixels, zero skew.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonPositiveDepth

_ORTHO_TOL = 1e-9       # constructor acceptance for R^T R - I
_REORTHO_DRIFT = 1e-12  # compose() re-orthonormalizes beyond this drift


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def orthonormality_error(rotation: np.ndarray) -> float:
    """Max-abs entry of R^T R - I."""
    r = np.asarray(rotation, dtype=float)
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


def project_to_rotation(matrix: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) with det +1, via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def rotation_angle_deg(rotation: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in degrees.

    Uses atan2 of the skew norm against the trace, which stays accurate for
    angles near zero where the arccos form loses half the significant digits.
    """
    r = np.asarray(rotation, dtype=float)
    s = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0],
                              r[1, 0] - r[0, 1]])
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.degrees(np.arctan2(s, c)))


class Pixel(NamedTuple):
    """Image-plane coordinate: u along columns, v along rows, in pixels."""

    u: float
    v: float


@dataclass(frozen=True)
class RigidPose:
    """Camera-to-world rigid transform (3x3 rotation, 3-vector translation)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _freeze(self.rotation)
        t = _freeze(self.translation)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"expected (3,3) rotation and (3,) translation, "
                             f"got {r.shape} and {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        if orthonormality_error(r) > _ORTHO_TOL or np.linalg.det(r) < 0:
            raise ValueError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map camera-frame points, shape (..., 3), into the world frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_identity(self, tol: float = 0.0) -> bool:
        return (np.max(np.abs(self.rotation - np.eye(3))) <= tol
                and np.max(np.abs(self.translation)) <= tol)


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose applying b then a: ``compose(a, b).apply(x) == a.apply(b.apply(x))``."""
    r = a.rotation @ b.rotation
    if orthonormality_error(r) > _REORTHO_DRIFT:
        r = project_to_rotation(r)
    t = a.rotation @ b.translation + a.translation
    return RigidPose(r, t)


def inverse(p: RigidPose) -> RigidPose:
    return RigidPose(p.rotation.T, -(p.rotation.T @ p.translation))


def relative(a: RigidPose, b: RigidPose) -> RigidPose:
    """Motion from a to b: inverse(a) composed with b."""
    return compose(inverse(a), b)


@dataclass(frozen=True)
class SimTransform:
    """Similarity transform: ``y = scale * R @ x + t``, scale > 0."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        r = _freeze(self.rotation)
        t = _freeze(self.translation)
        if orthonormality_error(r) > _ORTHO_TOL or np.linalg.det(r) < 0:
            raise ValueError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SimTransform":
        return SimTransform(1.0, np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def inverse(self) -> "SimTransform":
        rt = self.rotation.T
        return SimTransform(1.0 / self.scale, rt,
                            -(rt @ self.translation) / self.scale)

    def apply_to_pose(self, pose: RigidPose) -> RigidPose:
        """Conjugate a camera-to-world pose into the transformed frame.

        Camera centers move as points do; orientation picks up the rotation.
        """
        return RigidPose(self.rotation @ pose.rotation,
                         self.apply(pose.translation))


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics: shared focal (pixels) plus principal point."""

    focal: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (np.isfinite(self.focal) and self.focal > 0):
            raise ValueError(f"focal must be positive, got {self.focal}")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @staticmethod
    def centered(focal: float, width: int, height: int) -> "Intrinsics":
        """Intrinsics with the principal point at the image center."""
        return Intrinsics(focal, width / 2.0, height / 2.0)

    def matrix(self) -> np.ndarray:
        return np.array([[self.focal, 0.0, self.cx],
                         [0.0, self.focal, self.cy],
                         [0.0, 0.0, 1.0]])


_MIN_Z = 1e-12


def project(point_cam: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels (..., 2).

    Raises NonPositiveDepth if any z <= 1e-12 (point on or behind the camera).
    """
    pts = np.asarray(point_cam, dtype=float)
    z = pts[..., 2]
    if np.any(z <= _MIN_Z):
        raise NonPositiveDepth("cannot project point with z <= 0")
    u = k.focal * pts[..., 0] / z + k.cx
    v = k.focal * pts[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1)


def unproject(px, depth, k: Intrinsics) -> np.ndarray:
    """Lift pixels (..., 2) at the given depth(s) to camera-frame points (..., 3).

    Inverse of :func:`project`: ``project(unproject(px, d, k), k) == px``.
    """
    p = np.asarray(px, dtype=float)
    d = np.asarray(depth, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDepth("depth must be > 0")
    x = (p[..., 0] - k.cx) * d / k.focal
    y = (p[..., 1] - k.cy) * d / k.focal
    return np.stack([x, y, d * np.ones_like(x)], axis=-1)
