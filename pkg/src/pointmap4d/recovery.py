"""Recover intrinsics, camera poses, and depth maps from a pointmap sequence.

The principal point is fixed at the image center; the shared focal length is
the minimizer of the summed L1 image-plane alignment error on the first frame
(iteratively reweighted Weiszfeld updates). Per-frame poses come from RANSAC
over pixel/world-point correspondences with a Procrustes-based minimal solver
and Gauss-Newton refinement of the reprojection error on all inliers. Depth
is the camera-frame z of each world point under the recovered pose.

Every stochastic choice derives from the config seed (per frame the stream is
keyed on (seed, frame index)), so results are bit-reproducible and identical
whether frames are solved serially or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (
    AllPointsDegenerate,
    DegenerateConfiguration,
    NoConsensus,
    TooFewValidPoints,
)
from .geometry import Intrinsics, RigidPose
from .pointmap import DepthSequence, PointmapSequence, Trajectory

# Reference diagonal for the pixel threshold default (512 x 384).
_REFERENCE_DIAGONAL = 640.0
_MIN_Z = 1e-12


@dataclass(frozen=True)
class RansacConfig:
    """Knobs for the per-frame pose search.

    ``inlier_threshold`` is in pixels at 512x384 and is scaled linearly with
    the image diagonal at other resolutions. ``confidence`` drives standard
    adaptive termination (1.0 disables it and always runs ``iterations``).
    RANSAC scores at most ``max_scoring_points`` seeded-uniformly chosen
    pixels; refinement always uses every inlier.
    """

    iterations: int = 512
    inlier_threshold: float = 2.0
    min_sample: int = 4
    seed: int = 0
    refine: bool = True
    confidence: float = 0.9999
    max_scoring_points: int = 5000

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if self.min_sample < 4:
            raise ValueError("min_sample must be >= 4")
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError("confidence must lie in (0, 1]")
        if self.max_scoring_points < self.min_sample:
            raise ValueError("max_scoring_points too small")


@dataclass(frozen=True)
class RecoveryResult:
    """Outputs of :func:`recover_all`; failed frames keep an identity pose,
    an all-invalid depth map, and a zero inlier ratio."""

    intrinsics: Intrinsics
    trajectory: Trajectory
    depth: DepthSequence
    per_frame_inlier_ratio: np.ndarray
    failed_frames: tuple = ()


def pixel_threshold(cfg: RansacConfig, width: int, height: int) -> float:
    """Inlier threshold rescaled from the 512x384 reference resolution."""
    return cfg.inlier_threshold * float(np.hypot(width, height)) / _REFERENCE_DIAGONAL


def _pixel_centers(height: int, width: int) -> np.ndarray:
    u = np.arange(width, dtype=float) + 0.5
    v = np.arange(height, dtype=float) + 0.5
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], axis=-1)


def estimate_focal(points: np.ndarray, valid: Optional[np.ndarray] = None, *,
                   max_iters: int = 100, tol: float = 1e-9,
                   min_points: int = 10,
                   objective_trace: Optional[list] = None) -> float:
    """Weiszfeld estimate of the shared focal from a first-frame pointmap slice.

    ``points`` is (H, W, 3) in the first-camera frame; the principal point is
    (W/2, H/2). Minimizes sum over usable pixels (valid and z > 0) of
    ``|| (u - cx, v - cy) - f * (x/z, y/z) ||`` by iteratively reweighted
    least squares with weights 1 / max(residual, 1e-9); the objective is
    non-increasing across iterations. ``objective_trace``, when given a list,
    collects the objective value at each iterate.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) pointmap slice, got {pts.shape}")
    height, width = pts.shape[:2]
    mask = np.ones((height, width), dtype=bool) if valid is None \
        else np.asarray(valid, dtype=bool)
    mask = mask & (pts[..., 2] > _MIN_Z)
    n = int(np.count_nonzero(mask))
    if n < min_points:
        raise TooFewValidPoints(
            f"focal estimation needs >= {min_points} usable points, got {n}")

    uv = _pixel_centers(height, width)[mask]
    a = uv - np.array([width / 2.0, height / 2.0])
    p = pts[mask]
    b = p[:, :2] / p[:, 2:3]

    ab = np.sum(a * b, axis=1)
    bb = np.sum(b * b, axis=1)
    usable = bb > 1e-18
    if not usable.any():
        raise AllPointsDegenerate("all points lie on the optical axis")

    # Median of per-point closed-form estimates: exact on clean pixels and
    # immune to the unbounded image-plane leverage of gross outliers (a point
    # near the z = 0 plane has tan(off-axis angle) -> inf and would otherwise
    # drag the L1 objective's global minimum toward f = 0). Points that
    # disagree wildly with the consensus cannot have been imaged at their
    # pixel, so they are dropped before the reweighted iterations.
    per_point = np.where(usable, ab / np.where(usable, bb, 1.0), np.inf)
    f = float(np.median(per_point[usable]))
    keep = usable & (np.abs(per_point - f) <= 0.25 * max(abs(f), 1e-12))
    if np.count_nonzero(keep) >= min(min_points, np.count_nonzero(usable)):
        a, b, ab, bb = a[keep], b[keep], ab[keep], bb[keep]
    else:
        a, b, ab, bb = a[usable], b[usable], ab[usable], bb[usable]

    for _ in range(max_iters):
        res = np.linalg.norm(a - f * b, axis=1)
        if objective_trace is not None:
            objective_trace.append(float(np.sum(res)))
        w = 1.0 / np.maximum(res, 1e-9)
        f_new = float(np.sum(w * ab)) / float(np.sum(w * bb))
        done = abs(f_new - f) < tol * max(abs(f), 1e-12)
        f = f_new
        if done:
            break
    if objective_trace is not None:
        objective_trace.append(float(np.sum(np.linalg.norm(a - f * b, axis=1))))
    if not (np.isfinite(f) and f > 0):
        raise AllPointsDegenerate(f"focal estimate did not converge to a "
                                  f"positive value (got {f})")
    return f


def _procrustes_rigid(x: np.ndarray, y: np.ndarray):
    """Rigid (R, t) minimizing sum ||y - (R x + t)||^2, or None if unusable."""
    mx = x.mean(axis=0)
    my = y.mean(axis=0)
    c = (x - mx).T @ (y - my)
    if not np.all(np.isfinite(c)):
        return None
    u, _, vt = np.linalg.svd(c)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    s = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    r = vt.T @ s @ u.T
    return r, my - r @ mx


def _minimal_pose(x: np.ndarray, bearings: np.ndarray):
    """World-to-camera pose from >= 4 points and unit bearing rays.

    Alternates depth projection with rigid Procrustes alignment (object-space
    resection). Depths start at each point's distance from the world origin so
    the whole iteration is equivariant to global scene rescaling. Returns
    (R, t) or None when the sample is degenerate or converges behind the
    camera.
    """
    norms = np.linalg.norm(x, axis=1)
    mean_norm = float(norms.mean())
    if mean_norm < 1e-12:
        return None
    d = np.maximum(norms, 1e-6 * mean_norm)
    prev = None
    rt = None
    for _ in range(30):
        rt = _procrustes_rigid(x, d[:, None] * bearings)
        if rt is None:
            return None
        r, t = rt
        p = x @ r.T + t
        d = np.sum(p * bearings, axis=1)  # projection of each point onto its ray
        obj = float(np.sum((p - d[:, None] * bearings) ** 2))
        if prev is not None and prev - obj <= 1e-12 * max(prev, 1e-300):
            break
        prev = obj
    if rt is None or float(d.mean()) <= 0:
        return None
    return rt


def _so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle vector (Rodrigues)."""
    angle = float(np.linalg.norm(w))
    k = np.array([[0.0, -w[2], w[1]],
                  [w[2], 0.0, -w[0]],
                  [-w[1], w[0], 0.0]])
    if angle < 1e-12:
        return np.eye(3) + k + 0.5 * (k @ k)
    k /= angle
    return (np.eye(3) + np.sin(angle) * k
            + (1.0 - np.cos(angle)) * (k @ k))


def _reprojection_sq(r, t, x, uv, k: Intrinsics):
    """Squared pixel residuals and camera z for world->camera (r, t)."""
    cam = x @ r.T + t
    z = cam[:, 2]
    safe = np.where(z > _MIN_Z, z, 1.0)
    du = k.focal * cam[:, 0] / safe + k.cx - uv[:, 0]
    dv = k.focal * cam[:, 1] / safe + k.cy - uv[:, 1]
    sq = du * du + dv * dv
    return np.where(z > _MIN_Z, sq, np.inf), cam


def _refine_pose(r, t, x, uv, k: Intrinsics, iterations: int = 20):
    """Gauss-Newton on summed squared reprojection error over fixed points.

    Left-multiplicative rotation updates; stops early once the error stops
    improving. Falls back to the incoming pose if no step helps.
    """
    best_sq, _ = _reprojection_sq(r, t, x, uv, k)
    best_err = float(np.sum(np.where(np.isfinite(best_sq), best_sq, 0.0)))
    for _ in range(iterations):
        cam = x @ r.T + t
        z = cam[:, 2]
        front = z > _MIN_Z
        if not front.any():
            break
        c = cam[front]
        zz = c[:, 2]
        ru = k.focal * c[:, 0] / zz + k.cx - uv[front, 0]
        rv = k.focal * c[:, 1] / zz + k.cy - uv[front, 1]
        # d(pixel)/d(camera point), rows for u and v
        fu_z = k.focal / zz
        ju = np.stack([fu_z, np.zeros_like(zz), -k.focal * c[:, 0] / zz ** 2],
                      axis=1)
        jv = np.stack([np.zeros_like(zz), fu_z, -k.focal * c[:, 1] / zz ** 2],
                      axis=1)
        # d(camera point)/d(rotation increment) is -[R x]_x, so the residual
        # row j picks up j @ (-[q]_x) = cross(q, j); d/dt is the identity.
        q = c - t
        jwu = np.cross(q, ju)
        jwv = np.cross(q, jv)
        ja = np.concatenate([np.stack([jwu, ju], axis=1),
                             np.stack([jwv, jv], axis=1)], axis=0)
        res = np.concatenate([ru, rv])
        jmat = ja.reshape(-1, 6)
        h = jmat.T @ jmat
        g = jmat.T @ res
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jmat, -res, rcond=None)
        r_new = _so3_exp(step[:3]) @ r
        t_new = t + step[3:]
        sq, _ = _reprojection_sq(r_new, t_new, x, uv, k)
        # a step that throws points behind the camera is never an improvement
        if not np.all(np.isfinite(sq)):
            break
        err = float(np.sum(sq))
        if not np.isfinite(err) or err >= best_err:
            break
        r, t, best_err = r_new, t_new, err
        if best_err <= 1e-18:
            break
    return r, t


def estimate_pose_pnp(points: np.ndarray, valid: np.ndarray, k: Intrinsics,
                      cfg: RansacConfig) -> tuple[RigidPose, float]:
    """RANSAC PnP on one frame's pixel/world-point correspondences.

    Returns the camera-to-world pose and the fraction of valid pixels that
    are reprojection inliers under the final pose. Deterministic given
    ``cfg.seed``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) pointmap slice, got {pts.shape}")
    height, width = pts.shape[:2]
    mask = np.asarray(valid, dtype=bool)
    x_all = pts[mask]
    uv_all = _pixel_centers(height, width)[mask]
    n_all = x_all.shape[0]
    if n_all < cfg.min_sample:
        raise TooFewValidPoints(
            f"PnP needs >= {cfg.min_sample} valid points, got {n_all}")

    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed & 0xFFFFFFFFFFFFFFFF))
    if n_all > cfg.max_scoring_points:
        subset = np.sort(rng.choice(n_all, size=cfg.max_scoring_points,
                                    replace=False))
    else:
        subset = np.arange(n_all)
    x_sub = x_all[subset]
    uv_sub = uv_all[subset]
    n_sub = x_sub.shape[0]

    bear = np.concatenate([(uv_sub - [k.cx, k.cy]) / k.focal,
                           np.ones((n_sub, 1))], axis=1)
    bear /= np.linalg.norm(bear, axis=1, keepdims=True)

    thr_sq = pixel_threshold(cfg, width, height) ** 2
    best_count = -1
    best_rt = None
    produced = False
    for it in range(cfg.iterations):
        sample = rng.choice(n_sub, size=cfg.min_sample, replace=False)
        rt = _minimal_pose(x_sub[sample], bear[sample])
        if rt is None:
            continue
        produced = True
        sq, _ = _reprojection_sq(rt[0], rt[1], x_sub, uv_sub, k)
        count = int(np.count_nonzero(sq < thr_sq))
        if count > best_count:
            best_count = count
            best_rt = rt
            if best_count == n_sub:
                break
        if cfg.confidence < 1.0 and best_count > 0:
            fail = 1.0 - (best_count / n_sub) ** cfg.min_sample
            if fail <= 0.0:
                break
            if it + 1 >= np.log(1.0 - cfg.confidence) / np.log(fail):
                break

    if not produced or best_rt is None:
        raise DegenerateConfiguration(
            "no RANSAC sample yielded a usable pose hypothesis")
    if best_count / n_sub < 0.1:
        raise NoConsensus(
            f"best inlier ratio {best_count / n_sub:.3f} is below 0.1")

    r, t = best_rt
    sq_all, _ = _reprojection_sq(r, t, x_all, uv_all, k)
    inliers = sq_all < thr_sq
    if cfg.refine:
        # Alternate refinement with inlier re-selection so the final pose
        # does not inherit the selection bias of the winning minimal sample.
        for _ in range(3):
            if int(np.count_nonzero(inliers)) < cfg.min_sample:
                break
            r, t = _refine_pose(r, t, x_all[inliers], uv_all[inliers], k)
            sq_all, _ = _reprojection_sq(r, t, x_all, uv_all, k)
            new_inliers = sq_all < thr_sq
            if np.array_equal(new_inliers, inliers):
                break
            inliers = new_inliers
    ratio = float(np.count_nonzero(inliers)) / n_all

    # (r, t) maps world to camera; report camera-to-world.
    return RigidPose(r.T, -(r.T @ t)), ratio


def _frame_seed(base_seed: int, frame: int) -> int:
    seq = np.random.SeedSequence([base_seed & 0xFFFFFFFFFFFFFFFF, frame])
    return int(seq.generate_state(1)[0])


def recover_all(p: PointmapSequence, cfg: RansacConfig) -> RecoveryResult:
    """Full pipeline: focal from frame 0, identity first pose, per-frame
    RANSAC PnP for the rest, then per-pixel depth as camera-frame z.

    Frames whose pose search fails are flagged in ``failed_frames`` (identity
    pose, empty depth, ratio 0) instead of aborting the sequence.
    """
    n, height, width = p.frames, p.height, p.width
    focal = estimate_focal(p.points[0], p.valid[0])
    k = Intrinsics.centered(focal, width, height)
    thr_sq = pixel_threshold(cfg, width, height) ** 2

    poses = [RigidPose.identity()]
    ratios = np.zeros(n)
    failed = []

    # Frame 0 is pinned to the identity; its ratio is still measured.
    sq0, _ = _reprojection_sq(np.eye(3), np.zeros(3), p.points[0][p.valid[0]],
                              _pixel_centers(height, width)[p.valid[0]], k)
    n0 = int(np.count_nonzero(p.valid[0]))
    ratios[0] = float(np.count_nonzero(sq0 < thr_sq)) / n0 if n0 else 0.0

    for i in range(1, n):
        frame_cfg = replace(cfg, seed=_frame_seed(cfg.seed, i))
        try:
            pose, ratio = estimate_pose_pnp(p.points[i], p.valid[i], k, frame_cfg)
        except (TooFewValidPoints, DegenerateConfiguration, NoConsensus):
            poses.append(RigidPose.identity())
            ratios[i] = 0.0
            failed.append(i)
            continue
        poses.append(pose)
        ratios[i] = ratio

    depth_vals = np.full((n, height, width), -1.0)
    depth_valid = np.zeros((n, height, width), dtype=bool)
    for i, pose in enumerate(poses):
        if i in failed:
            continue
        cam_z = (p.points[i] - pose.translation) @ pose.rotation[:, 2]
        ok = p.valid[i] & (cam_z > 0)
        depth_vals[i] = np.where(ok, cam_z, -1.0)
        depth_valid[i] = ok

    traj = Trajectory(tuple(poses), np.arange(n, dtype=float))
    return RecoveryResult(intrinsics=k, trajectory=traj,
                          depth=DepthSequence(depth_vals, depth_valid),
                          per_frame_inlier_ratio=ratios,
                          failed_frames=tuple(failed))
