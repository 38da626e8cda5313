"""Trajectory and depth evaluation: sim(3) alignment, ATE, RPE, Abs Rel, delta.

Pose metrics remove the gauge freedom of monocular reconstruction before
measuring anything: ATE aligns the predicted camera centers to the reference
with a closed-form similarity (Umeyama) and reports the RMSE of the residual
translations; RPE compares frame-to-frame relative motions (invariant to any
global rigid transform) after correcting the predicted translations by the
Umeyama scale. Depth metrics fit one global scale/shift pair per sequence by
least squares, then report mean absolute relative error and the fraction of
pixels whose depth ratio stays below 1.25.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConstantPred,
    DegenerateTrajectory,
    DimensionMismatch,
    LengthMismatch,
    NoValidPixels,
    TooFewPoses,
    TooFewValidPixels,
)
from .geometry import (
    RigidPose,
    SimTransform,
    compose,
    inverse,
    relative,
    rotation_angle_deg,
)
from .pointmap import DepthSequence, Trajectory


@dataclass(frozen=True)
class PoseMetrics:
    ate_rmse: float
    rpe_trans: float
    rpe_rot: float


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    delta_125: float
    scale: float
    shift: float
    valid_count: int


def umeyama_align(pred: Trajectory, gt: Trajectory) -> SimTransform:
    """Closed-form similarity mapping predicted camera centers onto reference
    ones (least squares over translations, det(R) = +1 enforced).

    Needs at least 3 poses with non-collinear centers on both sides;
    otherwise scale or rotation is underdetermined.
    """
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predicted vs {len(gt)} reference poses")
    n = len(pred)
    if n < 3:
        raise TooFewPoses(f"similarity alignment needs >= 3 poses, got {n}")
    x = pred.translations()
    y = gt.translations()
    mx = x.mean(axis=0)
    my = y.mean(axis=0)
    xc = x - mx
    yc = y - my
    var_x = float(np.mean(np.sum(xc * xc, axis=1)))
    if var_x < 1e-24:
        raise DegenerateTrajectory("predicted camera centers are coincident")

    cov = (yc.T @ xc) / n
    u, d, vt = np.linalg.svd(cov)
    if d[1] <= 1e-9 * max(d[0], 1e-300):
        raise DegenerateTrajectory(
            "camera centers are collinear; rotation is underdetermined")
    s_fix = np.diag([1.0, 1.0,
                     np.sign(np.linalg.det(u) * np.linalg.det(vt))])
    r = u @ s_fix @ vt
    scale = float(np.trace(np.diag(d) @ s_fix)) / var_x
    if scale <= 0:
        raise DegenerateTrajectory(f"non-positive similarity scale {scale}")
    t = my - scale * (r @ mx)
    return SimTransform(scale, r, t)


def ate(pred: Trajectory, gt: Trajectory, rmse: bool = True) -> float:
    """Absolute translation error after internal similarity alignment.

    RMSE by default; ``rmse=False`` switches to the mean error.
    """
    sim = umeyama_align(pred, gt)
    err = np.linalg.norm(sim.apply(pred.translations()) - gt.translations(),
                         axis=1)
    return float(np.sqrt(np.mean(err ** 2)) if rmse else np.mean(err))


def _umeyama_scale_or_one(pred: Trajectory, gt: Trajectory) -> float:
    try:
        return umeyama_align(pred, gt).scale
    except (TooFewPoses, DegenerateTrajectory):
        return 1.0


def rpe(pred: Trajectory, gt: Trajectory, delta: int = 1) -> tuple[float, float]:
    """Relative pose error over frame pairs (i, i + delta).

    The predicted translations are corrected by the Umeyama scale (1 when the
    trajectory is too short or degenerate for alignment), then each residual
    motion inverse(gt_rel) o pred_rel contributes its translation norm and
    geodesic rotation angle. Returns (trans RMSE, rot RMSE in degrees).
    """
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predicted vs {len(gt)} reference poses")
    delta = int(delta)
    if delta < 1 or len(pred) < delta + 1:
        raise LengthMismatch(
            f"need >= delta+1 = {delta + 1} poses, got {len(pred)}")
    scale = _umeyama_scale_or_one(pred, gt)
    p_poses = [RigidPose(p.rotation, p.translation * scale)
               for p in pred.poses]
    t_sq = []
    r_sq = []
    for i in range(len(pred) - delta):
        g_rel = relative(gt.poses[i], gt.poses[i + delta])
        p_rel = relative(p_poses[i], p_poses[i + delta])
        err = compose(inverse(g_rel), p_rel)
        t_sq.append(float(err.translation @ err.translation))
        r_sq.append(rotation_angle_deg(err.rotation) ** 2)
    return (float(np.sqrt(np.mean(t_sq))), float(np.sqrt(np.mean(r_sq))))


def pose_metrics(pred: Trajectory, gt: Trajectory, delta: int = 1,
                 rmse: bool = True) -> PoseMetrics:
    """ATE plus both RPE components in one report."""
    trans, rot = rpe(pred, gt, delta)
    return PoseMetrics(ate_rmse=ate(pred, gt, rmse=rmse),
                       rpe_trans=trans, rpe_rot=rot)


def _joint_mask(pred: DepthSequence, gt: DepthSequence) -> np.ndarray:
    if pred.values.shape != gt.values.shape:
        raise DimensionMismatch(
            f"pred {pred.values.shape} vs gt {gt.values.shape}")
    return pred.valid & gt.valid


def depth_align_scale_shift(pred: DepthSequence, gt: DepthSequence,
                            per_frame: bool = False):
    """Least-squares (scale, shift) minimizing ||scale * pred + shift - gt||^2
    over jointly valid pixels.

    One global pair per sequence by default; ``per_frame=True`` instead fits
    each frame separately and returns two arrays of length N.
    """
    joint = _joint_mask(pred, gt)
    if per_frame:
        out = [_fit_scale_shift(pred.values[i][joint[i]],
                                gt.values[i][joint[i]])
               for i in range(pred.frames)]
        return np.array([s for s, _ in out]), np.array([b for _, b in out])
    return _fit_scale_shift(pred.values[joint], gt.values[joint])


def _fit_scale_shift(p: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    if p.size < 2:
        raise TooFewValidPixels(
            f"scale/shift fit needs >= 2 jointly valid pixels, got {p.size}")
    pm = p.mean()
    gm = g.mean()
    var = float(np.mean((p - pm) ** 2))
    if var < 1e-24:
        raise DegenerateConstantPred(
            "predicted depth is constant; scale is unobservable")
    s = float(np.mean((p - pm) * (g - gm))) / var
    return s, float(gm - s * pm)


def depth_metrics(pred: DepthSequence, gt: DepthSequence, align: bool = True,
                  per_frame: bool = False) -> DepthMetrics:
    """Abs Rel and delta < 1.25 over jointly valid pixels.

    With ``align`` (default) predictions are first scale/shift aligned to the
    reference. Aligned values that come out nonpositive cannot form a depth
    ratio; they count as outliers for delta and are skipped by Abs Rel's
    per-pixel division only when gt is zero (which valid gt never is).
    """
    joint = _joint_mask(pred, gt)
    n = int(np.count_nonzero(joint))
    if n == 0:
        raise NoValidPixels("no jointly valid pixels")
    g = gt.values[joint]

    if align:
        if per_frame:
            scales, shifts = depth_align_scale_shift(pred, gt, per_frame=True)
            aligned = np.concatenate(
                [scales[i] * pred.values[i][joint[i]] + shifts[i]
                 for i in range(pred.frames)])
            g = np.concatenate([gt.values[i][joint[i]]
                                for i in range(gt.frames)])
            scale, shift = float(np.mean(scales)), float(np.mean(shifts))
        else:
            scale, shift = depth_align_scale_shift(pred, gt)
            aligned = scale * pred.values[joint] + shift
    else:
        scale, shift = 1.0, 0.0
        aligned = pred.values[joint]

    abs_rel = float(np.mean(np.abs(aligned - g) / g))
    pos = aligned > 0
    ratio = np.maximum(aligned[pos] / g[pos], g[pos] / aligned[pos])
    delta_125 = float(np.count_nonzero(ratio < 1.25)) / n
    return DepthMetrics(abs_rel=abs_rel, delta_125=delta_125,
                        scale=scale, shift=shift, valid_count=n)
