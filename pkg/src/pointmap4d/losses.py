"""Masked reconstruction and divergence losses for scoring pointmaps.

The reconstruction term is a Huber penalty on the per-pixel L2 residual norm
between predicted and reference pointmaps, averaged over valid pixels only so
the value is resolution-independent. The divergence term is the closed-form
KL of a diagonal Gaussian against the standard normal. Defaults: beta = 1.0
(Huber knee), lambda_kl = 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    LengthMismatch,
    MaskMismatch,
    NoValidPoints,
)
from .pointmap import PointmapSequence

DEFAULT_BETA = 1.0
DEFAULT_LAMBDA_KL = 1e-6


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss and its components; total = reconstruction + lambda_kl * kl."""

    reconstruction: float
    kl: float
    total: float
    valid_count: int


def huber_elementwise(residual_norm, beta: float = DEFAULT_BETA):
    """Huber penalty of a nonnegative residual norm r.

    Returns 0.5 * r**2 for r < beta and r - 0.5 * beta otherwise; the two
    branches meet at r = beta when beta == 1. Accepts scalars or arrays.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    r = np.asarray(residual_norm, dtype=float)
    out = np.where(r < beta, 0.5 * r * r, r - 0.5 * beta)
    return float(out) if np.isscalar(residual_norm) or out.ndim == 0 else out


def pointmap_reconstruction_loss(pred: PointmapSequence, gt: PointmapSequence,
                                 beta: float = DEFAULT_BETA) -> tuple[float, int]:
    """Mean Huber loss of per-pixel residual norms over valid pixels.

    Returns (value, valid_count). Both maps must agree in shape and carry
    identical validity masks; invalid pixels never influence the value.
    """
    if pred.points.shape != gt.points.shape:
        raise DimensionMismatch(
            f"pred shape {pred.points.shape} != gt shape {gt.points.shape}")
    if not np.array_equal(pred.valid, gt.valid):
        raise MaskMismatch("pred and gt validity masks differ")
    mask = pred.valid
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise NoValidPoints("no valid pixels to compare")
    residual = np.linalg.norm(pred.points[mask] - gt.points[mask], axis=-1)
    return float(np.mean(huber_elementwise(residual, beta))), n


def gaussian_kl(mean, log_var) -> float:
    """KL divergence of N(mean, diag(exp(log_var))) from the standard normal.

    Closed form 0.5 * sum(exp(log_var) + mean^2 - 1 - log_var); zero exactly
    when mean = 0 and log_var = 0.
    """
    mu = np.asarray(mean, dtype=float).ravel()
    lv = np.asarray(log_var, dtype=float).ravel()
    if mu.shape != lv.shape:
        raise LengthMismatch(
            f"mean has length {mu.size} but log_var has length {lv.size}")
    return float(0.5 * np.sum(np.exp(lv) + mu * mu - 1.0 - lv))


def total_vae_loss(rec: float, kl: float,
                   lambda_kl: float = DEFAULT_LAMBDA_KL,
                   valid_count: int = 0) -> LossBreakdown:
    """Combine reconstruction and KL terms into the total objective."""
    for name, v in (("rec", rec), ("kl", kl), ("lambda_kl", lambda_kl)):
        if not (np.isfinite(v) and v >= 0):
            raise ValueError(f"{name} must be finite and nonnegative, got {v}")
    return LossBreakdown(reconstruction=float(rec), kl=float(kl),
                         total=float(rec + lambda_kl * kl),
                         valid_count=int(valid_count))
