"""pointmap4d: temporal pointmap geometry toolkit.

Builds per-pixel world-coordinate maps (4D pointmaps) from depth, poses, and
intrinsics; scores reconstructions with masked Huber/KL losses; exercises the
straight-path flow-matching mechanism at toy scale; recovers intrinsics,
camera poses, and depth back from pointmaps; and evaluates trajectories and
depth against ground truth. A deterministic synthetic scene generator
provides exact oracles for all of it.
"""

from . import errors
from .geometry import (
    Intrinsics,
    Pixel,
    RigidPose,
    SimTransform,
    compose,
    inverse,
    project,
    rotation_angle_deg,
    unproject,
)
from .pointmap import (
    DepthSequence,
    PointmapSequence,
    Trajectory,
    apply_scale_to_camera,
    build_pointmap,
    normalize_pointmap,
    rebase_to_first_frame,
)
from .losses import (
    LossBreakdown,
    gaussian_kl,
    huber_elementwise,
    pointmap_reconstruction_loss,
    total_vae_loss,
)
from .rectified_flow import (
    LinearVelocityModel,
    euler_sample,
    fm_loss,
    fm_loss_gradient,
    linear_gaussian_dataset,
    mean_dataset_loss,
    noise_interpolate,
    train_toy,
    velocity_target,
)
from .recovery import (
    RansacConfig,
    RecoveryResult,
    estimate_focal,
    estimate_pose_pnp,
    recover_all,
)
from .evaluation import (
    DepthMetrics,
    PoseMetrics,
    ate,
    depth_align_scale_shift,
    depth_metrics,
    pose_metrics,
    rpe,
    umeyama_align,
)
from .synthetic import (
    Plane,
    SceneSpec,
    Sphere,
    SyntheticScene,
    cast_depth,
    corrupt_pointmap,
    generate,
)
from .io_formats import (
    read_depth,
    read_intrinsics,
    read_pointmap,
    read_trajectory,
    write_depth,
    write_intrinsics,
    write_pointmap,
    write_trajectory,
)

__version__ = "0.1.0"
