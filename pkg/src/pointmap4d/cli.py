"""Command-line front end.

Subcommands:

    synth       render a synthetic scene to files (depth, trajectory,
                intrinsics, pointmap, dynamic mask)
    build       depth + trajectory + intrinsics -> pointmap file
    recover     pointmap file -> trajectory, intrinsics, depth + report
    eval-pose   predicted vs reference trajectory -> ate / rpe_trans / rpe_rot
    eval-depth  predicted vs reference depth -> abs_rel / delta_125 / scale / shift
    loss        reconstruction + KL objective between two pointmap files
    rf-demo     train the toy flow-matching model and report sampler accuracy

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
inconsistent inputs), 3 numerical failure (e.g. no pose consensus on some
frame). Every stochastic subcommand takes --seed and is byte-reproducible.
Reports go to stdout in readable form and, with --report PATH, as flat
``key=value`` lines.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io_formats, rectified_flow
from .errors import (
    AllPointsDegenerate,
    DegenerateConfiguration,
    DegenerateConstantPred,
    DegenerateTrajectory,
    FormatError,
    NoConsensus,
    NoGeometryVisible,
    Pointmap4DError,
)
from .evaluation import depth_metrics, pose_metrics
from .losses import gaussian_kl, pointmap_reconstruction_loss, total_vae_loss
from .pointmap import DepthSequence, build_pointmap, normalize_pointmap
from .recovery import RansacConfig, recover_all
from .synthetic import SceneSpec, corrupt_pointmap, generate

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERICAL_ERROR = 3

# Algorithmic failures on structurally sound inputs exit with 3; anything
# about the inputs themselves (shape, masks, file contents) exits with 2.
_NUMERICAL_ERRORS = (NoConsensus, DegenerateConfiguration, AllPointsDegenerate,
                     DegenerateTrajectory, DegenerateConstantPred,
                     NoGeometryVisible)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this toolkit reserves 2 for data
    errors, so remap usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _write_report(path, items):
    if path is None:
        return
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key}={value}\n")


def _fmt(value) -> str:
    return f"{value:.17g}" if isinstance(value, float) else str(value)


def _print_kv(items):
    for key, value in items:
        print(f"{key} = {_fmt(value)}")


# --- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        spec = SceneSpec(
            seed=args.seed, n_frames=args.frames, width=args.width,
            height=args.height, focal=args.focal, n_static_planes=args.planes,
            n_dynamic_spheres=args.spheres, camera_path=args.path,
            motion_scale=args.motion_scale,
            outlier_fraction=args.outlier_fraction,
            depth_noise_sigma=args.noise_sigma)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = generate(spec)
    io_formats.write_depth(out / "depth.d4d", scene.depth)
    io_formats.write_trajectory(out / "trajectory.txt", scene.trajectory)
    io_formats.write_intrinsics(out / "intrinsics.txt", scene.intrinsics,
                                spec.width, spec.height)
    # Dynamic mask rides in the validity channel of a depth container.
    io_formats.write_depth(
        out / "dynamic_mask.d4d",
        DepthSequence(np.ones_like(scene.depth.values), scene.dynamic_mask))

    # The stored pointmap is built from the serialized inputs so that a later
    # `build` on these exact files reproduces it byte for byte.
    depth = io_formats.read_depth(out / "depth.d4d")
    traj = io_formats.read_trajectory(out / "trajectory.txt")
    k, _, _ = io_formats.read_intrinsics(out / "intrinsics.txt")
    pmap = build_pointmap(depth, traj, k)
    if spec.outlier_fraction > 0 or spec.depth_noise_sigma > 0:
        pmap = corrupt_pointmap(pmap, spec.outlier_fraction,
                                spec.depth_noise_sigma, spec.seed)
    io_formats.write_pointmap(out / "pointmap.p4d", pmap)

    print(f"scene written to {out} "
          f"({spec.n_frames}x{spec.height}x{spec.width}, path={spec.camera_path}, "
          f"valid={int(np.count_nonzero(scene.depth.valid))} px)")
    return 0


def cmd_build(args) -> int:
    depth = io_formats.read_depth(args.depth)
    traj = io_formats.read_trajectory(args.trajectory)
    k, _, _ = io_formats.read_intrinsics(args.intrinsics)
    pmap = build_pointmap(depth, traj, k)
    if args.normalize:
        pmap = normalize_pointmap(pmap)
    io_formats.write_pointmap(args.out, pmap)
    print(f"pointmap written to {args.out} "
          f"(norm_scale={pmap.norm_scale:.17g})")
    return 0


def cmd_recover(args) -> int:
    pmap = io_formats.read_pointmap(args.pointmap)
    cfg = RansacConfig(iterations=args.iterations,
                       inlier_threshold=args.threshold, seed=args.seed,
                       refine=not args.no_refine)
    result = recover_all(pmap, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io_formats.write_trajectory(out / "trajectory.txt", result.trajectory)
    io_formats.write_intrinsics(out / "intrinsics.txt", result.intrinsics,
                                pmap.width, pmap.height)
    io_formats.write_depth(out / "depth.d4d", result.depth)

    items = [("focal", float(result.intrinsics.focal)),
             ("frames", pmap.frames),
             ("failed_frames", ",".join(map(str, result.failed_frames)))]
    items += [(f"inlier_ratio_{i}", float(r))
              for i, r in enumerate(result.per_frame_inlier_ratio)]
    _print_kv(items)
    _write_report(args.report, [(k, _fmt(v)) for k, v in items])

    if result.failed_frames:
        print(f"error: pose recovery failed on frames "
              f"{list(result.failed_frames)}; partial outputs written to {out}",
              file=sys.stderr)
        return NUMERICAL_ERROR
    print(f"recovery written to {out}")
    return 0


def cmd_eval_pose(args) -> int:
    pred = io_formats.read_trajectory(args.pred)
    gt = io_formats.read_trajectory(args.gt)
    m = pose_metrics(pred, gt, delta=args.delta, rmse=not args.ate_mean)
    items = [("ate", m.ate_rmse), ("rpe_trans", m.rpe_trans),
             ("rpe_rot", m.rpe_rot)]
    _print_kv(items)
    _write_report(args.report, [(k, _fmt(v)) for k, v in items])
    return 0


def cmd_eval_depth(args) -> int:
    pred = io_formats.read_depth(args.pred)
    gt = io_formats.read_depth(args.gt)
    m = depth_metrics(pred, gt, align=not args.no_align,
                      per_frame=args.per_frame)
    items = [("abs_rel", m.abs_rel), ("delta_125", m.delta_125),
             ("scale", m.scale), ("shift", m.shift)]
    _print_kv(items)
    _write_report(args.report, [(k, _fmt(v)) for k, v in items])
    return 0


def _parse_vector(text):
    try:
        return np.array([float(tok) for tok in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text!r}")


def cmd_loss(args) -> int:
    pred = io_formats.read_pointmap(args.pred)
    gt = io_formats.read_pointmap(args.gt)
    rec, count = pointmap_reconstruction_loss(pred, gt, beta=args.beta)
    if (args.kl_mean is None) != (args.kl_log_var is None):
        print("error: --kl-mean and --kl-log-var must be given together",
              file=sys.stderr)
        return USAGE_ERROR
    kl = 0.0
    if args.kl_mean is not None:
        kl = gaussian_kl(args.kl_mean, args.kl_log_var)
    breakdown = total_vae_loss(rec, kl, lambda_kl=args.lambda_kl,
                               valid_count=count)
    items = [("reconstruction", breakdown.reconstruction), ("kl", breakdown.kl),
             ("total", breakdown.total), ("valid_count", breakdown.valid_count)]
    _print_kv(items)
    _write_report(args.report, [(k, _fmt(v)) for k, v in items])
    return 0


def cmd_rf_demo(args) -> int:
    dataset, matrix, offset = rectified_flow.linear_gaussian_dataset(
        args.samples, args.dim, args.cond_dim, seed=args.seed)
    model = rectified_flow.LinearVelocityModel.zeros(args.dim, args.cond_dim)

    if args.grad_check:
        worst = _gradient_check(model, dataset, seed=args.seed)
        print(f"gradient check: max relative error {worst:.3e}")

    curve = []
    log_every = max(1, args.steps // 10) if args.steps else 1

    def on_step(step, loss):
        if step % log_every == 0:
            curve.append((step, loss))

    initial = rectified_flow.mean_dataset_loss(model, dataset,
                                               seed=args.seed + 1)
    if args.steps > 0:
        model = rectified_flow.train_toy(model, dataset, steps=args.steps,
                                         lr=args.lr, seed=args.seed,
                                         on_step=on_step)
    final = rectified_flow.mean_dataset_loss(model, dataset,
                                             seed=args.seed + 1)

    print(f"loss: initial {initial:.6f} -> final {final:.6f} "
          f"({args.steps} steps, lr {args.lr})")
    for step, loss in curve:
        print(f"  step {step:6d}  batch loss {loss:.6f}")

    # Sampler accuracy against the closed-form conditional mean.
    rng = np.random.default_rng(args.seed + 2)
    cond = rng.standard_normal(args.cond_dim)
    target = matrix @ cond + offset
    terminals = np.array([
        rectified_flow.euler_sample(model, cond,
                                    rng.standard_normal(args.dim),
                                    steps=args.sampling_steps)
        for _ in range(args.probe_samples)])
    err = float(np.linalg.norm(terminals.mean(axis=0) - target))
    print(f"sampler: {args.probe_samples} draws x {args.sampling_steps} steps, "
          f"conditional-mean L2 error {err:.4f}")

    items = [("initial_loss", initial), ("final_loss", final),
             ("cond_mean_error", err)]
    _write_report(args.report, [(k, _fmt(v)) for k, v in items])
    return 0


def _gradient_check(model, dataset, seed: int, trials: int = 20,
                    step: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central differences."""
    rng = np.random.default_rng(seed)
    d = model.latent_dim
    worst = 0.0
    for _ in range(trials):
        w = rng.standard_normal(model.weights.shape) * 0.3
        b = rng.standard_normal(d) * 0.3
        m = rectified_flow.LinearVelocityModel(w, b)
        h, cond = dataset[rng.integers(len(dataset))]
        eps = rng.standard_normal(d)
        t = float(rng.uniform())
        grad_w, grad_b = rectified_flow.fm_loss_gradient(m, h, cond, eps, t)
        for idx in np.ndindex(w.shape):
            wp, wm = w.copy(), w.copy()
            wp[idx] += step
            wm[idx] -= step
            fd = (rectified_flow.fm_loss(rectified_flow.LinearVelocityModel(wp, b), h, cond, eps, t)
                  - rectified_flow.fm_loss(rectified_flow.LinearVelocityModel(wm, b), h, cond, eps, t)) / (2 * step)
            denom = max(abs(fd), abs(grad_w[idx]), 1e-8)
            worst = max(worst, abs(fd - grad_w[idx]) / denom)
        for i in range(d):
            bp, bm = b.copy(), b.copy()
            bp[i] += step
            bm[i] -= step
            fd = (rectified_flow.fm_loss(rectified_flow.LinearVelocityModel(w, bp), h, cond, eps, t)
                  - rectified_flow.fm_loss(rectified_flow.LinearVelocityModel(w, bm), h, cond, eps, t)) / (2 * step)
            denom = max(abs(fd), abs(grad_b[i]), 1e-8)
            worst = max(worst, abs(fd - grad_b[i]) / denom)
    return worst


# --- parser ------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="pointmap4d",
                     description="Temporal pointmap toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene to files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=17)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=384)
    p.add_argument("--focal", type=float, default=500.0)
    p.add_argument("--planes", type=int, default=6,
                   help="static planes (6 = closed room)")
    p.add_argument("--spheres", type=int, default=2, help="dynamic spheres")
    p.add_argument("--path", choices=["orbit", "line", "spline"],
                   default="orbit")
    p.add_argument("--motion-scale", type=float, default=1.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0,
                   help="corrupt this fraction of pointmap points")
    p.add_argument("--noise-sigma", type=float, default=0.0,
                   help="pointmap noise as a fraction of scene scale")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build a pointmap from depth/trajectory/intrinsics")
    p.add_argument("--depth", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True, help="output pointmap file")
    p.add_argument("--normalize", action="store_true",
                   help="rescale so the mean valid-point distance is 1")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("recover", help="recover intrinsics/poses/depth from a pointmap")
    p.add_argument("--pointmap", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iterations", type=int, default=512)
    p.add_argument("--threshold", type=float, default=2.0,
                   help="inlier threshold in pixels at 512x384")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("eval-pose", help="trajectory metrics: ate, rpe_trans, rpe_rot")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--delta", type=int, default=1, help="RPE frame step")
    p.add_argument("--ate-mean", action="store_true",
                   help="report mean ATE instead of RMSE")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser("eval-depth", help="depth metrics: abs_rel, delta_125")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--no-align", action="store_true",
                   help="skip scale/shift alignment")
    p.add_argument("--per-frame", action="store_true",
                   help="fit scale/shift per frame instead of per sequence")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("loss", help="reconstruction + KL objective between two pointmaps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--lambda-kl", type=float, default=1e-6)
    p.add_argument("--kl-mean", type=_parse_vector, default=None,
                   help="comma-separated latent mean for the KL term")
    p.add_argument("--kl-log-var", type=_parse_vector, default=None,
                   help="comma-separated latent log-variance for the KL term")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("rf-demo", help="toy flow-matching training demo")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--cond-dim", type=int, default=8)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampling-steps", type=int, default=100)
    p.add_argument("--probe-samples", type=int, default=2000)
    p.add_argument("--grad-check", action="store_true",
                   help="verify the analytic gradient against finite differences")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_rf_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except (FormatError, Pointmap4DError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
