"""Bit-exact serialization for pointmaps, depth, trajectories, and intrinsics.

Binary container (all little-endian regardless of host):

    bytes  0..3   magic: b"P4D\\0" for pointmaps, b"D4D\\0" for depth
    bytes  4..5   version, u16 (currently 1)
    bytes  6..7   flags, u16 (bit 0: normalized pointmap)
    bytes  8..19  n_frames, height, width: u32 each
    bytes 20..27  norm_scale, f64
    payload       n_frames*height*width*channels f32 values, frame-major,
                  row-major, channel-interleaved (x, y, z for pointmaps)
    mask          ceil(n_frames*height*width / 8) bytes, LSB-first bit per
                  pixel in the same pixel order

Values are f32 on disk and f64 in memory; invalid pixels are stored as the
sentinel so identical data always produces identical bytes. Readers reject
structural violations with typed errors instead of truncating silently.

Trajectories use the plain-text convention of the RGB-D evaluation ecosystem:
one line per frame, ``timestamp tx ty tz qx qy qz qw`` (camera-to-world,
quaternion in x, y, z, w order), 17 significant digits. Intrinsics are a
single line ``f cx cy width height``.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (
    BadMagic,
    DimOverflow,
    FormatError,
    NonIncreasingTimestamps,
    NonUnitQuaternion,
    ParseError,
    TruncatedFile,
    VersionUnsupported,
)
from .geometry import Intrinsics, RigidPose
from .pointmap import DepthSequence, PointmapSequence, Trajectory

POINTMAP_MAGIC = b"P4D\0"
DEPTH_MAGIC = b"D4D\0"
_VERSION = 1
_FLAG_NORMALIZED = 1
_HEADER = struct.Struct("<4sHHIIId")
_MAX_ELEMENTS = 1 << 36  # sanity cap on n_frames * height * width


# --- quaternion helpers (rotations live as matrices everywhere else) --------

def _quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (x, y, z, w) from a rotation matrix, w >= 0."""
    m = np.asarray(r, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s, 0.25 * s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([0.25 * s, (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 1] + m[1, 0]) / s, 0.25 * s,
                      (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s,
                      0.25 * s, (m[1, 0] - m[0, 1]) / s])
    q /= np.linalg.norm(q)
    if q[3] < 0 or (q[3] == 0 and (q[np.nonzero(q)[0][0]] < 0)):
        q = -q
    return q


def _matrix_from_quat(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


# --- binary container ---------------------------------------------------------

def _check_dims(n: int, height: int, width: int):
    if n <= 0 or height <= 0 or width <= 0:
        raise DimOverflow(f"dimensions must be positive, got {(n, height, width)}")
    if n * height * width > _MAX_ELEMENTS:
        raise DimOverflow(f"{n}x{height}x{width} exceeds the element cap")


def _write_container(path, magic: bytes, values: np.ndarray,
                     valid: np.ndarray, flags: int, norm_scale: float):
    n, height, width = valid.shape
    _check_dims(n, height, width)
    header = _HEADER.pack(magic, _VERSION, flags, n, height, width, norm_scale)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    mask = np.packbits(valid.reshape(-1), bitorder="little").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(mask)


def _read_container(path, magic: bytes, channels: int):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedFile("file shorter than the header", len(data))
    got_magic, version, flags, n, height, width, norm_scale = \
        _HEADER.unpack_from(data)
    if got_magic != magic:
        raise BadMagic(f"expected magic {magic!r}, got {got_magic!r}")
    if version != _VERSION:
        raise VersionUnsupported(f"version {version} not supported")
    _check_dims(n, height, width)
    count = n * height * width
    payload_end = _HEADER.size + count * channels * 4
    mask_end = payload_end + (count + 7) // 8
    if len(data) < mask_end:
        raise TruncatedFile("payload or mask incomplete", len(data))

    values = np.frombuffer(data, dtype="<f4", count=count * channels,
                           offset=_HEADER.size).astype(np.float64)
    bits = np.frombuffer(data, dtype=np.uint8, count=(count + 7) // 8,
                         offset=payload_end)
    valid = np.unpackbits(bits, bitorder="little")[:count].astype(bool)
    shape = (n, height, width) if channels == 1 else (n, height, width, channels)
    return (values.reshape(shape), valid.reshape((n, height, width)),
            flags, norm_scale)


def write_pointmap(path, p: PointmapSequence) -> None:
    flags = _FLAG_NORMALIZED if p.norm_scale != 1.0 else 0
    _write_container(path, POINTMAP_MAGIC, p.points, p.valid, flags,
                     p.norm_scale)


def read_pointmap(path) -> PointmapSequence:
    points, valid, _, norm_scale = _read_container(path, POINTMAP_MAGIC, 3)
    if not np.all(np.isfinite(points[valid])):
        raise FormatError("non-finite values at valid pixels")
    if not (np.isfinite(norm_scale) and norm_scale > 0):
        raise FormatError(f"invalid norm_scale {norm_scale}")
    return PointmapSequence(points, valid, norm_scale=norm_scale)


def write_depth(path, d: DepthSequence) -> None:
    _write_container(path, DEPTH_MAGIC, d.values, d.valid, 0, 1.0)


def read_depth(path) -> DepthSequence:
    values, valid, _, _ = _read_container(path, DEPTH_MAGIC, 1)
    ok = values[valid]
    if ok.size and not (np.all(np.isfinite(ok)) and np.all(ok > 0)):
        raise FormatError("valid depth values must be finite and positive")
    return DepthSequence(values, valid)


# --- trajectory text -----------------------------------------------------------

def write_trajectory(path, traj: Trajectory) -> None:
    lines = []
    for ts, pose in zip(traj.timestamps, traj.poses):
        q = _quat_from_matrix(pose.rotation)
        t = pose.translation
        fields = [ts, t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
        lines.append(" ".join(f"{v:.17g}" for v in fields))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_floats(tokens, line_text: str, line_no: int) -> list[float]:
    out = []
    for tok in tokens:
        try:
            out.append(float(tok))
        except ValueError:
            col = line_text.index(tok) + 1
            raise ParseError(f"cannot parse number {tok!r}", line_no, col) \
                from None
    return out


def read_trajectory(path) -> Trajectory:
    """Parse a trajectory file; '#' comments and blank lines are skipped.

    Quaternions are normalized on read; a norm off by more than 1e-3 or a
    non-increasing timestamp is rejected.
    """
    poses = []
    stamps = []
    with open(path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 8:
                raise ParseError(
                    f"expected 8 fields, got {len(tokens)}", line_no, 1)
            vals = _parse_floats(tokens, raw, line_no)
            ts = vals[0]
            q = np.array(vals[4:8])
            norm = float(np.linalg.norm(q))
            if abs(norm - 1.0) > 1e-3:
                raise NonUnitQuaternion(
                    f"quaternion norm {norm:.6f} on line {line_no}")
            if stamps and ts <= stamps[-1]:
                raise NonIncreasingTimestamps(
                    f"timestamp {ts!r} on line {line_no} does not increase")
            stamps.append(ts)
            poses.append(RigidPose(_matrix_from_quat(q / norm),
                                   np.array(vals[1:4])))
    if not poses:
        raise ParseError("trajectory file contains no poses", 1, 1)
    return Trajectory(tuple(poses), np.array(stamps))


# --- intrinsics text -------------------------------------------------------------

def write_intrinsics(path, k: Intrinsics, width: int, height: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"{k.focal:.17g} {k.cx:.17g} {k.cy:.17g} "
                 f"{int(width)} {int(height)}\n")


def read_intrinsics(path) -> tuple[Intrinsics, int, int]:
    with open(path, "r") as fh:
        raw = fh.readline()
    tokens = raw.split()
    if len(tokens) != 5:
        raise ParseError(f"expected 5 fields, got {len(tokens)}", 1, 1)
    vals = _parse_floats(tokens, raw, 1)
    focal, cx, cy, width, height = vals
    if focal <= 0:
        raise ParseError(f"focal must be positive, got {focal}", 1,
                         raw.index(tokens[0]) + 1)
    if width <= 0 or height <= 0 or width != int(width) or height != int(height):
        raise ParseError("width and height must be positive integers", 1, 1)
    return Intrinsics(focal, cx, cy), int(width), int(height)
