"""KITTI tracking labels and oxts IMU records.

Label lines have 17 whitespace-separated columns::

    frame track_id type truncated occluded alpha
    bbox_left bbox_top bbox_right bbox_bottom
    height width length x y z rotation_y

Tracker result files may append an 18th ``score`` column.

oxts lines have 30 columns; the consumed ones (0-based) are
``vf vl vu`` = 8..10 (velocity, forward/left/up), ``af al au`` = 14..16
(acceleration) and ``wf wl wu`` = 20..22 (angular rate).  One line per frame,
line ``i`` is frame ``i``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .errors import ParseError, RangeError
from .kinematics import unit_ray

EXCLUDED_TYPES = frozenset({"Misc", "DontCare"})

LABEL_COLUMNS = (
    "frame", "track_id", "type", "truncated", "occluded", "alpha",
    "bbox_left", "bbox_top", "bbox_right", "bbox_bottom",
    "height", "width", "length", "x", "y", "z", "rotation_y",
)

OXTS_COLUMNS = (
    "lat", "lon", "alt", "roll", "pitch", "yaw",
    "vn", "ve", "vf", "vl", "vu",
    "ax", "ay", "az", "af", "al", "au",
    "wx", "wy", "wz", "wf", "wl", "wu",
    "pos_accuracy", "vel_accuracy", "navstat", "numsats", "posmode", "velmode", "orimode",
)
VELOCITY_COLS = (8, 9, 10)
ACCEL_COLS = (14, 15, 16)
RATE_COLS = (20, 21, 22)

TextSource = Union[str, Path, TextIO, Iterable[str]]


@dataclass(frozen=True)
class LabelRecord:
    frame: int
    track_id: int
    object_type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]  # h, w, l
    location: tuple[float, float, float]  # bottom centre, camera coordinates
    rotation_y: float
    score: Optional[float] = None

    @property
    def excluded(self) -> bool:
        return self.object_type in EXCLUDED_TYPES

    @property
    def center(self) -> tuple[float, float, float]:
        """Centre of the 3D box (location is its bottom face; camera y points down)."""
        x, y, z = self.location
        return (x, y - self.dimensions[0] / 2.0, z)


@dataclass(frozen=True)
class ImuRecord:
    frame: int
    timestamp: float
    velocity: tuple[float, float, float]
    acceleration: Optional[tuple[float, float, float]]
    angular_rate: tuple[float, float, float]
    raw: tuple[float, ...] = ()


def _lines(src: TextSource):
    """Yield (source name, lines) for a path, open file, or iterable of lines."""
    if isinstance(src, (str, Path)):
        path = Path(src)
        with path.open("r", encoding="utf-8") as fh:
            return str(path), fh.read().splitlines()
    if isinstance(src, io.TextIOBase) or hasattr(src, "read"):
        return getattr(src, "name", None), src.read().splitlines()
    return None, [line.rstrip("\n") for line in src]


def _num(tok: str, lineno: int, col: int, source, kind=float):
    try:
        v = kind(tok)
    except ValueError:
        raise ParseError(lineno, col, f"not a number: {tok!r}", source) from None
    if kind is float and not math.isfinite(v):
        raise ParseError(lineno, col, f"non-finite value {tok!r}", source)
    return v


def parse_labels(src: TextSource, allow_score: bool = False) -> list[LabelRecord]:
    """Parse a KITTI tracking label (or tracker result) file, in file order."""
    source, lines = _lines(src)
    allowed = (17, 18) if allow_score else (17,)
    out = []
    for lineno, line in enumerate(lines, start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) not in allowed:
            want = " or ".join(map(str, allowed))
            raise ParseError(lineno, None, f"expected {want} fields, got {len(toks)}", source)
        f = [None] * len(toks)
        f[0] = _num(toks[0], lineno, 1, source, int)
        f[1] = _num(toks[1], lineno, 2, source, int)
        f[2] = toks[2]
        f[3] = _num(toks[3], lineno, 4, source)
        f[4] = _num(toks[4], lineno, 5, source, int)
        for i in range(5, len(toks)):
            f[i] = _num(toks[i], lineno, i + 1, source)
        bbox = tuple(f[6:10])
        if f[2] not in EXCLUDED_TYPES and not (bbox[0] < bbox[2] and bbox[1] < bbox[3]):
            raise ParseError(lineno, 7, f"bbox not ordered: {bbox}", source)
        out.append(
            LabelRecord(
                frame=f[0], track_id=f[1], object_type=f[2], truncated=f[3], occluded=f[4],
                alpha=f[5], bbox=bbox, dimensions=tuple(f[10:13]), location=tuple(f[13:16]),
                rotation_y=f[16], score=f[17] if len(toks) == 18 else None,
            )
        )
    return out


def _flag(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.6f}"


def serialize_labels(records: Sequence[LabelRecord]) -> str:
    """Inverse of :func:`parse_labels` using the devkit's ``%.6f`` convention."""
    lines = []
    for r in records:
        vals = [r.alpha, *r.bbox, *r.dimensions, *r.location, r.rotation_y]
        if r.score is not None:
            vals.append(r.score)
        head = f"{r.frame} {r.track_id} {r.object_type} {_flag(r.truncated)} {r.occluded}"
        lines.append(head + "".join(f" {v:.6f}" for v in vals) + "\n")
    return "".join(lines)


def parse_imu(src: TextSource, frame_rate: float = 10.0, timestamps: Optional[Sequence[float]] = None) -> list[ImuRecord]:
    """Parse an oxts file; timestamps default to ``frame / frame_rate``."""
    if not frame_rate > 0:
        raise ValueError("frame_rate must be positive")
    source, lines = _lines(src)
    out = []
    for lineno, line in enumerate(lines, start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != len(OXTS_COLUMNS):
            raise ParseError(lineno, None, f"expected {len(OXTS_COLUMNS)} fields, got {len(toks)}", source)
        vals = tuple(_num(t, lineno, i + 1, source) for i, t in enumerate(toks))
        frame = len(out)
        ts = frame / frame_rate if timestamps is None else float(timestamps[frame])
        out.append(
            ImuRecord(
                frame=frame,
                timestamp=ts,
                velocity=tuple(vals[i] for i in VELOCITY_COLS),
                acceleration=tuple(vals[i] for i in ACCEL_COLS),
                angular_rate=tuple(vals[i] for i in RATE_COLS),
                raw=vals,
            )
        )
    if timestamps is not None and len(timestamps) != len(out):
        raise ParseError(len(lines), None, f"{len(timestamps)} timestamps for {len(out)} records", source)
    return out


def _num_str(v: float) -> str:
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def serialize_imu(records: Sequence[ImuRecord]) -> str:
    return "".join(" ".join(_num_str(v) for v in r.raw) + "\n" for r in records)


def oxts_line(velocity=(0.0, 0.0, 0.0), acceleration=(0.0, 0.0, 0.0), angular_rate=(0.0, 0.0, 0.0)) -> str:
    """Build a synthetic oxts line with the consumed columns filled in."""
    vals = [0.0] * len(OXTS_COLUMNS)
    for cols, v in ((VELOCITY_COLS, velocity), (ACCEL_COLS, acceleration), (RATE_COLS, angular_rate)):
        for c, x in zip(cols, v):
            vals[c] = float(x)
    return " ".join(_num_str(v) for v in vals)


def _check_frame(records, frame, what="frame"):
    if not 0 <= frame < len(records):
        raise RangeError(f"{what} {frame} outside IMU coverage 0..{len(records) - 1}")


def camera_displacement(records: Sequence[ImuRecord], frame_a: int, frame_b: int) -> np.ndarray:
    """Trapezoidal integral of velocity from ``frame_a`` to ``frame_b`` (forward, left, up)."""
    if not frame_a < frame_b:
        raise RangeError(f"need frame_a < frame_b, got {frame_a}, {frame_b}")
    _check_frame(records, frame_a)
    _check_frame(records, frame_b)
    v = np.array([records[i].velocity for i in range(frame_a, frame_b + 1)], dtype=float)
    t = np.array([records[i].timestamp for i in range(frame_a, frame_b + 1)], dtype=float)
    dt = np.diff(t)[:, None]
    return ((v[1:] + v[:-1]) * 0.5 * dt).sum(axis=0)


def _central_diff(records, frame, getter) -> np.ndarray:
    if len(records) < 2:
        raise RangeError("need at least two IMU records to difference")
    _check_frame(records, frame)
    lo = max(frame - 1, 0)
    hi = min(frame + 1, len(records) - 1)
    a, b = records[lo], records[hi]
    return (np.asarray(getter(b), float) - np.asarray(getter(a), float)) / (b.timestamp - a.timestamp)


def angular_acceleration(records: Sequence[ImuRecord], frame: int) -> np.ndarray:
    """Central difference of angular rate; one-sided at the ends."""
    return _central_diff(records, frame, lambda r: r.angular_rate)


def acceleration(records: Sequence[ImuRecord], frame: int) -> tuple[np.ndarray, bool]:
    """Measured acceleration when present, else differenced velocity.

    Returns ``(value, measured)``.
    """
    _check_frame(records, frame)
    acc = records[frame].acceleration
    if acc is not None:
        return np.asarray(acc, float), True
    return _central_diff(records, frame, lambda r: r.velocity), False


def imu_features(records: Sequence[ImuRecord], frames: Sequence[int]) -> tuple[np.ndarray, bool]:
    """27 values: per keyframe (chronological) velocity xyz, acceleration xyz, angular acceleration xyz.

    The flag is False when any acceleration had to be differenced from velocity.
    """
    blocks = []
    measured = True
    for f in frames:
        _check_frame(records, f)
        acc, m = acceleration(records, f)
        measured &= m
        blocks.extend([np.asarray(records[f].velocity, float), acc, angular_acceleration(records, f)])
    return np.concatenate(blocks), measured


def vehicle_to_camera(vec) -> np.ndarray:
    """(forward, left, up) -> camera (right, down, forward), axes assumed aligned."""
    f, l, u = vec
    return np.array([-l, -u, f], dtype=float)


class EgoMotion:
    """Scalar camera advance toward an object between two frames.

    The integrated displacement is projected onto the unit viewing ray
    through the object's box centre at the later frame, using a nominal
    pinhole camera.
    """

    def __init__(self, records: Sequence[ImuRecord], focal_length: float, principal_point, image_size):
        self.records = records
        self.focal_length = focal_length
        self.principal_point = principal_point
        self.image_size = image_size

    def __call__(self, frame_a: int, frame_b: int, center_uv) -> float:
        disp = vehicle_to_camera(camera_displacement(self.records, frame_a, frame_b))
        u = center_uv[0] * self.image_size[0]
        v = center_uv[1] * self.image_size[1]
        return float(disp @ unit_ray((u, v), self.focal_length, self.principal_point))
