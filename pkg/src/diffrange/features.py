"""Network input assembly and the BerHu regression loss.

Overlay: the three keyframe crops are converted to luminance, scaled by a
common factor so the tallest box becomes ``OVERLAY_SIZE`` pixels high,
centre-padded (zeros) or centre-cropped to a square, and stacked as channels
in chronological order.

Side vector (34 values, float order fixed)::

    [0:27]   IMU block, per keyframe t0, t1, t2: velocity xyz, acceleration xyz,
             angular acceleration xyz
    [27:33]  box centres (u, v) per keyframe, as fractions of image width/height
    [33]     analytic range at the latest keyframe, or -1 when degenerate

Feature container (little endian)::

    offset  size  field
    0       4     magic b"DRFB"
    4       2     version (uint16, = 1)
    6       2     flags (uint16): bit 0 target present, bit 1 analytic degenerate
    8       12    overlay shape C, H, W (3 x uint32)
    20      4     side vector length (uint32)
    24      4*CHW overlay, float32, C-order
    ...     4*L   side vector, float32
    ...     12    target x, y, z (float32), only when flag bit 0 is set
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DegeneratePatch, EmptyBatch, NonPositiveC
from .solver import DistanceEstimate

OVERLAY_SIZE = 224
SIDE_LENGTH = 34
DEGENERATE_SENTINEL = -1.0
LUMA = (0.299, 0.587, 0.114)

MAGIC = b"DRFB"
VERSION = 1
FLAG_TARGET = 1
FLAG_DEGENERATE = 2
_HEADER = struct.Struct("<4sHHIIII")


@dataclass(frozen=True, eq=False)
class GrayPatch:
    pixels: np.ndarray  # (height, width), values in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] == 0 or px.shape[1] == 0:
            raise DegeneratePatch(f"patch must be a non-empty 2D array, got shape {px.shape}")
        if px.min() < 0 or px.max() > 1:
            raise ValueError("patch values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def to_gray(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]


def read_image(path) -> np.ndarray:
    """Luminance in [0, 1] from a PGM/PNG (8/16-bit gray or RGB)."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / (65535.0 if im.mode.startswith("I;16") else max(arr.max(), 1.0))
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        return to_gray(np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0)


def write_pgm(path, gray: np.ndarray) -> None:
    """Write an 8-bit binary PGM (P5) from values in [0, 1]."""
    arr = np.clip(np.round(np.asarray(gray, float) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def crop_patch(image: np.ndarray, bbox) -> GrayPatch:
    """Crop the pixel rows/columns covered by ``bbox`` (left, top, right, bottom)."""
    h, w = image.shape[:2]
    left, top, right, bottom = bbox
    x0, y0 = max(int(math.floor(left)), 0), max(int(math.floor(top)), 0)
    x1, y1 = min(int(math.ceil(right)), w), min(int(math.ceil(bottom)), h)
    if x1 <= x0 or y1 <= y0:
        raise DegeneratePatch(f"bbox {bbox} has no pixels inside a {w}x{h} image")
    return GrayPatch(image[y0:y1, x0:x1])


def _round_half_up(x: float) -> int:
    return max(1, int(math.floor(x + 0.5)))


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    in_h, in_w = img.shape

    def axis(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    r0, r1, fr = axis(out_h, in_h)
    c0, c1, fc = axis(out_w, in_w)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def _center_fit(img: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, size), dtype=np.float64)
    h, w = img.shape
    # source window (crop) and destination offset (pad), per axis
    sy, dy = max((h - size) // 2, 0), max((size - h) // 2, 0)
    sx, dx = max((w - size) // 2, 0), max((size - w) // 2, 0)
    ch, cw = min(h, size), min(w, size)
    out[dy:dy + ch, dx:dx + cw] = img[sy:sy + ch, sx:sx + cw]
    return out


def make_overlay(patches: Sequence[GrayPatch], bbox_heights: Sequence[float], size: int = OVERLAY_SIZE) -> np.ndarray:
    """Return a float32 array of shape (3, size, size), channels in t0, t1, t2 order."""
    if len(patches) != 3 or len(bbox_heights) != 3:
        raise ValueError("need exactly three patches and heights")
    if any(not h > 0 for h in bbox_heights):
        raise DegeneratePatch(f"bbox heights must be positive: {tuple(bbox_heights)}")
    scale = size / max(bbox_heights)
    channels = []
    for patch in patches:
        if not isinstance(patch, GrayPatch):
            patch = GrayPatch(patch)
        out_h = _round_half_up(patch.height * scale)
        out_w = _round_half_up(patch.width * scale)
        resized = resize_bilinear(patch.pixels, out_h, out_w)
        channels.append(_center_fit(resized, size))
    return np.stack(channels).astype(np.float32)


@dataclass(frozen=True, eq=False)
class SideVector:
    values: np.ndarray
    degenerate: bool = False
    measured_acceleration: bool = True


def make_side_vector(imu: Sequence[float], centers: Sequence[Sequence[float]], analytic: DistanceEstimate,
                     measured_acceleration: bool = True) -> SideVector:
    imu = np.asarray(imu, dtype=np.float64).ravel()
    if imu.size != 27:
        raise ValueError(f"IMU block must have 27 values, got {imu.size}")
    c = np.asarray(centers, dtype=np.float64)
    if c.shape != (3, 2):
        raise ValueError(f"need three (u, v) centres, got shape {c.shape}")
    d2 = analytic.range if analytic.ok else DEGENERATE_SENTINEL
    values = np.concatenate([imu, c.ravel(), [d2]])
    return SideVector(values, degenerate=not analytic.ok, measured_acceleration=measured_acceleration)


@dataclass(frozen=True, eq=False)
class FeatureBundle:
    overlay: np.ndarray
    side: SideVector
    target: Optional[tuple[float, float, float]] = None
    meta: dict = field(default_factory=dict)


def bundle_bytes(bundle: FeatureBundle) -> bytes:
    overlay = np.ascontiguousarray(bundle.overlay, dtype="<f4")
    if overlay.shape != (3, OVERLAY_SIZE, OVERLAY_SIZE):
        raise ValueError(f"overlay has shape {overlay.shape}")
    side = np.ascontiguousarray(bundle.side.values, dtype="<f4")
    flags = (FLAG_TARGET if bundle.target is not None else 0) | (FLAG_DEGENERATE if bundle.side.degenerate else 0)
    parts = [_HEADER.pack(MAGIC, VERSION, flags, *overlay.shape, side.size), overlay.tobytes(), side.tobytes()]
    if bundle.target is not None:
        parts.append(np.asarray(bundle.target, dtype="<f4").tobytes())
    return b"".join(parts)


def read_bundle(data: bytes) -> FeatureBundle:
    magic, version, flags, c, h, w, n = _HEADER.unpack_from(data, 0)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a feature container (bad magic or version)")
    off = _HEADER.size
    overlay = np.frombuffer(data, dtype="<f4", count=c * h * w, offset=off).reshape(c, h, w)
    off += 4 * c * h * w
    side = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
    off += 4 * n
    target = None
    if flags & FLAG_TARGET:
        target = tuple(float(v) for v in np.frombuffer(data, dtype="<f4", count=3, offset=off))
        off += 12
    if off != len(data):
        raise ValueError(f"trailing bytes in container ({len(data) - off})")
    return FeatureBundle(overlay.astype(np.float32), SideVector(side, bool(flags & FLAG_DEGENERATE)), target)


def write_bundle(path, bundle: FeatureBundle) -> str:
    """Write the container and return its sha256 hex digest."""
    data = bundle_bytes(bundle)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def berhu(residual, c):
    """Reverse Huber loss and its derivative with respect to the residual.

    ``|r|`` for ``|r| <= c``, ``(r^2 + c^2) / (2c)`` otherwise.
    """
    if not c > 0:
        raise NonPositiveC(f"c must be positive, got {c}")
    r = np.asarray(residual, dtype=np.float64)
    a = np.abs(r)
    small = a <= c
    value = np.where(small, a, (r * r + c * c) / (2.0 * c))
    grad = np.where(small, np.sign(r), r / c)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def data_loss(phi, phi_star):
    """Batch loss ``mean over samples and axes of berhu(phi - phi_star, c)``.

    ``c = 0.2 * max|phi - phi_star|`` over the whole batch and is held
    constant for the gradient.  Returns ``(loss, dloss/dphi)``.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    phi_star = np.atleast_2d(np.asarray(phi_star, dtype=np.float64))
    if phi.size == 0:
        raise EmptyBatch("empty batch")
    if phi.shape != phi_star.shape or phi.shape[-1] != 3:
        raise ValueError(f"expected matching (N, 3) arrays, got {phi.shape} and {phi_star.shape}")
    r = phi - phi_star
    c = 0.2 * float(np.max(np.abs(r)))
    if c == 0.0:
        return 0.0, np.zeros_like(phi)
    value, grad = berhu(r, c)
    denom = 3.0 * phi.shape[0]
    return float(math.fsum(value.ravel()) / denom), grad / denom
