"""Axial scene model and forward simulator.

Positions are measured along the camera-to-object axis, so a camera moving
towards the object has positive displacement and the object distance is
``d(t) = object(t) - camera(t)``.  Projected heights follow ``H = K / d``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import config
from .errors import BadFrameSequence, ConfigError, NonPositiveDistance
from .solver import DistanceEstimate, KeyframeTriple


@dataclass(frozen=True)
class Trajectory1D:
    """Polynomial motion ``x(t) = x0 + v t + a t^2 / 2 + j t^3 / 6``.

    ``polynomial_order`` bounds the degree; coefficients above it must be zero.
    Order 3 (``jerk``) exists so a camera can make higher-order object motion
    observable.
    """

    initial_position: float
    velocity: float = 0.0
    acceleration: float = 0.0
    jerk: float = 0.0
    polynomial_order: int = 3

    def __post_init__(self):
        if self.polynomial_order not in (0, 1, 2, 3):
            raise ValueError(f"polynomial_order must be 0..3, got {self.polynomial_order}")
        coeffs = (self.velocity, self.acceleration, self.jerk)
        for degree, c in enumerate(coeffs, start=1):
            if degree > self.polynomial_order and c != 0:
                raise ValueError(
                    f"order-{self.polynomial_order} trajectory has non-zero degree-{degree} term"
                )

    def position(self, t: float) -> float:
        return (
            self.initial_position
            + self.velocity * t
            + 0.5 * self.acceleration * t * t
            + self.jerk * t * t * t / 6.0
        )


@dataclass(frozen=True)
class NoiseSpec:
    height_noise_rel: float = 0.0
    imu_noise_abs: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.height_noise_rel < 0 or self.imu_noise_abs < 0:
            raise ValueError("noise standard deviations must be >= 0")

    @property
    def active(self) -> bool:
        return self.height_noise_rel > 0 or self.imu_noise_abs > 0


@dataclass(frozen=True)
class SceneSpec:
    camera: Trajectory1D
    object: Trajectory1D
    size_constant: float = 1.0
    frame_rate: float = 10.0
    noise: Optional[NoiseSpec] = None

    def __post_init__(self):
        if not self.size_constant > 0:
            raise ValueError("size_constant must be positive")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")

    def distance(self, t: float) -> float:
        return self.object.position(t) - self.camera.position(t)

    def to_text(self) -> str:
        values = {}
        for prefix, traj in (("camera", self.camera), ("object", self.object)):
            for name in ("initial_position", "velocity", "acceleration", "jerk", "polynomial_order"):
                values[f"{prefix}.{name}"] = getattr(traj, name)
        values["size_constant"] = self.size_constant
        values["frame_rate"] = self.frame_rate
        if self.noise is not None:
            values["noise.height_noise_rel"] = self.noise.height_noise_rel
            values["noise.imu_noise_abs"] = self.noise.imu_noise_abs
            values["noise.seed"] = self.noise.seed
        return config.format_kv(values)

    @classmethod
    def from_text(cls, text: str, source: str = "<scene>") -> "SceneSpec":
        raw = config.parse_kv(text, source)
        traj_keys = ("initial_position", "velocity", "acceleration", "jerk", "polynomial_order")
        known = {f"{p}.{k}" for p in ("camera", "object") for k in traj_keys}
        known |= {"size_constant", "frame_rate", "noise.height_noise_rel", "noise.imu_noise_abs", "noise.seed"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"{source}: unknown keys {unknown}")

        def traj(prefix):
            if f"{prefix}.initial_position" not in raw:
                raise ConfigError(f"{source}: missing {prefix}.initial_position")
            kw = {}
            for k in traj_keys:
                key = f"{prefix}.{k}"
                if key in raw:
                    kw[k] = config.coerce(raw[key], int if k == "polynomial_order" else float, key)
            return Trajectory1D(**kw)

        noise = None
        if any(k.startswith("noise.") for k in raw):
            noise = NoiseSpec(
                height_noise_rel=config.coerce(raw.get("noise.height_noise_rel", "0"), float, "noise.height_noise_rel"),
                imu_noise_abs=config.coerce(raw.get("noise.imu_noise_abs", "0"), float, "noise.imu_noise_abs"),
                seed=config.coerce(raw.get("noise.seed", "0"), int, "noise.seed"),
            )
        kw = {}
        for k in ("size_constant", "frame_rate"):
            if k in raw:
                kw[k] = config.coerce(raw[k], float, k)
        try:
            return cls(camera=traj("camera"), object=traj("object"), noise=noise, **kw)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from exc


def sample_scene(spec: SceneSpec, frame_indices: Sequence[int], track_id=0) -> KeyframeTriple:
    """Observe ``spec`` at the given (equally spaced) frames.

    Heights are ``K / d`` with optional multiplicative Gaussian noise; camera
    deltas are position differences with optional additive Gaussian noise.
    Ground-truth distances at every frame are attached to the result.
    """
    frames = [int(f) for f in frame_indices]
    if len(frames) < 2:
        raise BadFrameSequence("need at least two frames")
    steps = [b - a for a, b in zip(frames, frames[1:])]
    if any(s <= 0 for s in steps):
        raise BadFrameSequence(f"frame indices not strictly increasing: {frames}")
    if len(set(steps)) != 1:
        raise BadFrameSequence(f"frame indices not equally spaced: {frames}")

    times = [f / spec.frame_rate for f in frames]
    cam = [spec.camera.position(t) for t in times]
    dist = [spec.object.position(t) - c for t, c in zip(times, cam)]
    for f, d in zip(frames, dist):
        if not d > 0:
            raise NonPositiveDistance(f"object distance {d!r} at frame {f}")

    heights = [spec.size_constant / d for d in dist]
    deltas = [b - a for a, b in zip(cam, cam[1:])]
    noise = spec.noise
    if noise is not None and noise.active:
        rng = np.random.default_rng(noise.seed)
        h_eps = rng.standard_normal(len(heights))
        c_eps = rng.standard_normal(len(deltas))
        heights = [h * (1.0 + noise.height_noise_rel * e) for h, e in zip(heights, h_eps)]
        deltas = [c + noise.imu_noise_abs * e for c, e in zip(deltas, c_eps)]
        if any(not h > 0 for h in heights):
            raise NonPositiveDistance("height noise drove a projected height to <= 0")

    n = len(frames)
    return KeyframeTriple(
        heights=tuple(heights),
        camera_deltas=tuple(deltas),
        dt=steps[0] / spec.frame_rate,
        bbox_centers=((0.5, 0.5),) * n,
        frame_ids=tuple(frames),
        track_id=track_id,
        gt_distances=tuple(dist),
    )


def unit_ray(center_px, focal_length: float, principal_point) -> np.ndarray:
    """Unit viewing ray (camera frame: x right, y down, z forward)."""
    if not focal_length > 0:
        raise ValueError("focal_length must be positive")
    u, v = center_px
    cx, cy = principal_point
    ray = np.array([(u - cx) / focal_length, (v - cy) / focal_length, 1.0])
    return ray / np.linalg.norm(ray)


def ray_adapter(bbox_center, focal_length: float, principal_point, range_m: float, image_size=None):
    """Cartesian position at ``range_m`` along the ray through ``bbox_center``.

    ``bbox_center`` is in pixels, or in fractions of ``image_size`` (width,
    height) when that is given.
    """
    if not range_m > 0:
        raise ValueError("range must be positive")
    u, v = bbox_center
    if image_size is not None:
        u, v = u * image_size[0], v * image_size[1]
    x, y, z = range_m * unit_ray((u, v), focal_length, principal_point)
    return (float(x), float(y), float(z))


def with_cartesian(est: DistanceEstimate, bbox_center, focal_length, principal_point, image_size=None) -> DistanceEstimate:
    if not est.ok:
        return est
    return replace(est, cartesian=ray_adapter(bbox_center, focal_length, principal_point, est.range, image_size))
