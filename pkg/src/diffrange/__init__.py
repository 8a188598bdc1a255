"""Class-agnostic monocular range estimation from bounding-box size change and ego-motion."""

from .errors import DiffRangeError
from .kinematics import NoiseSpec, SceneSpec, Trajectory1D, ray_adapter, sample_scene
from .solver import (
    DistanceEstimate,
    KeyframeTriple,
    LinearSystem,
    SizeRatios,
    Status,
    build_system,
    estimate_triple,
    range_to_distance,
    size_ratios,
    solve,
    solve_q2_closed_form,
)

__all__ = [
    "DiffRangeError",
    "DistanceEstimate",
    "KeyframeTriple",
    "LinearSystem",
    "NoiseSpec",
    "SceneSpec",
    "SizeRatios",
    "Status",
    "Trajectory1D",
    "build_system",
    "estimate_triple",
    "range_to_distance",
    "ray_adapter",
    "sample_scene",
    "size_ratios",
    "solve",
    "solve_q2_closed_form",
]
