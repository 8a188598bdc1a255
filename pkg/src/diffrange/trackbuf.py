"""Per-track detection cache and keyframe selection."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Hashable, Optional

from .errors import DuplicateFrame, MissingAnnotation
from .solver import KeyframeTriple

# (frame_a, frame_b, normalized center at frame_b) -> scalar camera advance along the ray
CameraDeltaFn = Callable[[int, int, tuple[float, float]], float]


@dataclass(frozen=True)
class Detection:
    frame_id: int
    track_id: Hashable
    bbox: tuple[float, float, float, float]  # left, top, right, bottom (pixels)
    image_size: tuple[int, int]  # width, height
    class_label: Optional[str] = None
    truncated: Optional[bool] = None
    occluded: Optional[bool] = None
    gt_location: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        left, top, right, bottom = self.bbox
        if not (right > left and bottom > top):
            raise ValueError(f"degenerate bbox {self.bbox}")

    @property
    def height(self) -> float:
        return self.bbox[3] - self.bbox[1]

    @property
    def center(self) -> tuple[float, float]:
        left, top, right, bottom = self.bbox
        return ((left + right) / 2.0, (top + bottom) / 2.0)

    @property
    def normalized_center(self) -> tuple[float, float]:
        u, v = self.center
        return (u / self.image_size[0], v / self.image_size[1])


@dataclass(frozen=True)
class KeyframeScheme:
    lookback_frames: int = 10
    stride: int = 5
    frame_rate: float = 10.0

    def __post_init__(self):
        if self.stride <= 0 or self.lookback_frames <= 0:
            raise ValueError("stride and lookback must be positive")
        if self.lookback_frames % self.stride:
            raise ValueError("lookback must be divisible by stride")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")

    @property
    def n_intervals(self) -> int:
        return self.lookback_frames // self.stride

    @property
    def dt(self) -> float:
        return self.stride / self.frame_rate

    def keyframes(self, n: int) -> tuple[int, ...]:
        """Frames ``n - lookback, ..., n - stride, n`` in chronological order."""
        return tuple(n - k * self.stride for k in range(self.n_intervals, -1, -1))


def edge_filter(det: Detection) -> bool:
    """True to keep: boxes touching any image border are dropped."""
    left, top, right, bottom = det.bbox
    width, height = det.image_size
    return not (left <= 0 or top <= 0 or right >= width or bottom >= height)


def training_filter(det: Detection) -> bool:
    """True to keep: occluded or truncated detections are dropped."""
    if det.truncated is None or det.occluded is None:
        raise MissingAnnotation(
            f"track {det.track_id} frame {det.frame_id}: truncated/occluded flags missing"
        )
    return not (det.truncated or det.occluded)


def _zero_motion(frame_a, frame_b, center):
    return 0.0


class TrackCache:
    """Bounded per-track history that emits a triple once all keyframes are present.

    ``camera_delta`` supplies the scalar camera advance for each keyframe
    interval; the default assumes a static camera.  Memory per track is
    bounded by ``capacity`` frames (default ``lookback + 1``).
    """

    def __init__(
        self,
        scheme: KeyframeScheme = KeyframeScheme(),
        camera_delta: Optional[CameraDeltaFn] = None,
        capacity: Optional[int] = None,
    ):
        self.scheme = scheme
        self.capacity = scheme.lookback_frames + 1 if capacity is None else capacity
        if self.capacity < scheme.lookback_frames + 1:
            raise ValueError("capacity must cover the lookback window")
        self.camera_delta = camera_delta or _zero_motion
        self._tracks: dict[Hashable, OrderedDict[int, Detection]] = {}

    def __len__(self):
        return sum(len(h) for h in self._tracks.values())

    @property
    def n_tracks(self) -> int:
        return len(self._tracks)

    def get(self, track_id, frame_id) -> Optional[Detection]:
        return self._tracks.get(track_id, {}).get(frame_id)

    def ingest(self, det: Detection) -> list[KeyframeTriple]:
        history = self._tracks.setdefault(det.track_id, OrderedDict())
        prior = history.get(det.frame_id)
        if prior is not None:
            if prior.bbox != det.bbox:
                raise DuplicateFrame(
                    f"track {det.track_id} frame {det.frame_id}: conflicting boxes {prior.bbox} / {det.bbox}"
                )
            return []
        history[det.frame_id] = det
        if len(history) > 1 and det.frame_id < next(reversed(history)):
            history = OrderedDict(sorted(history.items()))
            self._tracks[det.track_id] = history
        newest = next(reversed(history))
        horizon = newest - self.capacity + 1
        while history and next(iter(history)) < horizon:
            history.popitem(last=False)

        frames = self.scheme.keyframes(det.frame_id)
        if any(f not in history for f in frames):
            return []
        return [self._make_triple([history[f] for f in frames])]

    def drop_stale(self, current_frame: int) -> int:
        """Forget tracks with no detection inside the window ending at ``current_frame``."""
        horizon = current_frame - self.capacity + 1
        stale = [tid for tid, h in self._tracks.items() if not h or next(reversed(h)) < horizon]
        for tid in stale:
            del self._tracks[tid]
        return len(stale)

    def _make_triple(self, dets: list[Detection]) -> KeyframeTriple:
        deltas = tuple(
            float(self.camera_delta(a.frame_id, b.frame_id, b.normalized_center))
            for a, b in zip(dets, dets[1:])
        )
        locations = None
        if all(d.gt_location is not None for d in dets):
            locations = tuple(tuple(float(v) for v in d.gt_location) for d in dets)
        distances = None
        if locations is not None:
            distances = tuple(sum(v * v for v in loc) ** 0.5 for loc in locations)
        return KeyframeTriple(
            heights=tuple(d.height for d in dets),
            camera_deltas=deltas,
            dt=self.scheme.dt,
            bbox_centers=tuple(d.normalized_center for d in dets),
            frame_ids=tuple(d.frame_id for d in dets),
            track_id=dets[-1].track_id,
            bboxes=tuple(tuple(float(v) for v in d.bbox) for d in dets),
            image_size=tuple(dets[-1].image_size),
            gt_locations=locations,
            gt_distances=distances,
        )
