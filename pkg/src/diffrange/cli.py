"""Command line front end: simulate | evaluate | export-features | ingest-check."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as cfgmod
from .alignment import assign
from .errors import DiffRangeError, NonPositiveDistance
from .features import FeatureBundle, crop_patch, make_overlay, make_side_vector, read_image, write_bundle
from .ingest import EgoMotion, LabelRecord, imu_features, parse_imu, parse_labels
from .kinematics import NoiseSpec, SceneSpec, Trajectory1D, sample_scene
from .metrics import AXES, EvalPair, binned_report, compute_metrics, dumps, format_binned_text, format_text
from .solver import estimate_triple
from .trackbuf import Detection, KeyframeScheme, TrackCache, edge_filter, training_filter

log = logging.getLogger("diffrange")

OUTPUT_ENV = "DIFFRANGE_OUTPUT_DIR"
DEFAULT_OUTPUT = "diffrange-out"

# KITTI tracking left colour camera, used when no calibration is supplied
KITTI_FOCAL = 721.5377
KITTI_PRINCIPAL = (609.5593, 172.854)
KITTI_IMAGE_SIZE = (1242, 375)


@dataclass
class SchemeFields:
    lookback: int = 10
    stride: int = 5
    fps: float = 10.0
    eps_singular: float = 1e-6

    def scheme(self) -> KeyframeScheme:
        return KeyframeScheme(self.lookback, self.stride, self.fps)

    def _check_scheme(self):
        try:
            self.scheme()
        except ValueError as exc:
            raise cfgmod.ConfigError(str(exc)) from None
        if not self.eps_singular > 0:
            raise cfgmod.ConfigError("eps_singular must be positive")


@dataclass
class SimulateConfig(SchemeFields):
    n_scenes: int = 1000
    motion_order: Optional[int] = None  # defaults to lookback/stride - 1
    range_min: float = 5.0
    range_max: float = 80.0
    object_speed_max: float = 2.0
    object_accel_max: float = 1.0
    camera_speed_min: float = 5.0
    camera_speed_max: float = 15.0
    camera_profile: str = "accelerating"
    camera_accel_min: float = 1.0
    camera_accel_max: float = 3.0
    camera_jerk_min: float = 2.0
    camera_jerk_max: float = 6.0
    height_noise: float = 0.0
    imu_noise: float = 0.0
    seed: int = 0
    bin_distance: float = 5.0
    bin_distance_change: float = 1.0
    bin_velocity_change: float = 0.5
    workers: int = 1

    def validate(self):
        self._check_scheme()
        q = self.scheme().n_intervals
        if self.motion_order is None:
            self.motion_order = q - 1
        if self.motion_order != q - 1:
            raise cfgmod.ConfigError(f"motion_order {self.motion_order} needs {self.motion_order + 1} intervals, scheme has {q}")
        if self.motion_order not in (0, 1, 2):
            raise cfgmod.ConfigError("motion_order must be 0, 1 or 2")
        if self.camera_profile not in ("accelerating", "constant"):
            raise cfgmod.ConfigError("camera_profile must be 'accelerating' or 'constant'")
        if self.n_scenes < 1 or self.workers < 1:
            raise cfgmod.ConfigError("n_scenes and workers must be >= 1")
        if not 0 < self.range_min < self.range_max:
            raise cfgmod.ConfigError("need 0 < range_min < range_max")
        if self.height_noise < 0 or self.imu_noise < 0:
            raise cfgmod.ConfigError("noise levels must be >= 0")


@dataclass
class DatasetFields(SchemeFields):
    labels: str = ""
    oxts: str = ""
    sequences: tuple[str, ...] = ()
    focal_length: float = KITTI_FOCAL
    principal_point: tuple[float, float] = KITTI_PRINCIPAL
    image_size: tuple[int, int] = KITTI_IMAGE_SIZE
    workers: int = 1

    def _check_dataset(self):
        self._check_scheme()
        if not self.labels or not self.oxts:
            raise cfgmod.ConfigError("labels and oxts paths are required")
        if self.workers < 1:
            raise cfgmod.ConfigError("workers must be >= 1")


@dataclass
class EvaluateConfig(DatasetFields):
    predictions: Optional[str] = None
    drop_truncated: bool = True
    bin_distance: float = 5.0
    bin_distance_change: float = 1.0
    bin_velocity_change: float = 0.5

    def validate(self):
        self._check_dataset()


@dataclass
class ExportConfig(DatasetFields):
    images: str = ""
    seed: int = 0

    def validate(self):
        self._check_dataset()
        if not self.images:
            raise cfgmod.ConfigError("images path is required")


# --------------------------------------------------------------------------- simulate


def _signed(rng, lo, hi, n):
    return rng.uniform(lo, hi, n) * rng.choice([-1.0, 1.0], n)


def make_ensemble(cfg: SimulateConfig) -> list[SceneSpec]:
    """Random scenes whose range at the latest keyframe is uniform in [range_min, range_max]."""
    rng = np.random.default_rng(cfg.seed)
    n, order = cfg.n_scenes, cfg.motion_order
    t_last = cfg.lookback / cfg.fps
    target = rng.uniform(cfg.range_min, cfg.range_max, n)
    cam_v = rng.uniform(cfg.camera_speed_min, cfg.camera_speed_max, n)
    cam_a = _signed(rng, cfg.camera_accel_min, cfg.camera_accel_max, n)
    cam_j = _signed(rng, cfg.camera_jerk_min, cfg.camera_jerk_max, n)
    obj_v = rng.uniform(-cfg.object_speed_max, cfg.object_speed_max, n)
    obj_a = rng.uniform(-cfg.object_accel_max, cfg.object_accel_max, n)
    seeds = rng.integers(0, 2**63 - 1, n)
    if cfg.camera_profile == "constant":
        cam_a[:] = 0.0
    if cfg.camera_profile == "constant" or order < 2:
        cam_j[:] = 0.0
    if order < 1:
        obj_v[:] = 0.0
    if order < 2:
        obj_a[:] = 0.0

    noise = None
    scenes = []
    for i in range(n):
        camera = Trajectory1D(0.0, float(cam_v[i]), float(cam_a[i]), float(cam_j[i]))
        drift = obj_v[i] * t_last + 0.5 * obj_a[i] * t_last**2
        d0 = float(target[i] + camera.position(t_last) - drift)
        obj = Trajectory1D(d0, float(obj_v[i]), float(obj_a[i]), 0.0, polynomial_order=order)
        if cfg.height_noise > 0 or cfg.imu_noise > 0:
            noise = NoiseSpec(cfg.height_noise, cfg.imu_noise, int(seeds[i]))
        scenes.append(SceneSpec(camera, obj, 1.0, cfg.fps, noise))
    return scenes


def _object_step_change(scene: SceneSpec, frames, fps) -> float:
    t = [f / fps for f in frames]
    steps = [scene.object.position(b) - scene.object.position(a) for a, b in zip(t, t[1:])]
    return abs(steps[-1] - steps[0]) / (t[1] - t[0])


def _simulate_one(args):
    scene, frames, cfg = args
    try:
        triple = sample_scene(scene, frames)
    except NonPositiveDistance:
        return None, None
    est = estimate_triple(triple, cfg.motion_order, cfg.eps_singular)
    if not est.ok:
        return est, None
    d = triple.gt_distances
    pair = EvalPair(
        d_gt=d[-1],
        d_pred=est.range,
        distance_change=abs(d[-1] - d[0]),
        velocity_change=_object_step_change(scene, frames, cfg.fps),
    )
    return est, pair


def _pmap(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _bins(pairs, cfg):
    widths = {
        "distance": cfg.bin_distance,
        "distance_change": cfg.bin_distance_change,
        "velocity_change": cfg.bin_velocity_change,
    }
    return {axis: binned_report(pairs, axis, widths[axis]) for axis in AXES}


def _summarise(pairs, counts, cfg, command) -> dict:
    metrics = compute_metrics(pairs) if pairs else None
    bins = _bins(pairs, cfg) if pairs else {}
    return {
        "command": command,
        "config": cfgmod.config_dict(cfg),
        "counts": counts,
        "metrics": metrics.to_dict() if metrics else None,
        "note": None if pairs else "no samples",
        "bins": {k: v.to_dict() for k, v in bins.items()},
        "_metrics_obj": metrics,
        "_bins_obj": bins,
    }


def cmd_simulate(cfg: SimulateConfig) -> dict:
    scheme = cfg.scheme()
    frames = scheme.keyframes(cfg.lookback)
    scenes = make_ensemble(cfg)
    results = _pmap(_simulate_one, [(s, frames, cfg) for s in scenes], cfg.workers)
    pairs = [p for _, p in results if p is not None]
    counts = {
        "scenes": len(scenes),
        "rejected": sum(e is None for e, _ in results),
        "ok": len(pairs),
        "degenerate": sum(e is not None and not e.ok for e, _ in results),
    }
    return _summarise(pairs, counts, cfg, "simulate")


# --------------------------------------------------------------------------- datasets


def _sequence_files(cfg: DatasetFields) -> list[tuple[str, Path, Path]]:
    labels = Path(cfg.labels)
    if labels.is_file():
        seqs = [labels.stem]
        label_path = lambda s: labels
    elif labels.is_dir():
        seqs = sorted(p.stem for p in labels.glob("*.txt"))
        label_path = lambda s: labels / f"{s}.txt"
    else:
        raise DiffRangeError(f"label path not found: {labels}")
    if cfg.sequences:
        seqs = [s for s in seqs if s in set(cfg.sequences)] if labels.is_dir() else seqs
        missing = set(cfg.sequences) - set(seqs)
        if missing and labels.is_dir():
            raise DiffRangeError(f"sequences not found under {labels}: {sorted(missing)}")
    oxts = Path(cfg.oxts)
    out = []
    for s in seqs:
        imu = oxts if oxts.is_file() else oxts / f"{s}.txt"
        if not imu.is_file():
            raise DiffRangeError(f"IMU file not found: {imu}")
        out.append((s, label_path(s), imu))
    return out


def _flag(v) -> Optional[bool]:
    return None if v < 0 else bool(v > 0)


def _detection(rec: LabelRecord, image_size, gt_location=None) -> Detection:
    return Detection(
        frame_id=rec.frame,
        track_id=rec.track_id,
        bbox=rec.bbox,
        image_size=tuple(image_size),
        class_label=rec.object_type,
        truncated=_flag(rec.truncated),
        occluded=_flag(rec.occluded),
        gt_location=gt_location,
    )


def _by_frame(records):
    out = defaultdict(list)
    for r in records:
        out[r.frame].append(r)
    return out


def _evaluate_sequence(args):
    seq, label_path, imu_path, cfg = args
    gts = [r for r in parse_labels(label_path) if not r.excluded]
    imu = parse_imu(imu_path, cfg.fps)
    scheme = cfg.scheme()
    cache = TrackCache(scheme, EgoMotion(imu, cfg.focal_length, cfg.principal_point, cfg.image_size))
    counts = defaultdict(int)

    gt_frames = _by_frame(gts)
    if cfg.predictions:
        pred_path = Path(cfg.predictions)
        pred_path = pred_path if pred_path.is_file() else pred_path / f"{seq}.txt"
        if not pred_path.is_file():
            raise DiffRangeError(f"prediction file not found: {pred_path}")
        preds = [r for r in parse_labels(pred_path, allow_score=True) if not r.excluded]
        dets = []
        for frame, frame_preds in sorted(_by_frame(preds).items()):
            frame_gts = gt_frames.get(frame, [])
            matches = assign(
                [p.bbox for p in frame_preds], [g.bbox for g in frame_gts],
                pred_ids=[p.track_id for p in frame_preds], gt_ids=[g.track_id for g in frame_gts],
            )
            matched = {i: frame_gts[j] for i, j, _ in matches}
            counts["matched"] += len(matched)
            counts["unmatched_predictions"] += len(frame_preds) - len(matched)
            for i, p in enumerate(frame_preds):
                g = matched.get(i)
                det = _detection(p, cfg.image_size, g.center if g else None)
                if g is not None:
                    det = replace(det, truncated=_flag(g.truncated), occluded=_flag(g.occluded))
                dets.append(det)
    else:
        dets = [_detection(g, cfg.image_size, g.center) for g in gts]

    dets.sort(key=lambda d: (d.frame_id, str(d.track_id)))
    pairs = []
    for det in dets:
        if not edge_filter(det):
            counts["edge_dropped"] += 1
            continue
        if cfg.drop_truncated and det.truncated:
            counts["truncated_dropped"] += 1
            continue
        for triple in cache.ingest(det):
            counts["triples"] += 1
            if triple.gt_distances is None:
                counts["no_ground_truth"] += 1
                continue
            est = estimate_triple(triple, None, cfg.eps_singular)
            if not est.ok:
                counts["degenerate"] += 1
                continue
            d = triple.gt_distances
            dD = [d[k] - d[k - 1] + triple.camera_deltas[k - 1] for k in range(1, len(d))]
            pairs.append(
                (
                    (seq, str(triple.track_id), triple.frame_ids[-1]),
                    EvalPair(d[-1], est.range, abs(d[-1] - d[0]), abs(dD[-1] - dD[0]) / triple.dt),
                )
            )
        cache.drop_stale(det.frame_id)
    return pairs, dict(counts)


def cmd_evaluate(cfg: EvaluateConfig) -> dict:
    work = [(s, lp, ip, cfg) for s, lp, ip in _sequence_files(cfg)]
    results = _pmap(_evaluate_sequence, work, cfg.workers)
    keyed = sorted((k, p) for pairs, _ in results for k, p in pairs)
    pairs = [p for _, p in keyed]
    counts = defaultdict(int)
    for _, c in results:
        for k, v in c.items():
            counts[k] += v
    counts["sequences"] = len(work)
    counts["ok"] = len(pairs)
    return _summarise(pairs, dict(sorted(counts.items())), cfg, "evaluate")


def _export_sequence(args):
    seq, label_path, imu_path, cfg, out_dir = args
    gts = [r for r in parse_labels(label_path) if not r.excluded]
    imu = parse_imu(imu_path, cfg.fps)
    image_dir = Path(cfg.images) / seq
    images = {}

    def image(frame):
        if frame not in images:
            path = image_dir / f"{frame:06d}.png"
            if not path.is_file():
                alt = path.with_suffix(".pgm")
                path = alt if alt.is_file() else path
            if not path.is_file():
                raise DiffRangeError(f"image not found: {path}")
            images[frame] = read_image(path)
        return images[frame]

    first = min((g.frame for g in gts), default=None)
    image_size = cfg.image_size
    if first is not None:
        h, w = image(first).shape
        image_size = (w, h)

    cache = TrackCache(cfg.scheme(), EgoMotion(imu, cfg.focal_length, cfg.principal_point, image_size))
    dropped = 0
    entries = []
    seq_dir = out_dir / seq
    for g in sorted(gts, key=lambda r: (r.frame, r.track_id)):
        det = _detection(g, image_size, g.center)
        if not training_filter(det):
            dropped += 1
            continue
        for triple in cache.ingest(det):
            frames = triple.frame_ids
            patches = [crop_patch(image(f), b) for f, b in zip(frames, triple.bboxes)]
            overlay = make_overlay(patches, triple.heights)
            imu_block, measured = imu_features(imu, frames)
            est = estimate_triple(triple, None, cfg.eps_singular)
            side = make_side_vector(imu_block, triple.bbox_centers, est, measured)
            bundle = FeatureBundle(overlay, side, triple.gt_locations[-1])
            seq_dir.mkdir(parents=True, exist_ok=True)
            name = f"{int(triple.track_id):06d}_{frames[-1]:06d}.bin"
            digest = write_bundle(seq_dir / name, bundle)
            entries.append(
                {
                    "file": name,
                    "track_id": triple.track_id,
                    "frame_ids": list(frames),
                    "sha256": digest,
                    "analytic_degenerate": side.degenerate,
                    "measured_acceleration": measured,
                    "target": list(bundle.target),
                }
            )
        cache.drop_stale(g.frame)
    if entries:
        (seq_dir / "index.json").write_text(dumps({"sequence": seq, "bundles": entries}), encoding="utf-8")
    return seq, entries, dropped


def cmd_export_features(cfg: ExportConfig, out_dir: Path) -> dict:
    work = [(s, lp, ip, cfg, out_dir) for s, lp, ip in _sequence_files(cfg)]
    results = _pmap(_export_sequence, work, cfg.workers)
    return {
        "command": "export-features",
        "config": cfgmod.config_dict(cfg),
        "counts": {
            "sequences": len(results),
            "bundles": sum(len(e) for _, e, _ in results),
            "filtered_occluded_or_truncated": sum(d for _, _, d in results),
        },
        "sequences": {s: [e["file"] for e in entries] for s, entries, _ in results},
    }


# --------------------------------------------------------------------------- output


def _public(report: dict) -> dict:
    return {k: v for k, v in report.items() if not k.startswith("_")}


def write_report(report: dict, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / "report.json"
    path.write_text(dumps(_public(report)), encoding="utf-8")
    written.append(path)
    text = format_text(report.get("_metrics_obj"), {"command": report["command"], **report["counts"]})
    for axis, b in sorted(report.get("_bins_obj", {}).items()):
        text += "\n" + format_binned_text(b)
        csv_path = out_dir / f"bins_{axis}.csv"
        csv_path.write_text(b.to_csv(), encoding="utf-8")
        written.append(csv_path)
    txt = out_dir / "report.txt"
    txt.write_text(text, encoding="utf-8")
    written.append(txt)
    return written


def _output_dir(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _overrides(args, names) -> dict:
    out = {}
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    for item in args.set or []:
        if "=" not in item:
            raise cfgmod.ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffrange", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        p.add_argument("--lookback", type=int)
        p.add_argument("--stride", type=int)
        p.add_argument("--fps", type=float)
        p.add_argument("--eps-singular", dest="eps_singular", type=float)
        p.add_argument("--workers", type=int)
        if dataset:
            p.add_argument("--labels", help="label file or directory of <seq>.txt")
            p.add_argument("--oxts", help="oxts file or directory of <seq>.txt")
            p.add_argument("--sequences", help="comma-separated sequence names")
            p.add_argument("--focal-length", dest="focal_length", type=float)

    p = sub.add_parser("simulate", help="synthetic ensemble through the analytic solver")
    common(p)
    p.add_argument("--n-scenes", dest="n_scenes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--height-noise", dest="height_noise", type=float)
    p.add_argument("--imu-noise", dest="imu_noise", type=float)
    p.add_argument("--camera-profile", dest="camera_profile", choices=["accelerating", "constant"])

    p = sub.add_parser("evaluate", help="evaluate the analytic solver on KITTI-format data")
    common(p, dataset=True)
    p.add_argument("--predictions", help="tracker output file or directory of <seq>.txt")

    p = sub.add_parser("export-features", help="write network input containers")
    common(p, dataset=True)
    p.add_argument("--images", help="directory of <seq>/<frame:06d>.png")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("ingest-check", help="parse label/oxts files and report problems")
    p.add_argument("--labels", nargs="*", default=[])
    p.add_argument("--oxts", nargs="*", default=[])
    p.add_argument("--predictions", nargs="*", default=[])
    return parser


_SCHEME_FLAGS = ("lookback", "stride", "fps", "eps_singular", "workers")
_DATASET_FLAGS = _SCHEME_FLAGS + ("labels", "oxts", "sequences", "focal_length")


def _ingest_check(args) -> int:
    bad = 0
    for kind, paths in (("labels", args.labels), ("predictions", args.predictions), ("oxts", args.oxts)):
        for path in paths:
            try:
                if kind == "oxts":
                    n = len(parse_imu(path))
                else:
                    recs = parse_labels(path, allow_score=kind == "predictions")
                    n = len(recs)
                    n_ex = sum(r.excluded for r in recs)
                print(f"ok   {path}: {n} records" + (f" ({n_ex} excluded)" if kind != "oxts" else ""))
            except (OSError, DiffRangeError) as exc:
                bad += 1
                print(f"FAIL {path}: {exc}")
    return 1 if bad else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "ingest-check":
            return _ingest_check(args)
        out_dir = _output_dir(args.out)
        if args.command == "simulate":
            names = _SCHEME_FLAGS + ("n_scenes", "seed", "height_noise", "imu_noise", "camera_profile")
            cfg = cfgmod.load_config(SimulateConfig, args.config, _overrides(args, names))
            report = cmd_simulate(cfg)
            write_report(report, out_dir)
        elif args.command == "evaluate":
            cfg = cfgmod.load_config(EvaluateConfig, args.config, _overrides(args, _DATASET_FLAGS + ("predictions",)))
            report = cmd_evaluate(cfg)
            write_report(report, out_dir)
        else:
            cfg = cfgmod.load_config(ExportConfig, args.config, _overrides(args, _DATASET_FLAGS + ("images", "seed")))
            out_dir.mkdir(parents=True, exist_ok=True)
            report = cmd_export_features(cfg, out_dir)
            (out_dir / "export.json").write_text(dumps(report), encoding="utf-8")
    except cfgmod.ConfigError as exc:
        print(f"diffrange: config error: {exc}", file=sys.stderr)
        return 2
    except (DiffRangeError, OSError) as exc:
        print(f"diffrange: error: {exc}", file=sys.stderr)
        return 1
    counts = report["counts"]
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    if report.get("note"):
        print(report["note"])
    return 0
