"""Distance-estimation error metrics and binned error reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptySet, NonPositiveDistance

AXES = ("distance", "distance_change", "velocity_change")


@dataclass(frozen=True)
class EvalPair:
    d_gt: float
    d_pred: float
    distance_change: float = 0.0  # |d_q - d_0| over the window, meters
    velocity_change: float = 0.0  # |object velocity, last interval - first|, m/s


@dataclass(frozen=True)
class MetricsReport:
    n: int
    mare: float
    mre_abs: float  # median absolute error, meters
    mre_relative: float  # median relative error
    ci95_halfwidth: float
    rmse: float
    delta_125: float
    srd: float
    rmse_log: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BinnedErrorReport:
    axis: str
    bin_width: float
    edges: tuple[float, ...]
    mare: tuple[Optional[float], ...]
    mre: tuple[Optional[float], ...]  # median relative error per bin
    count: tuple[int, ...]

    def rows(self):
        for k, c in enumerate(self.count):
            yield self.edges[k], self.edges[k + 1], self.mare[k], self.mre[k], c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edges"] = list(self.edges)
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "mare", "mre", "count"])
        for lo, hi, mare, mre, c in self.rows():
            w.writerow([repr(lo), repr(hi), "" if mare is None else repr(mare), "" if mre is None else repr(mre), c])
        return buf.getvalue()


def _arrays(pairs: Sequence[EvalPair]):
    if len(pairs) == 0:
        raise EmptySet("no evaluation pairs")
    gt = np.array([p.d_gt for p in pairs], dtype=float)
    pred = np.array([p.d_pred for p in pairs], dtype=float)
    if not (np.all(gt > 0) and np.all(pred > 0)):
        raise NonPositiveDistance("distances must be positive")
    return gt, pred


def compute_metrics(pairs: Sequence[EvalPair]) -> MetricsReport:
    """All seven metrics; relative errors use the ground truth as denominator."""
    gt, pred = _arrays(pairs)
    n = len(gt)
    err = np.abs(gt - pred)
    rel = err / gt
    ratio = np.maximum(pred / gt, gt / pred)
    ci = 1.96 * float(np.std(rel, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    return MetricsReport(
        n=n,
        mare=float(np.mean(rel)),
        mre_abs=float(np.median(err)),
        mre_relative=float(np.median(rel)),
        ci95_halfwidth=ci,
        rmse=float(np.sqrt(np.mean(err**2))),
        delta_125=float(np.mean(ratio < 1.25)),
        srd=float(np.mean(err**2 / gt)),
        rmse_log=float(np.sqrt(np.mean((np.log(gt) - np.log(pred)) ** 2))),
    )


def _axis_values(pairs, axis):
    if axis == "distance":
        return np.array([p.d_gt for p in pairs], float)
    if axis == "distance_change":
        return np.array([p.distance_change for p in pairs], float)
    if axis == "velocity_change":
        return np.array([p.velocity_change for p in pairs], float)
    raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")


def binned_report(pairs: Sequence[EvalPair], axis: str, bin_width: float) -> BinnedErrorReport:
    """Fixed-width bins aligned to multiples of ``bin_width`` covering all samples.

    Bins are half-open ``[lo, hi)``; empty bins carry ``None`` metrics.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    gt, pred = _arrays(pairs)
    x = _axis_values(pairs, axis)
    rel = np.abs(gt - pred) / gt
    first = math.floor(x.min() / bin_width)
    last = math.floor(x.max() / bin_width)
    idx = np.floor(x / bin_width).astype(int) - first
    nbins = last - first + 1
    edges = tuple(float((first + k) * bin_width) for k in range(nbins + 1))
    mare, mre, count = [], [], []
    for k in range(nbins):
        sel = rel[idx == k]
        count.append(int(sel.size))
        mare.append(float(sel.mean()) if sel.size else None)
        mre.append(float(np.median(sel)) if sel.size else None)
    return BinnedErrorReport(axis, float(bin_width), edges, tuple(mare), tuple(mre), tuple(count))


def format_text(report: Optional[MetricsReport], extra: Optional[dict] = None) -> str:
    lines = []
    for k, v in (extra or {}).items():
        lines.append(f"{k:<16} {v}")
    if report is None:
        lines.append("no samples")
    else:
        for k, v in report.to_dict().items():
            lines.append(f"{k:<16} {v:>14.6g}" if isinstance(v, float) else f"{k:<16} {v:>14}")
    return "\n".join(lines) + "\n"


def format_binned_text(report: BinnedErrorReport) -> str:
    out = [f"# {report.axis} (bin width {report.bin_width:g})", f"{'lo':>8} {'hi':>8} {'MARE':>10} {'MRE':>10} {'count':>7}"]
    for lo, hi, mare, mre, c in report.rows():
        fm = lambda v: f"{v:>10.4f}" if v is not None else f"{'-':>10}"
        out.append(f"{lo:>8g} {hi:>8g} {fm(mare)} {fm(mre)} {c:>7d}")
    return "\n".join(out) + "\n"


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, NaN mapped to null)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj
