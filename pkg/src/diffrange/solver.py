"""Differential range estimation from size ratios and camera displacement.

Along the camera-object axis the distance evolves as

    d_n = d_{n-1} + dD_n - dC_n

and the projected height is inversely proportional to distance, so the
ratio ``p_n = H_n / H_{n-1}`` equals ``d_{n-1} / d_n``.  Eliminating the
earlier distances leaves one linear equation per interval,

    (p_n - 1) d_n + dD_n = dC_n,

with ``d_n`` rewritten in terms of the latest distance ``d_q``.  Restricting
the object displacements ``dD_n`` to a polynomial motion model of order ``m``
leaves ``m + 1`` unknowns, hence ``q = m + 1`` intervals are needed.

All elimination is carried out on exact rationals built from the float
inputs, so the general path and the constant-velocity closed form return
the correctly rounded value of the same exact quantity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .errors import NonPositiveHeight, OrderMismatch

DEFAULT_EPS_SINGULAR = 1e-6

_UNKNOWNS = {
    0: ("d_q",),
    1: ("d_q", "dD"),
    2: ("d_q", "dD_1", "ddD"),
}


class Status(str, enum.Enum):
    OK = "ok"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class KeyframeTriple:
    """Observations of one track at ``q + 1`` equally spaced keyframes.

    Despite the name the bundle holds any ``q + 1 >= 2`` keyframes; the
    default scheme produces three.  Nothing here identifies the object
    class: estimation is computable from these fields alone.
    """

    heights: tuple[float, ...]
    camera_deltas: tuple[float, ...]
    dt: float
    bbox_centers: tuple[tuple[float, float], ...]
    frame_ids: tuple[int, ...]
    track_id: object = None
    # optional payload carried for evaluation and feature export
    bboxes: Optional[tuple[tuple[float, float, float, float], ...]] = None
    image_size: Optional[tuple[int, int]] = None
    gt_locations: Optional[tuple[tuple[float, float, float], ...]] = None
    gt_distances: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        n = len(self.heights)
        if n < 2:
            raise ValueError("need at least two keyframes")
        if any(not h > 0 for h in self.heights):
            raise NonPositiveHeight(f"heights must be positive: {self.heights}")
        if len(self.camera_deltas) != n - 1:
            raise ValueError(
                f"{len(self.camera_deltas)} camera deltas for {n} heights"
            )
        if len(self.bbox_centers) != n or len(self.frame_ids) != n:
            raise ValueError("bbox_centers and frame_ids need one entry per keyframe")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise ValueError(f"frame ids not strictly increasing: {self.frame_ids}")

    @property
    def q(self) -> int:
        return len(self.heights) - 1

    @property
    def gt_range(self) -> Optional[float]:
        return None if self.gt_distances is None else self.gt_distances[-1]


@dataclass(frozen=True)
class SizeRatios:
    p: tuple[float, ...]


@dataclass(frozen=True)
class LinearSystem:
    """Square system ``A [d_q, f]^T = b`` with exact rational entries."""

    A: tuple[tuple[Fraction, ...], ...]
    b: tuple[Fraction, ...]
    unknown_labels: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.b)

    def as_floats(self):
        return (
            [[float(v) for v in row] for row in self.A],
            [float(v) for v in self.b],
        )


@dataclass(frozen=True)
class DistanceEstimate:
    range: float
    motion_params: tuple[float, ...]
    condition_number: float
    status: Status
    pivot_ratio: float = math.nan
    cartesian: Optional[tuple[float, float, float]] = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    def motion_params_si(self, dt: float) -> tuple[float, ...]:
        """Convert per-interval motion parameters to m/s, m/s^2, ...

        ``dD`` is a displacement per interval (divide by ``dt``); ``ddD`` is
        the per-interval increment of that displacement (divide by ``dt**2``).
        """
        return tuple(v / dt ** (j + 1) for j, v in enumerate(self.motion_params))


def size_ratios(heights: Sequence[float]) -> SizeRatios:
    if len(heights) < 2:
        raise ValueError("need at least two heights")
    if any(not h > 0 for h in heights):
        raise NonPositiveHeight(f"heights must be positive: {tuple(heights)}")
    return SizeRatios(tuple(heights[n] / heights[n - 1] for n in range(1, len(heights))))


def _basis(order: int, k: int) -> list[int]:
    # dD_k = f_0 + (k-1) f_1: constant step plus a constant per-interval increment
    return [(k - 1) ** j for j in range(order)]


def build_system(ratios: SizeRatios, camera_deltas: Sequence[float], motion_order: int) -> LinearSystem:
    """Assemble the ``q x q`` system for ``q = motion_order + 1`` intervals.

    Row ``n`` expresses ``(p_n - 1) d_n + dD_n = dC_n`` with
    ``d_n = d_q - sum_{k>n} (dD_k - dC_k)``.  For ``motion_order == 1`` this
    is the familiar constant-velocity system

        [[p1 - 1, 2 - p1], [p2 - 1, 1]] [d_2, dD]^T = [dC1 + dC2 - p1 dC2, dC2]^T.
    """
    if motion_order not in _UNKNOWNS:
        raise OrderMismatch(f"unsupported motion order {motion_order}")
    p = [Fraction(v) for v in ratios.p]
    dc = [Fraction(v) for v in camera_deltas]
    q = len(p)
    if q != motion_order + 1:
        raise OrderMismatch(f"motion order {motion_order} needs {motion_order + 1} ratios, got {q}")
    if len(dc) != q:
        raise OrderMismatch(f"{len(dc)} camera deltas for {q} ratios")

    rows, rhs = [], []
    for n in range(1, q + 1):
        later = range(n + 1, q + 1)
        pn = p[n - 1]
        tail = [sum(_basis(motion_order, k)[j] for k in later) for j in range(motion_order)]
        own = _basis(motion_order, n)
        row = [pn - 1] + [(own[j] + tail[j]) - pn * tail[j] for j in range(motion_order)]
        sc = sum((dc[k - 1] for k in later), Fraction(0))
        rows.append(tuple(row))
        rhs.append((dc[n - 1] + sc) - pn * sc)
    return LinearSystem(tuple(rows), tuple(rhs), _UNKNOWNS[motion_order])


def _lu(A):
    """Gaussian elimination with partial pivoting (Doolittle form, in place copy)."""
    n = len(A)
    U = [list(row) for row in A]
    perm = list(range(n))
    for k in range(n):
        piv = max(range(k, n), key=lambda i: abs(U[i][k]))
        if U[piv][k] == 0:
            return None
        if piv != k:
            U[k], U[piv] = U[piv], U[k]
            perm[k], perm[piv] = perm[piv], perm[k]
        for i in range(k + 1, n):
            lam = U[i][k] / U[k][k]
            U[i][k] = lam
            for j in range(k + 1, n):
                U[i][j] -= lam * U[k][j]
    return U, perm


def _lu_solve(LU, perm, b):
    n = len(b)
    y = [b[perm[i]] for i in range(n)]
    for i in range(n):
        for j in range(i):
            y[i] -= LU[i][j] * y[j]
    x = [Fraction(0)] * n
    for i in reversed(range(n)):
        s = y[i]
        for j in range(i + 1, n):
            s -= LU[i][j] * x[j]
        x[i] = s / LU[i][i]
    return x


def _norm1(M) -> Fraction:
    n = len(M)
    return max(sum(abs(M[i][j]) for i in range(n)) for j in range(n))


def solve(system: LinearSystem, eps_singular: float = DEFAULT_EPS_SINGULAR) -> DistanceEstimate:
    """Solve for ``[d_q, f]`` and classify the geometry.

    The estimate is Degenerate when the smallest pivot relative to
    ``max(1, max|A_ij|)`` or the reciprocal 1-norm condition number falls
    below ``eps_singular``, or when the solved range is not positive.
    """
    A, b = system.A, system.b
    n = len(b)
    if n == 0 or any(len(row) != n for row in A):
        raise ValueError("system must be square and non-empty")

    factored = _lu(A)
    if factored is None:
        return DistanceEstimate(
            range=math.nan,
            motion_params=(math.nan,) * (n - 1),
            condition_number=math.inf,
            status=Status.DEGENERATE,
            pivot_ratio=0.0,
            meta={"reason": "singular"},
        )
    LU, perm = factored
    x = _lu_solve(LU, perm, list(b))

    scale = max(Fraction(1), max(abs(v) for row in A for v in row))
    pivot_ratio = float(min(abs(LU[i][i]) for i in range(n)) / scale)
    cols = []
    for j in range(n):
        e = [Fraction(int(i == j)) for i in range(n)]
        cols.append(_lu_solve(LU, perm, e))
    inv_norm = max(sum(abs(v) for v in col) for col in cols)
    cond = float(_norm1(A) * inv_norm)

    rng = float(x[0])
    reason = None
    if pivot_ratio < eps_singular:
        reason = "small pivot"
    elif 1.0 / cond < eps_singular:
        reason = "ill-conditioned"
    elif not rng > 0:
        reason = "non-positive range"
    return DistanceEstimate(
        range=rng,
        motion_params=tuple(float(v) for v in x[1:]),
        condition_number=cond,
        status=Status.OK if reason is None else Status.DEGENERATE,
        pivot_ratio=pivot_ratio,
        meta={"reason": reason} if reason else {},
    )


def solve_q2_closed_form(p1, p2, dC1, dC2, eps_singular: float = DEFAULT_EPS_SINGULAR) -> DistanceEstimate:
    """Constant-velocity range ``d_2 = (dC1 - dC2) / (p1 p2 - 2 p2 + 1)``.

    The denominator vanishes whenever the camera also moves at constant
    velocity, so a constant-velocity object is only observable from an
    accelerating camera.
    """
    if not (p1 > 0 and p2 > 0):
        raise ValueError("size ratios must be positive")
    P1, P2, C1, C2 = (Fraction(v) for v in (p1, p2, dC1, dC2))
    den = P1 * P2 - 2 * P2 + 1
    num = C1 - C2
    if den == 0:
        return DistanceEstimate(
            range=math.nan,
            motion_params=(math.nan,),
            condition_number=math.inf,
            status=Status.DEGENERATE,
            pivot_ratio=0.0,
            meta={"reason": "singular"},
        )
    d2 = num / den
    dD = C2 - (P2 - 1) * d2
    # 1-norm condition of [[p1-1, 2-p1], [p2-1, 1]] from its adjugate
    a, bb, c, d = P1 - 1, 2 - P1, P2 - 1, Fraction(1)
    norm_a = max(abs(a) + abs(c), abs(bb) + abs(d))
    norm_inv = max(abs(d) + abs(c), abs(bb) + abs(a)) / abs(den)
    cond = float(norm_a * norm_inv)

    reason = None
    if abs(den) < Fraction(eps_singular) * max(Fraction(1), abs(num)):
        reason = "small denominator"
    elif not d2 > 0:
        reason = "non-positive range"
    return DistanceEstimate(
        range=float(d2),
        motion_params=(float(dD),),
        condition_number=cond,
        status=Status.OK if reason is None else Status.DEGENERATE,
        pivot_ratio=math.nan,
        meta={"reason": reason} if reason else {},
    )


def range_to_distance(cartesian) -> float:
    x, y, z = cartesian
    return math.sqrt(x * x + y * y + z * z)


def estimate_triple(
    triple: KeyframeTriple,
    motion_order: Optional[int] = None,
    eps_singular: float = DEFAULT_EPS_SINGULAR,
) -> DistanceEstimate:
    """Run the full analytic path on one keyframe bundle.

    ``motion_order`` defaults to ``q - 1`` (three keyframes -> constant velocity).
    """
    order = triple.q - 1 if motion_order is None else motion_order
    system = build_system(size_ratios(triple.heights), triple.camera_deltas, order)
    return solve(system, eps_singular)
