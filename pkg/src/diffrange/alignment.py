"""Pairing tracker boxes with ground-truth boxes.

Score of a pair: intersection area minus symmetric-difference area,
``I - (A_p + A_g - 2 I) = 3 I - A_p - A_g``.  It peaks at the box area for a
perfect overlap and is negative once less than a third of the union is shared.
"""

from __future__ import annotations

from typing import Optional, Sequence

Box = tuple[float, float, float, float]


def area(box: Box) -> float:
    left, top, right, bottom = box
    return max(0.0, right - left) * max(0.0, bottom - top)


def intersection_area(a: Box, b: Box) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    return w * h if w > 0 and h > 0 else 0.0


def match_score(pred: Box, gt: Box) -> float:
    inter = intersection_area(pred, gt)
    return 3.0 * inter - area(pred) - area(gt)


def assign(
    preds: Sequence[Box],
    gts: Sequence[Box],
    score_floor: float = 0.0,
    pred_ids: Optional[Sequence] = None,
    gt_ids: Optional[Sequence] = None,
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching in descending score.

    Returns ``(pred_index, gt_index, score)`` for accepted pairs; pairs
    scoring ``<= score_floor`` are never accepted.  Ties go to the lower
    prediction id, then the lower ground-truth id (ids default to indices).
    """
    pred_ids = list(range(len(preds))) if pred_ids is None else list(pred_ids)
    gt_ids = list(range(len(gts))) if gt_ids is None else list(gt_ids)
    candidates = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            s = match_score(p, g)
            if s > score_floor:
                candidates.append((-s, pred_ids[i], gt_ids[j], i, j))
    candidates.sort()
    used_p, used_g = set(), set()
    pairs = []
    for neg, _, _, i, j in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, -neg))
    pairs.sort()
    return pairs
