"""Axis-aligned box algebra: IoU, generalized IoU, L1 box loss, greedy NMS.

Boxes are (cx, cy, w, h) with centers in [0, 1] and positive extents in
(0, 1]; zero-area boxes are rejected at construction so IoU/gIoU stay total
on their domain. Analytic gradients of the pairwise measures are provided
for the coordinate vectors (subgradient conventions: ties in min/max route
to the first argument, sign(0) = 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidInput(f"box has non-finite coordinates: {vals}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise InvalidInput(f"box center outside [0, 1]: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise InvalidInput(f"box extents must lie in (0, 1]: ({self.w}, {self.h})")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float
    class_id: int

    def __post_init__(self):
        if not (np.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise InvalidInput(f"score must lie in [0, 1], got {self.score}")


def _coords(b) -> np.ndarray:
    if isinstance(b, Box):
        return b.as_array()
    a = np.asarray(b, dtype=float)
    if a.shape != (4,):
        raise InvalidInput(f"expected a Box or a length-4 coordinate array, got shape {a.shape}")
    return a


def _corners(c: np.ndarray):
    cx, cy, w, h = c
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def iou(a, b) -> float:
    """Intersection over union; 0 when disjoint, 1 for identical boxes."""
    return _iou_giou(_coords(a), _coords(b))[0]


def giou(a, b) -> float:
    """Generalized IoU in (-1, 1]: IoU minus the enclosing box's empty fraction."""
    return _iou_giou(_coords(a), _coords(b))[1]


def giou_loss(a, b) -> float:
    """1 - giou(a, b); non-negative, 0 for identical boxes."""
    return 1.0 - giou(a, b)


def _iou_giou(ca, cb):
    ax1, ay1, ax2, ay2 = _corners(ca)
    bx1, by1, bx2, by2 = _corners(cb)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if (iw > 0 and ih > 0) else 0.0
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    cw = max(ax2, bx2) - min(ax1, bx1)
    ch = max(ay2, by2) - min(ay1, by1)
    enclose = cw * ch
    iou_val = inter / union
    return iou_val, iou_val - (enclose - union) / enclose


def l1_box_loss(a, b) -> float:
    """Sum of absolute differences of the (cx, cy, w, h) coordinates."""
    return float(np.abs(_coords(a) - _coords(b)).sum())


def l1_box_grad(a, b):
    """(d/da, d/db) of l1_box_loss; sign(0) taken as 0."""
    d = np.sign(_coords(a) - _coords(b))
    return d, -d


def pairwise_iou(boxes) -> np.ndarray:
    """Symmetric IoU matrix with unit diagonal for a list of boxes."""
    if len(boxes) == 0:
        raise InvalidInput("pairwise_iou needs at least one box")
    arr = np.stack([_coords(b) for b in boxes])
    return iou_matrix(arr, arr)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized IoU between two (., 4) arrays of (cx, cy, w, h) boxes."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    ax1, ay1 = a[:, 0] - a[:, 2] / 2, a[:, 1] - a[:, 3] / 2
    ax2, ay2 = a[:, 0] + a[:, 2] / 2, a[:, 1] + a[:, 3] / 2
    bx1, by1 = b[:, 0] - b[:, 2] / 2, b[:, 1] - b[:, 3] / 2
    bx2, by2 = b[:, 0] + b[:, 2] / 2, b[:, 1] + b[:, 3] / 2
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(ax1[:, None], bx1[None, :])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(ay1[:, None], by1[None, :])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    # Areas from the same corner arithmetic as the intersection so that
    # identical boxes give IoU of exactly 1.0.
    area_a = ((ax2 - ax1) * (ay2 - ay1))[:, None]
    area_b = ((bx2 - bx1) * (by2 - by1))[None, :]
    return inter / (area_a + area_b - inter)


def nms(candidates, iou_threshold: float):
    """Greedy class-aware non-maximum suppression.

    Scans by descending score (ties broken by original index) and keeps a box
    iff its IoU with every already-kept box of the same class is strictly
    below the threshold. Returns kept indices in scan order.
    """
    if not (np.isfinite(iou_threshold) and 0.0 < iou_threshold <= 1.0):
        raise InvalidInput(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].score, i))
    kept: list[int] = []
    for i in order:
        ci = candidates[i]
        ok = True
        for j in kept:
            cj = candidates[j]
            if cj.class_id == ci.class_id and iou(ci.box, cj.box) >= iou_threshold:
                ok = False
                break
        if ok:
            kept.append(i)
    return kept


def giou_loss_grad(a, b):
    """(d/da, d/db) of giou_loss w.r.t. the (cx, cy, w, h) coordinates.

    Piecewise-smooth: min/max branches route to whichever box attains them;
    the derivative of the clamped intersection is zero when boxes are disjoint.
    """
    ca, cb = _coords(a), _coords(b)
    # Corner values and their Jacobians w.r.t. (cx, cy, w, h): each corner is a
    # linear function, so we track gradients as length-4 rows per corner.
    def corner_grads():
        # rows: d(x1)/d(cx,cy,w,h) etc.
        gx1 = np.array([1.0, 0.0, -0.5, 0.0])
        gy1 = np.array([0.0, 1.0, 0.0, -0.5])
        gx2 = np.array([1.0, 0.0, 0.5, 0.0])
        gy2 = np.array([0.0, 1.0, 0.0, 0.5])
        return gx1, gy1, gx2, gy2

    ax1, ay1, ax2, ay2 = _corners(ca)
    bx1, by1, bx2, by2 = _corners(cb)
    gax1, gay1, gax2, gay2 = corner_grads()
    gbx1, gby1, gbx2, gby2 = corner_grads()
    zero = np.zeros(4)

    def pick_max(u, v, gu_a, gu_b, gv_a, gv_b):
        # gradient pair (w.r.t. a, w.r.t. b) of max(u, v); tie goes to u
        return (gu_a, gu_b) if u >= v else (gv_a, gv_b)

    def pick_min(u, v, gu_a, gu_b, gv_a, gv_b):
        return (gu_a, gu_b) if u <= v else (gv_a, gv_b)

    # Intersection window
    ix1 = max(ax1, bx1)
    gix1_a, gix1_b = pick_max(ax1, bx1, gax1, zero, zero, gbx1)
    iy1 = max(ay1, by1)
    giy1_a, giy1_b = pick_max(ay1, by1, gay1, zero, zero, gby1)
    ix2 = min(ax2, bx2)
    gix2_a, gix2_b = pick_min(ax2, bx2, gax2, zero, zero, gbx2)
    iy2 = min(ay2, by2)
    giy2_a, giy2_b = pick_min(ay2, by2, gay2, zero, zero, gby2)

    iw, ih = ix2 - ix1, iy2 - iy1
    if iw > 0 and ih > 0:
        inter = iw * ih
        ginter_a = ih * (gix2_a - gix1_a) + iw * (giy2_a - giy1_a)
        ginter_b = ih * (gix2_b - gix1_b) + iw * (giy2_b - giy1_b)
    else:
        inter = 0.0
        ginter_a = ginter_b = zero

    area_a = ca[2] * ca[3]
    garea_a = np.array([0.0, 0.0, ca[3], ca[2]])
    area_b = cb[2] * cb[3]
    garea_b = np.array([0.0, 0.0, cb[3], cb[2]])

    union = area_a + area_b - inter
    gunion_a = garea_a - ginter_a
    gunion_b = garea_b - ginter_b

    # Enclosing box
    cx1 = min(ax1, bx1)
    gcx1_a, gcx1_b = pick_min(ax1, bx1, gax1, zero, zero, gbx1)
    cy1 = min(ay1, by1)
    gcy1_a, gcy1_b = pick_min(ay1, by1, gay1, zero, zero, gby1)
    cx2 = max(ax2, bx2)
    gcx2_a, gcx2_b = pick_max(ax2, bx2, gax2, zero, zero, gbx2)
    cy2 = max(ay2, by2)
    gcy2_a, gcy2_b = pick_max(ay2, by2, gay2, zero, zero, gby2)

    cw, ch = cx2 - cx1, cy2 - cy1
    enclose = cw * ch
    genclose_a = ch * (gcx2_a - gcx1_a) + cw * (gcy2_a - gcy1_a)
    genclose_b = ch * (gcx2_b - gcx1_b) + cw * (gcy2_b - gcy1_b)

    # iou = inter/union ; giou = iou - (enclose - union)/enclose = iou - 1 + union/enclose
    giou_grad_a = (
        (ginter_a * union - inter * gunion_a) / union**2
        + (gunion_a * enclose - union * genclose_a) / enclose**2
    )
    giou_grad_b = (
        (ginter_b * union - inter * gunion_b) / union**2
        + (gunion_b * enclose - union * genclose_b) / enclose**2
    )
    return -giou_grad_a, -giou_grad_b
