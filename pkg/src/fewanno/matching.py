"""Minimum-cost bipartite assignment and the composite matching costs.

The solver is the classic shortest-augmenting-path Hungarian with dual
potentials. Rectangular problems (targets <= predictions) are padded
internally with zero-cost dummy targets; among equally cheap optima the
assignment vector that is lexicographically smallest is returned, which
makes every consumer reproducible across runs and platforms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, losses
from .errors import InvalidInput, ShapeError

# Cost given to pairs excluded from supervised matching (predictions whose
# argmax is currently the no-object slot).
EXCLUDED_COST = 1e6


@dataclass(frozen=True)
class CostWeights:
    """Loss-term coefficients; defaults follow the reference training recipes."""

    lambda_class: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    lambda_sim: float = 2.0
    lambda_coord: float = 5.0

    def __post_init__(self):
        for name in ("lambda_class", "lambda_l1", "lambda_giou", "lambda_sim", "lambda_coord"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidInput(f"{name} must be a finite non-negative real, got {v}")


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

def hungarian(cost) -> np.ndarray:
    """Assignment sigma (target index -> prediction index) minimizing total cost.

    cost is (targets x predictions) with targets <= predictions; an empty
    target set yields an empty assignment. Ties are broken toward the
    lexicographically smallest sigma (resolved on the tight-edge graph of
    the optimal dual potentials, so total cost stays minimal).
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise InvalidInput(f"cost must be 2-D, got shape {c.shape}")
    n_t, n_p = c.shape
    if n_t == 0:
        return np.zeros(0, dtype=int)
    if n_t > n_p:
        raise ShapeError(f"more targets ({n_t}) than predictions ({n_p})")
    if not np.all(np.isfinite(c)):
        raise InvalidInput("cost matrix contains non-finite entries")

    square = np.zeros((n_p, n_p))
    square[:n_t] = c
    row_to_col, u, v = _solve_square(square)

    scale = max(1.0, float(np.abs(square).max()))
    tight = (square - u[:, None] - v[None, :]) <= 1e-9 * scale
    return _lexicographic_min(tight, row_to_col, n_t)


def _solve_square(cost: np.ndarray):
    """Shortest-augmenting-path assignment on a square matrix.

    Returns (row_to_col, row potentials u, column potentials v) with
    u[i] + v[j] <= cost[i, j] everywhere and equality on matched edges.
    """
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    row_of_col = np.full(n, -1, dtype=int)
    for i in range(n):
        minv = np.full(n, np.inf)
        way = np.full(n, -1, dtype=int)  # previous column on the alternating path (-1 = root)
        used = np.zeros(n, dtype=bool)
        cur_row = i
        j0 = -1
        while True:
            reduced = cost[cur_row] - u[cur_row] - v
            improve = (~used) & (reduced < minv)
            minv[improve] = reduced[improve]
            way[improve] = j0
            cand = np.where(used, np.inf, minv)
            j1 = int(np.argmin(cand))
            delta = float(cand[j1])
            # Shift potentials: the root row, plus every visited column and its row.
            u[i] += delta
            visited = np.nonzero(used)[0]
            u[row_of_col[visited]] += delta
            v[visited] -= delta
            minv[~used] -= delta
            used[j1] = True
            j0 = j1
            if row_of_col[j1] == -1:
                break
            cur_row = row_of_col[j1]
        # Augment backwards along `way`.
        j = j0
        while True:
            jp = way[j]
            row_of_col[j] = i if jp == -1 else row_of_col[jp]
            if jp == -1:
                break
            j = jp
    row_to_col = np.empty(n, dtype=int)
    row_to_col[row_of_col] = np.arange(n)
    return row_to_col, u, v


def _lexicographic_min(tight: np.ndarray, row_to_col: np.ndarray, n_t: int) -> np.ndarray:
    """Smallest assignment vector among perfect matchings of the tight graph.

    Greedy per real row: adopt the smallest tight column for which the rest of
    the rows can still be perfectly matched (checked by actually rerouting the
    displaced row with an augmenting-path search, so the invariant "current
    matching is perfect" always holds).
    """
    n = tight.shape[0]
    col_of_row = row_to_col.copy()
    row_of_col = np.full(n, -1, dtype=int)
    row_of_col[col_of_row] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)
    for i in range(n_t):
        for j in np.nonzero(tight[i] & ~fixed_col)[0]:
            if j >= col_of_row[i]:
                break
            if _take_column(i, int(j), tight, col_of_row, row_of_col, fixed_col):
                break
        fixed_col[col_of_row[i]] = True
    return col_of_row[:n_t].copy()


def _take_column(i, j, tight, col_of_row, row_of_col, fixed_col) -> bool:
    displaced = row_of_col[j]
    old = col_of_row[i]
    row_of_col[old] = -1
    col_of_row[i] = j
    row_of_col[j] = i
    if displaced == -1:
        return True
    seen = np.zeros(len(fixed_col), dtype=bool)
    if _reroute(displaced, i, tight, col_of_row, row_of_col, fixed_col, seen):
        return True
    row_of_col[j] = displaced
    col_of_row[i] = old
    row_of_col[old] = i
    return False


def _reroute(r, immovable, tight, col_of_row, row_of_col, fixed_col, seen) -> bool:
    for c in np.nonzero(tight[r] & ~fixed_col & ~seen)[0]:
        seen[c] = True
        occupant = row_of_col[c]
        if occupant == immovable:
            continue
        if occupant == -1 or _reroute(occupant, immovable, tight, col_of_row, row_of_col, fixed_col, seen):
            col_of_row[r] = c
            row_of_col[c] = r
            return True
    return False


# ---------------------------------------------------------------------------
# Composite pairwise costs
# ---------------------------------------------------------------------------

def supervised_match_cost(target, pred, w: CostWeights) -> float:
    """Cost of pairing a ground-truth (class, box) with a prediction (logits, box).

    lambda_class * focal + lambda_l1 * |box - box'|_1 + lambda_giou * (1 - giou);
    predictions whose argmax is the no-object slot are excluded with a large
    constant so real targets prefer foreground predictions.
    """
    target_class, target_box = target
    logits, pred_box = pred
    logits = np.asarray(logits, dtype=float)
    if int(target_class) == logits.size - 1:
        raise InvalidInput("target class may not be the no-object slot")
    if int(np.argmax(logits)) == logits.size - 1:
        return EXCLUDED_COST
    return (
        w.lambda_class * losses.focal_loss(logits, int(target_class))
        + w.lambda_l1 * geometry.l1_box_loss(target_box, pred_box)
        + w.lambda_giou * geometry.giou_loss(target_box, pred_box)
    )


def soft_match_cost(teacher_logits, teacher_box, student_logits, student_box, w: CostWeights) -> float:
    """Matching cost against a soft (distribution) pseudo-label: the class term
    is the soft cross-entropy of the two logit vectors."""
    return (
        w.lambda_class * losses.soft_cross_entropy(teacher_logits, student_logits)
        + w.lambda_l1 * geometry.l1_box_loss(teacher_box, student_box)
        + w.lambda_giou * geometry.giou_loss(teacher_box, student_box)
    )


def prop_match_cost(teacher, student, w: CostWeights) -> float:
    """Proposal-to-prediction cost: -lambda_sim * cosine(z, z') plus box terms.

    The similarity enters negated so that matched features attract under
    minimization.
    """
    za = np.asarray(teacher.z, dtype=float)
    zb = np.asarray(student.z, dtype=float)
    na, nb = np.linalg.norm(za), np.linalg.norm(zb)
    if na == 0.0 or nb == 0.0:
        raise InvalidInput("zero-norm embedding in proposal matching")
    cos = float(za @ zb / (na * nb))
    return (
        -w.lambda_sim * cos
        + w.lambda_coord * geometry.l1_box_loss(teacher.box, student.box)
        + w.lambda_giou * geometry.giou_loss(teacher.box, student.box)
    )


def box_match_cost(ss_box, pred_box, w: CostWeights) -> float:
    """Box-only cost: lambda_coord * l1 + lambda_giou * (1 - giou)."""
    return (
        w.lambda_coord * geometry.l1_box_loss(ss_box, pred_box)
        + w.lambda_giou * geometry.giou_loss(ss_box, pred_box)
    )


# ---------------------------------------------------------------------------
# Cost-matrix builders (targets along rows, predictions along columns)
# ---------------------------------------------------------------------------

def supervised_cost_matrix(targets, predictions, w: CostWeights) -> np.ndarray:
    m = np.empty((len(targets), len(predictions)))
    for a, t in enumerate(targets):
        for b, p in enumerate(predictions):
            m[a, b] = supervised_match_cost(t, p, w)
    return m


def soft_cost_matrix(teacher, student, w: CostWeights) -> np.ndarray:
    m = np.empty((len(teacher), len(student)))
    for a, (tl, tb) in enumerate(teacher):
        for b, (sl, sb) in enumerate(student):
            m[a, b] = soft_match_cost(tl, tb, sl, sb, w)
    return m


def prop_cost_matrix(teacher_props, student_props, w: CostWeights) -> np.ndarray:
    m = np.empty((len(teacher_props), len(student_props)))
    for a, t in enumerate(teacher_props):
        for b, s in enumerate(student_props):
            m[a, b] = prop_match_cost(t, s, w)
    return m


def box_cost_matrix(ss_boxes, pred_boxes, w: CostWeights) -> np.ndarray:
    m = np.empty((len(ss_boxes), len(pred_boxes)))
    for a, sb in enumerate(ss_boxes):
        for b, pb in enumerate(pred_boxes):
            m[a, b] = box_match_cost(sb, pb, w)
    return m
