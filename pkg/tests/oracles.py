"""Independent reference implementations used as test oracles.

Everything here is written as directly as possible from the definitions
(explicit loops, no shared code with the package) so that agreement is
meaningful.
"""
import math
from itertools import permutations

import numpy as np


def brute_force_assignment(cost):
    """Exhaustive minimum over all injective target->prediction maps."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    best_cost = math.inf
    best = None
    for perm in permutations(range(m), n):
        total = sum(cost[i, perm[i]] for i in range(n))
        if total < best_cost:
            best_cost = total
            best = perm
    return best, best_cost


def naive_n_mode_product(t, m, mode):
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    shape = list(t.shape)
    shape[mode - 1] = m.shape[0]
    out = np.zeros(shape)
    for i in range(shape[0]):
        for j in range(shape[1]):
            for k in range(shape[2]):
                acc = 0.0
                for a in range(m.shape[1]):
                    idx = [i, j, k]
                    idx[mode - 1] = a
                    coeff = m[[i, j, k][mode - 1], a]
                    acc += coeff * t[tuple(idx)]
                out[i, j, k] = acc
    return out


def naive_iou(a, b):
    """IoU from corner arithmetic, scalars only."""
    def corners(c):
        return c[0] - c[2] / 2, c[1] - c[3] / 2, c[0] + c[2] / 2, c[1] + c[3] / 2

    ax1, ay1, ax2, ay2 = corners(a)
    bx1, by1, bx2, by2 = corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def greedy_nms_reference(boxes, scores, classes, threshold):
    """Independent greedy suppression; returns kept indices in scan order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        suppressed = False
        for j in kept:
            if classes[i] == classes[j] and naive_iou(boxes[i], boxes[j]) >= threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def _unit(v):
    return v / np.linalg.norm(v)


def naive_loc_sce(teacher, student, assignments, tau, tau_t, lam, delta):
    """Quadruple-loop transcription of the localized soft contrastive loss.

    teacher/student: per image, list of (z vector, box coord array).
    """
    n_b = len(teacher)
    n = len(teacher[0])
    zt = {(i, j): _unit(np.asarray(teacher[i][j][0], float)) for i in range(n_b) for j in range(n)}
    bt = {(i, j): np.asarray(teacher[i][j][1], float) for i in range(n_b) for j in range(n)}
    zs = {(i, j): _unit(np.asarray(student[i][j][0], float)) for i in range(n_b) for j in range(n)}

    def p_ts(i, j, k, l):
        num = math.exp(float(zt[i, j] @ zs[k, l]) / tau)
        den = sum(
            math.exp(float(zt[i, j] @ zs[a, b]) / tau) for a in range(n_b) for b in range(n)
        )
        return num / den

    def p_tt(i, j, k, l):
        if i == k or j == l:
            return 0.0
        num = math.exp(float(zt[i, j] @ zt[k, l]) / tau_t)
        den = sum(
            math.exp(float(zt[i, j] @ zt[a, b]) / tau_t)
            for a in range(n_b)
            for b in range(n)
            if a != i and b != j
        )
        return num / den

    total = 0.0
    for i in range(n_b):
        for nn in range(n_b):
            for j in range(n):
                for m in range(n):
                    pos = 1.0 if (i == nn and naive_iou(bt[i, j], bt[i, m]) >= delta) else 0.0
                    w = lam * pos + (1.0 - lam) * p_tt(i, j, nn, m)
                    total += w * math.log(p_ts(i, j, nn, int(assignments[nn][m])))
    return -total / (n_b * n)


def reference_sce(teacher, student, assignments, tau, tau_t, lam):
    """Plain soft contrastive loss: one-hot positives are exactly the
    same-image same-slot pairs (no box information involved)."""
    n_b = len(teacher)
    n = len(teacher[0])
    zt = {(i, j): _unit(np.asarray(teacher[i][j][0], float)) for i in range(n_b) for j in range(n)}
    zs = {(i, j): _unit(np.asarray(student[i][j][0], float)) for i in range(n_b) for j in range(n)}

    def p_ts(i, j, k, l):
        num = math.exp(float(zt[i, j] @ zs[k, l]) / tau)
        den = sum(math.exp(float(zt[i, j] @ zs[a, b]) / tau) for a in range(n_b) for b in range(n))
        return num / den

    def p_tt(i, j, k, l):
        if i == k or j == l:
            return 0.0
        num = math.exp(float(zt[i, j] @ zt[k, l]) / tau_t)
        den = sum(
            math.exp(float(zt[i, j] @ zt[a, b]) / tau_t)
            for a in range(n_b)
            for b in range(n)
            if a != i and b != j
        )
        return num / den

    total = 0.0
    for i in range(n_b):
        for nn in range(n_b):
            for j in range(n):
                for m in range(n):
                    w = lam * (1.0 if (i == nn and j == m) else 0.0) + (1.0 - lam) * p_tt(i, j, nn, m)
                    total += w * math.log(p_ts(i, j, nn, int(assignments[nn][m])))
    return -total / (n_b * n)


def naive_loc_nce(teacher, student, assignments, tau, delta):
    """Loop transcription of the localized InfoNCE objective."""
    n_b = len(teacher)
    n = len(teacher[0])
    zt = {(i, j): _unit(np.asarray(teacher[i][j][0], float)) for i in range(n_b) for j in range(n)}
    bt = {(i, j): np.asarray(teacher[i][j][1], float) for i in range(n_b) for j in range(n)}
    zs = {(i, j): _unit(np.asarray(student[i][j][0], float)) for i in range(n_b) for j in range(n)}

    total = 0.0
    for i in range(n_b):
        for j in range(n):
            den = sum(
                math.exp(float(zt[i, j] @ zs[a, b]) / tau) for a in range(n_b) for b in range(n)
            )
            for m in range(n):
                if naive_iou(bt[i, j], bt[i, m]) >= delta:
                    num = math.exp(float(zt[i, j] @ zs[i, int(assignments[i][m])]) / tau)
                    total += math.log(num / den)
    return -total / (n_b * n)


def naive_info_nce(z, z_prime, tau):
    z = np.stack([_unit(np.asarray(v, float)) for v in z])
    zp = np.stack([_unit(np.asarray(v, float)) for v in z_prime])
    n = len(z)
    total = 0.0
    for i in range(n):
        num = math.exp(float(z[i] @ zp[i]) / tau)
        den = sum(math.exp(float(z[i] @ zp[j]) / tau) for j in range(n))
        total += math.log(num / den)
    return -total / n
