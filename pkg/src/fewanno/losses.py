"""Loss functions with hand-derived analytic gradients.

Covers prototype classification, focal / soft cross-entropy classification
terms, the InfoNCE family of proposal-contrastive objectives with
localization-aware positives, and the composite set-prediction objectives
that combine them. Every gradient here is checked against central finite
differences in the test suite.

Conventions shared by the contrastive losses: embeddings are L2-normalized
before any dot product; temperatures divide the similarities; the IoU
indicator terms are locally constant and contribute no gradient; l1 uses
subgradient 0 at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import InvalidEpisode, InvalidInput
from .geometry import Box

__all__ = [
    "Proposal",
    "ContrastConfig",
    "focal_loss",
    "focal_loss_grad",
    "soft_cross_entropy",
    "soft_cross_entropy_grad",
    "proto_loss",
    "proto_loss_grads",
    "info_nce",
    "info_nce_grad",
    "loc_sce",
    "loc_sce_grads",
    "loc_nce",
    "loc_nce_grads",
    "supervised_detr_loss",
    "supervised_detr_grads",
    "unsupervised_detr_loss",
    "unsupervised_detr_grads",
    "proseco_loss",
    "proseco_grads",
    "loss_grad",
]


@dataclass(frozen=True)
class Proposal:
    """An (embedding, box) pair emitted by a detector head."""

    z: np.ndarray
    box: Box

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1 or not np.all(np.isfinite(z)):
            raise InvalidInput("proposal embedding must be a finite 1-D vector")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class ContrastConfig:
    """Temperatures and mixing weights of the contrastive objectives."""

    tau: float = 0.1
    tau_t: float = 0.07
    lambda_sce: float = 0.5
    delta: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidInput(f"tau must be positive, got {self.tau}")
        if not (np.isfinite(self.tau_t) and self.tau_t > 0):
            raise InvalidInput(f"tau_t must be positive, got {self.tau_t}")
        if not (np.isfinite(self.lambda_sce) and 0.0 <= self.lambda_sce <= 1.0):
            raise InvalidInput(f"lambda_sce must lie in [0, 1], got {self.lambda_sce}")
        if not (np.isfinite(self.delta) and 0.0 < self.delta <= 1.0):
            raise InvalidInput(f"delta must lie in (0, 1], got {self.delta}")


# ---------------------------------------------------------------------------
# small numeric helpers
# ---------------------------------------------------------------------------

def _log_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _l2_rows(z: np.ndarray):
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise InvalidInput("zero-norm embedding cannot be normalized")
    return z / norms, norms


def _l2_grad_chain(z_hat: np.ndarray, norms: np.ndarray, g_hat: np.ndarray) -> np.ndarray:
    # d/dz of f(z/||z||): (g_hat - (z_hat . g_hat) z_hat) / ||z||, rowwise
    inner = np.sum(z_hat * g_hat, axis=-1, keepdims=True)
    return (g_hat - inner * z_hat) / norms


# ---------------------------------------------------------------------------
# classification terms
# ---------------------------------------------------------------------------

def focal_loss(logits, target_class: int, gamma: float = 2.0, alpha_f: float = 0.25) -> float:
    """-alpha_f * (1 - p_t)^gamma * log p_t with p_t = softmax(logits)[target]."""
    logp = _log_softmax(logits)
    if not 0 <= target_class < logp.size:
        raise InvalidInput(f"target class {target_class} out of range for {logp.size} logits")
    pt = float(np.exp(logp[target_class]))
    return float(-alpha_f * (1.0 - pt) ** gamma * logp[target_class])


def focal_loss_grad(logits, target_class: int, gamma: float = 2.0, alpha_f: float = 0.25) -> np.ndarray:
    """Gradient of focal_loss w.r.t. the logits."""
    logp = _log_softmax(logits)
    p = np.exp(logp)
    s = float(p[target_class])
    if gamma == 0:
        dl_ds = -alpha_f / s
    else:
        dl_ds = alpha_f * (gamma * (1.0 - s) ** (gamma - 1.0) * logp[target_class] - (1.0 - s) ** gamma / s)
    ds = s * (np.eye(p.size)[target_class] - p)
    return dl_ds * ds


def soft_cross_entropy(teacher_logits, student_logits) -> float:
    """-sum_k softmax(teacher)_k * log softmax(student)_k (teacher is the target)."""
    t = np.asarray(teacher_logits, dtype=float)
    s = np.asarray(student_logits, dtype=float)
    if t.shape != s.shape:
        raise InvalidInput(f"logit vectors differ in length: {t.shape} vs {s.shape}")
    pt = np.exp(_log_softmax(t))
    return float(-np.sum(pt * _log_softmax(s)))


def soft_cross_entropy_grad(teacher_logits, student_logits):
    """(d/d teacher, d/d student) of soft_cross_entropy."""
    pt = np.exp(_log_softmax(teacher_logits))
    logps = _log_softmax(student_logits)
    ps = np.exp(logps)
    g_student = ps - pt
    g_teacher = pt * (float(pt @ logps) - logps)
    return g_teacher, g_student


def distribution_cross_entropy(target_dist, student_logits) -> float:
    """-sum_k q_k * log softmax(s)_k for an already-normalized target q."""
    return float(-np.sum(np.asarray(target_dist, dtype=float) * _log_softmax(student_logits)))


def _distribution_ce(target_dist: np.ndarray, student_logits: np.ndarray) -> float:
    return distribution_cross_entropy(target_dist, student_logits)


def _distribution_ce_grad(target_dist: np.ndarray, student_logits: np.ndarray) -> np.ndarray:
    ps = np.exp(_log_softmax(student_logits))
    return float(np.sum(target_dist)) * ps - target_dist


# ---------------------------------------------------------------------------
# prototype classification
# ---------------------------------------------------------------------------

def _proto_setup(support, query, normalize):
    sx, sy = support
    qx, qy = query
    sx = np.asarray(sx, dtype=float)
    qx = np.asarray(qx, dtype=float)
    sy = np.asarray(sy)
    qy = np.asarray(qy)
    if sx.ndim != 2 or qx.ndim != 2 or sx.shape[1] != qx.shape[1]:
        raise InvalidInput("support and query embeddings must be 2-D with equal width")
    classes = np.unique(sy)
    if not np.all(np.isin(qy, classes)):
        raise InvalidEpisode("a query class is absent from the support set")
    protos = np.stack([sx[sy == c].mean(axis=0) for c in classes])
    norms = None
    raw = protos
    if normalize:
        protos, norms = _l2_rows(protos)
    # squared Euclidean distances (n_q, n_classes)
    diff = qx[:, None, :] - protos[None, :, :]
    d = np.sum(diff * diff, axis=-1)
    y_idx = np.searchsorted(classes, qy)
    return sx, sy, qx, y_idx, classes, raw, protos, norms, d


def proto_loss(support, query, normalize: bool = False):
    """Mean over queries of -log softmax(-||q - c||^2)[true class].

    support and query are (embeddings, labels) pairs; prototypes are the
    per-class support means, replaced by their unit-norm versions when
    `normalize` is set. Returns (loss, prototype matrix) with prototype rows
    in sorted class order.
    """
    _, _, _, y_idx, _, _, protos, _, d = _proto_setup(support, query, normalize)
    logp = _log_softmax(-d)
    loss = float(-logp[np.arange(len(y_idx)), y_idx].mean())
    return loss, protos


def proto_loss_grads(support, query, normalize: bool = False):
    """(d/d support embeddings, d/d query embeddings) of the proto loss."""
    sx, sy, qx, y_idx, classes, raw, protos, norms, d = _proto_setup(support, query, normalize)
    n_q = len(y_idx)
    p = np.exp(_log_softmax(-d))                      # (n_q, n_cls)
    contrib = np.zeros_like(p)
    contrib[np.arange(n_q), y_idx] = 1.0
    coeff = (contrib - p) / n_q                       # dL/dd per (q, class)
    diff = qx[:, None, :] - protos[None, :, :]        # (n_q, n_cls, k)
    g_query = 2.0 * np.einsum("qc,qck->qk", coeff, diff)
    g_proto_hat = -2.0 * np.einsum("qc,qck->ck", coeff, diff)
    if normalize:
        g_proto = _l2_grad_chain(protos, norms, g_proto_hat)
    else:
        g_proto = g_proto_hat
    g_support = np.zeros_like(sx)
    for ci, c in enumerate(classes):
        members = np.nonzero(sy == c)[0]
        g_support[members] = g_proto[ci] / len(members)
    return g_support, g_query


# ---------------------------------------------------------------------------
# InfoNCE
# ---------------------------------------------------------------------------

def info_nce(z, z_prime, tau: float) -> float:
    """-(1/N) sum_i log( exp(z_i . z'_i / tau) / sum_j exp(z_i . z'_j / tau) ).

    Rows are L2-normalized before the dot products.
    """
    zh, zph, s = _info_nce_sims(z, z_prime, tau)
    logp = _log_softmax(s)
    n = s.shape[0]
    return float(-logp[np.arange(n), np.arange(n)].mean())


def info_nce_grad(z, z_prime, tau: float):
    """(d/dz, d/dz') of info_nce."""
    z = np.asarray(z, dtype=float)
    zp = np.asarray(z_prime, dtype=float)
    zh, norms = _l2_rows(z)
    zph, norms_p = _l2_rows(zp)
    s = zh @ zph.T / tau
    q = np.exp(_log_softmax(s))
    n = s.shape[0]
    g_s = (q - np.eye(n)) / (n * tau)
    g_zh = g_s @ zph
    g_zph = g_s.T @ zh
    return _l2_grad_chain(zh, norms, g_zh), _l2_grad_chain(zph, norms_p, g_zph)


def _info_nce_sims(z, z_prime, tau):
    if not (np.isfinite(tau) and tau > 0):
        raise InvalidInput(f"tau must be positive, got {tau}")
    z = np.asarray(z, dtype=float)
    zp = np.asarray(z_prime, dtype=float)
    if z.ndim != 2 or z.shape != zp.shape:
        raise InvalidInput(f"batches must be 2-D with equal shape, got {z.shape} vs {zp.shape}")
    zh, _ = _l2_rows(z)
    zph, _ = _l2_rows(zp)
    return zh, zph, zh @ zph.T / tau


# ---------------------------------------------------------------------------
# localization-aware contrastive objectives over proposal batches
# ---------------------------------------------------------------------------

def _flatten_proposals(batch, name):
    if len(batch) == 0 or len(batch[0]) == 0:
        raise InvalidInput(f"{name} batch is empty")
    n = len(batch[0])
    zs, boxes = [], []
    for img in batch:
        if len(img) != n:
            raise InvalidInput(f"{name} images carry different proposal counts")
        for p in img:
            zs.append(np.asarray(p.z, dtype=float))
            boxes.append(p.box.as_array())
    return np.stack(zs), np.stack(boxes), len(batch), n


def _check_assignments(assignments, n_b, n):
    if len(assignments) != n_b:
        raise InvalidInput(f"need one assignment per image ({n_b}), got {len(assignments)}")
    out = []
    for a in assignments:
        a = np.asarray(a, dtype=int)
        if sorted(a.tolist()) != list(range(n)):
            raise InvalidInput("each proposal assignment must be a permutation of range(N)")
        out.append(a)
    return out


class _LocTables:
    """Shared intermediates of the localization-aware contrastive losses."""

    def __init__(self, teacher, student, assignments, tau, tau_t, delta, need_relations):
        zt, bt, n_b, n = _flatten_proposals(teacher, "teacher")
        zs, _, n_b2, n2 = _flatten_proposals(student, "student")
        if (n_b, n) != (n_b2, n2):
            raise InvalidInput("teacher and student batches differ in shape")
        b = n_b * n
        if b < 2:
            raise InvalidInput("contrastive losses need at least two proposals in total")
        if need_relations and (n_b < 2 or n < 2):
            raise InvalidInput(
                "relation distribution is undefined: need >= 2 images and >= 2 proposals "
                "per image (pairs must differ in both image and slot index)"
            )
        sigma = _check_assignments(assignments, n_b, n)
        self.n_b, self.n, self.b = n_b, n, b

        self.zt_hat, self.t_norms = _l2_rows(zt)
        self.zs_hat, self.s_norms = _l2_rows(zs)

        img = np.repeat(np.arange(n_b), n)
        slot = np.tile(np.arange(n), n_b)
        self.same_image = img[:, None] == img[None, :]
        self.same_slot = slot[:, None] == slot[None, :]

        # IoU positives: same image and teacher-box overlap >= delta
        self.pos = np.zeros((b, b), dtype=bool)
        for i in range(n_b):
            block = geometry.iou_matrix(bt[i * n:(i + 1) * n], bt[i * n:(i + 1) * n]) >= delta
            self.pos[i * n:(i + 1) * n, i * n:(i + 1) * n] = block

        # column map: teacher-pair column (n, m) reads student column (n, sigma_n(m))
        self.colmap = np.concatenate([i * n + sigma[i] for i in range(n_b)])
        self.inv_colmap = np.empty(b, dtype=int)
        self.inv_colmap[self.colmap] = np.arange(b)

        self.tau, self.tau_t = tau, tau_t
        sts = self.zt_hat @ self.zs_hat.T / tau
        self.logp_ts = _log_softmax(sts)           # log p'' in student-column space
        self.p_ts = np.exp(self.logp_ts)
        self.logp_gathered = self.logp_ts[:, self.colmap]

        self.relations = None
        if need_relations:
            valid = ~self.same_image & ~self.same_slot
            a = self.zt_hat @ self.zt_hat.T / tau_t
            a = np.where(valid, a, -np.inf)
            m = a.max(axis=1, keepdims=True)
            e = np.exp(a - m)
            e[~valid] = 0.0
            self.relations = e / e.sum(axis=1, keepdims=True)
            self.valid = valid


def loc_sce(teacher, student, assignments, cfg: ContrastConfig) -> float:
    """Localization-aware soft contrastive loss over a batch of proposals.

    Target weights mix the same-image IoU positives (weight lambda_sce) with
    the teacher-teacher relation distribution (weight 1 - lambda_sce, pairs
    differing in both image and slot, temperature tau_t); the cross-entropy
    reads the teacher-student similarity distribution (temperature tau)
    through the per-image proposal matching. delta = 1 keeps only the exact
    matched pair among the IoU positives.
    """
    t = _LocTables(teacher, student, assignments, cfg.tau, cfg.tau_t, cfg.delta, True)
    w = cfg.lambda_sce * t.pos + (1.0 - cfg.lambda_sce) * t.relations
    return float(-(w * t.logp_gathered).sum() / t.b)


def loc_sce_grads(teacher, student, assignments, cfg: ContrastConfig):
    """(d/d teacher z, d/d student z) of loc_sce, each shaped (N_b * N, k)."""
    t = _LocTables(teacher, student, assignments, cfg.tau, cfg.tau_t, cfg.delta, True)
    w = cfg.lambda_sce * t.pos + (1.0 - cfg.lambda_sce) * t.relations

    # student side: scatter the weights through sigma into student-column space
    w_cols = w[:, t.inv_colmap]
    row_mass = w_cols.sum(axis=1, keepdims=True)
    g_sts = -(w_cols - row_mass * t.p_ts) / (t.b * t.tau)
    g_zs_hat = g_sts.T @ t.zt_hat
    g_zt_hat = g_sts @ t.zs_hat

    # teacher side through the relation distribution
    g_rel = -(1.0 - cfg.lambda_sce) / t.b * t.logp_gathered
    inner = (t.relations * g_rel).sum(axis=1, keepdims=True)
    g_stt = t.relations * (g_rel - inner) / t.tau_t
    g_zt_hat = g_zt_hat + (g_stt + g_stt.T) @ t.zt_hat

    g_zt = _l2_grad_chain(t.zt_hat, t.t_norms, g_zt_hat)
    g_zs = _l2_grad_chain(t.zs_hat, t.s_norms, g_zs_hat)
    return g_zt, g_zs


def loc_nce(teacher, student, assignments, cfg: ContrastConfig) -> float:
    """InfoNCE over matched proposals, widened to all same-image pairs whose
    teacher boxes overlap at least delta. delta = 1 recovers plain InfoNCE
    over the matched pairs."""
    t = _LocTables(teacher, student, assignments, cfg.tau, cfg.tau_t, cfg.delta, False)
    return float(-(t.pos * t.logp_gathered).sum() / t.b)


def loc_nce_grads(teacher, student, assignments, cfg: ContrastConfig):
    """(d/d teacher z, d/d student z) of loc_nce."""
    t = _LocTables(teacher, student, assignments, cfg.tau, cfg.tau_t, cfg.delta, False)
    w_cols = t.pos[:, t.inv_colmap].astype(float)
    row_mass = w_cols.sum(axis=1, keepdims=True)
    g_sts = -(w_cols - row_mass * t.p_ts) / (t.b * t.tau)
    g_zs_hat = g_sts.T @ t.zt_hat
    g_zt_hat = g_sts @ t.zs_hat
    g_zt = _l2_grad_chain(t.zt_hat, t.t_norms, g_zt_hat)
    g_zs = _l2_grad_chain(t.zs_hat, t.s_norms, g_zs_hat)
    return g_zt, g_zs


# ---------------------------------------------------------------------------
# composite set-prediction objectives
# ---------------------------------------------------------------------------

def _no_object(logits: np.ndarray) -> bool:
    return int(np.argmax(logits)) == logits.size - 1


def supervised_detr_loss(targets, predictions, assignments, w) -> float:
    """Sum over images of the matched focal + gated box terms, plus a focal
    push toward the no-object class for every unmatched prediction.

    targets: per image, list of (class_id, Box); predictions: per image,
    list of (logits, Box); assignments: per image, int array target -> slot.
    """
    total = 0.0
    for tgt, preds, sigma in zip(targets, predictions, assignments):
        sigma = np.asarray(sigma, dtype=int)
        matched = set()
        for j, (cls, tbox) in enumerate(tgt):
            logits, pbox = preds[sigma[j]]
            matched.add(int(sigma[j]))
            total += w.lambda_class * focal_loss(logits, int(cls))
            if not _no_object(np.asarray(logits, dtype=float)):
                total += w.lambda_l1 * geometry.l1_box_loss(tbox, pbox)
                total += w.lambda_giou * geometry.giou_loss(tbox, pbox)
        no_obj_total = 0.0
        for p, (logits, _) in enumerate(preds):
            if p not in matched:
                no_obj_total += focal_loss(logits, len(np.asarray(logits)) - 1)
        total += w.lambda_class * no_obj_total
    return float(total)


def supervised_detr_grads(targets, predictions, assignments, w):
    """Per image, (d logits (N, C+1), d boxes (N, 4)) of supervised_detr_loss."""
    out = []
    for tgt, preds, sigma in zip(targets, predictions, assignments):
        sigma = np.asarray(sigma, dtype=int)
        n = len(preds)
        g_logits = np.zeros((n, np.asarray(preds[0][0]).size))
        g_boxes = np.zeros((n, 4))
        matched = set()
        for j, (cls, tbox) in enumerate(tgt):
            p = int(sigma[j])
            logits, pbox = preds[p]
            matched.add(p)
            g_logits[p] += w.lambda_class * focal_loss_grad(logits, int(cls))
            if not _no_object(np.asarray(logits, dtype=float)):
                _, g_l1 = geometry.l1_box_grad(tbox, pbox)
                _, g_gi = geometry.giou_loss_grad(tbox, pbox)
                g_boxes[p] += w.lambda_l1 * g_l1 + w.lambda_giou * g_gi
        for p, (logits, _) in enumerate(preds):
            if p not in matched:
                g_logits[p] += w.lambda_class * focal_loss_grad(
                    logits, np.asarray(logits).size - 1
                )
        out.append((g_logits, g_boxes))
    return out


def unsupervised_detr_loss(pseudo_labels, student_predictions, assignments, w) -> float:
    """Matched cross-entropy against (soft or hard) pseudo-labels plus box
    terms gated on the student not predicting no-object."""
    total = 0.0
    for tgt, preds, sigma in zip(pseudo_labels, student_predictions, assignments):
        sigma = np.asarray(sigma, dtype=int)
        for j, (cls_target, tbox) in enumerate(tgt):
            logits, pbox = preds[sigma[j]]
            logits = np.asarray(logits, dtype=float)
            if np.ndim(cls_target) == 0:
                ce = _distribution_ce(_one_hot(int(cls_target), logits.size), logits)
            else:
                ce = _distribution_ce(np.asarray(cls_target, dtype=float), logits)
            total += w.lambda_class * ce
            if not _no_object(logits):
                total += w.lambda_l1 * geometry.l1_box_loss(tbox, pbox)
                total += w.lambda_giou * geometry.giou_loss(tbox, pbox)
    return float(total)


def unsupervised_detr_grads(pseudo_labels, student_predictions, assignments, w):
    """Per image, (d logits, d boxes) of unsupervised_detr_loss w.r.t. the student."""
    out = []
    for tgt, preds, sigma in zip(pseudo_labels, student_predictions, assignments):
        sigma = np.asarray(sigma, dtype=int)
        n = len(preds)
        g_logits = np.zeros((n, np.asarray(preds[0][0]).size))
        g_boxes = np.zeros((n, 4))
        for j, (cls_target, tbox) in enumerate(tgt):
            p = int(sigma[j])
            logits, pbox = preds[p]
            logits = np.asarray(logits, dtype=float)
            if np.ndim(cls_target) == 0:
                dist = _one_hot(int(cls_target), logits.size)
            else:
                dist = np.asarray(cls_target, dtype=float)
            g_logits[p] += w.lambda_class * _distribution_ce_grad(dist, logits)
            if not _no_object(logits):
                _, g_l1 = geometry.l1_box_grad(tbox, pbox)
                _, g_gi = geometry.giou_loss_grad(tbox, pbox)
                g_boxes[p] += w.lambda_l1 * g_l1 + w.lambda_giou * g_gi
        out.append((g_logits, g_boxes))
    return out


def _one_hot(idx: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[idx] = 1.0
    return v


def proseco_loss(teacher_props, student_props, ss_boxes, prop_assignment, box_assignment,
                 w, cfg: ContrastConfig, lambda_contrast: float) -> float:
    """lambda_contrast * loc_sce + mean over sampled boxes of the matched
    lambda_coord * l1 + lambda_giou * (1 - giou) terms."""
    total = 0.0
    if lambda_contrast > 0:
        total += lambda_contrast * loc_sce(teacher_props, student_props, prop_assignment, cfg)
    n_b = len(student_props)
    k = len(ss_boxes[0]) if n_b else 0
    box_total = 0.0
    for i in range(n_b):
        sigma = np.asarray(box_assignment[i], dtype=int)
        for j, sbox in enumerate(ss_boxes[i]):
            pbox = student_props[i][sigma[j]].box
            box_total += w.lambda_coord * geometry.l1_box_loss(sbox, pbox)
            box_total += w.lambda_giou * geometry.giou_loss(sbox, pbox)
    if k:
        total += box_total / (n_b * k)
    return float(total)


def proseco_grads(teacher_props, student_props, ss_boxes, prop_assignment, box_assignment,
                  w, cfg: ContrastConfig, lambda_contrast: float):
    """(d/d student z (N_b*N, k), d/d student boxes (N_b*N, 4)) of proseco_loss."""
    n_b = len(student_props)
    n = len(student_props[0])
    kdim = student_props[0][0].z.size
    g_z = np.zeros((n_b * n, kdim))
    if lambda_contrast > 0:
        _, g_z = loc_sce_grads(teacher_props, student_props, prop_assignment, cfg)
        g_z = lambda_contrast * g_z
    g_boxes = np.zeros((n_b * n, 4))
    k = len(ss_boxes[0]) if n_b else 0
    if k:
        scale = 1.0 / (n_b * k)
        for i in range(n_b):
            sigma = np.asarray(box_assignment[i], dtype=int)
            for j, sbox in enumerate(ss_boxes[i]):
                p = int(sigma[j])
                pbox = student_props[i][p].box
                _, g_l1 = geometry.l1_box_grad(sbox, pbox)
                _, g_gi = geometry.giou_loss_grad(sbox, pbox)
                g_boxes[i * n + p] += scale * (w.lambda_coord * g_l1 + w.lambda_giou * g_gi)
    return g_z, g_boxes


# ---------------------------------------------------------------------------
# dispatcher over every implemented gradient
# ---------------------------------------------------------------------------

_GRAD_TABLE = {
    "focal": focal_loss_grad,
    "soft_cross_entropy": soft_cross_entropy_grad,
    "proto": proto_loss_grads,
    "info_nce": info_nce_grad,
    "loc_sce": loc_sce_grads,
    "loc_nce": loc_nce_grads,
    "supervised_detr": supervised_detr_grads,
    "unsupervised_detr": unsupervised_detr_grads,
    "proseco": proseco_grads,
}


def loss_grad(loss_id: str, *args, **kwargs):
    """Analytic gradient of the named loss w.r.t. its continuous inputs."""
    if loss_id not in _GRAD_TABLE:
        raise InvalidInput(f"unknown loss id {loss_id!r}; known: {sorted(_GRAD_TABLE)}")
    return _GRAD_TABLE[loss_id](*args, **kwargs)
