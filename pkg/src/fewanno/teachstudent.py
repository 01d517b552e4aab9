"""Teacher-student machinery over synthetic detection scenes.

A scene is a set of objects, each carrying a class-conditioned feature
vector whose first four components encode its box (pre-sigmoid), plus
background tokens; the detector is a single affine map applied per token,
producing one proposal (embedding, sigmoid-squashed box, class logits) per
token. On top of that sit the two training loops: proposal-contrastive
pretraining with dual matching against jittered region proposals, and
semi-supervised training from raw soft teacher pseudo-labels with a
cosine-scheduled EMA teacher.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import geometry, losses, matching, rng as rngmod
from .errors import InvalidInput, ShapeError
from .geometry import Box, ScoredBox
from .losses import ContrastConfig, Proposal
from .matching import CostWeights

# Number of leading token components that carry the pre-sigmoid box encoding.
POS_DIMS = 4


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneObject:
    class_id: int
    box: Box
    feature: np.ndarray  # (d_f,)


@dataclass(frozen=True)
class Scene:
    objects: tuple
    background: np.ndarray  # (n_bg, d_f)


@dataclass(frozen=True)
class SceneConfig:
    n_classes: int = 3
    d_f: int = 16
    n_tokens: int = 16
    n_objects: tuple = (1, 3)
    class_spread: float = 6.0
    noise_std: float = 0.5
    bg_std: float = 0.5
    extent_range: tuple = (0.1, 0.4)
    class_means: np.ndarray | None = None  # (n_classes, d_f - POS_DIMS)

    def __post_init__(self):
        if self.d_f <= POS_DIMS:
            raise InvalidInput(f"d_f must exceed {POS_DIMS}, got {self.d_f}")
        lo, hi = self.n_objects
        if not (0 <= lo <= hi <= self.n_tokens):
            raise InvalidInput(f"n_objects range {self.n_objects} incompatible with {self.n_tokens} tokens")
        if self.n_classes < 1:
            raise InvalidInput("need at least one class")


def make_class_means(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    dirs = rng.standard_normal((cfg.n_classes, cfg.d_f - POS_DIMS))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return cfg.class_spread * dirs


def _logit(v: np.ndarray) -> np.ndarray:
    return np.log(v / (1.0 - v))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _random_box(cfg: SceneConfig, rng: np.random.Generator) -> Box:
    lo, hi = cfg.extent_range
    w, h = rng.uniform(lo, hi, size=2)
    cx = rng.uniform(w / 2, 1.0 - w / 2)
    cy = rng.uniform(h / 2, 1.0 - h / 2)
    return Box(cx, cy, w, h)


def gen_scene(cfg: SceneConfig, rng: np.random.Generator) -> Scene:
    """Objects with class-conditioned features (class mean + noise in the
    appearance components, box encoding in the leading components) plus
    background tokens, padded to exactly cfg.n_tokens tokens."""
    means = cfg.class_means
    if means is None:
        means = make_class_means(cfg, rngmod.substream(0, "default-class-means"))
    lo, hi = cfg.n_objects
    n_obj = int(rng.integers(lo, hi + 1))
    objects = []
    for _ in range(n_obj):
        cls = int(rng.integers(cfg.n_classes))
        box = _random_box(cfg, rng)
        feat = np.empty(cfg.d_f)
        feat[:POS_DIMS] = _logit(box.as_array())
        feat[POS_DIMS:] = means[cls] + cfg.noise_std * rng.standard_normal(cfg.d_f - POS_DIMS)
        objects.append(SceneObject(cls, box, feat))
    n_bg = cfg.n_tokens - n_obj
    background = cfg.bg_std * rng.standard_normal((n_bg, cfg.d_f))
    return Scene(tuple(objects), background)


def scene_tokens(scene: Scene) -> np.ndarray:
    parts = []
    if scene.objects:
        parts.append(np.stack([o.feature for o in scene.objects]))
    if len(scene.background):
        parts.append(scene.background)
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# detector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorParams:
    w: np.ndarray  # (k + 4 + C + 1, d_f)
    b: np.ndarray  # (k + 4 + C + 1,)
    n_proposals: int
    embed_dim: int
    n_classes: int

    def __post_init__(self):
        expected = self.embed_dim + 4 + self.n_classes + 1
        if self.w.ndim != 2 or self.w.shape[0] != expected or self.b.shape != (expected,):
            raise ShapeError(f"detector weights must be ({expected}, d_f) with matching bias")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise InvalidInput("detector parameters must be finite")
        if self.n_proposals < 1:
            raise InvalidInput("need at least one proposal slot")


def init_detector(d_f: int, embed_dim: int, n_classes: int, n_proposals: int,
                  rng: np.random.Generator, scale: float = 0.05) -> DetectorParams:
    out = embed_dim + 4 + n_classes + 1
    return DetectorParams(
        w=scale * rng.standard_normal((out, d_f)),
        b=np.zeros(out),
        n_proposals=n_proposals,
        embed_dim=embed_dim,
        n_classes=n_classes,
    )


def zero_detector(d_f: int, embed_dim: int, n_classes: int, n_proposals: int) -> DetectorParams:
    out = embed_dim + 4 + n_classes + 1
    return DetectorParams(np.zeros((out, d_f)), np.zeros(out), n_proposals, embed_dim, n_classes)


class DetectorOutput(NamedTuple):
    z: np.ndarray       # (N, k)
    boxes: np.ndarray   # (N, 4) valid (cx, cy, w, h) in (0, 1)
    logits: np.ndarray  # (N, C + 1), last slot = no-object

    def proposals(self):
        return [Proposal(self.z[i], _box_from_row(self.boxes[i])) for i in range(len(self.z))]

    def predictions(self):
        return [(self.logits[i], _box_from_row(self.boxes[i])) for i in range(len(self.z))]


def _box_from_row(row: np.ndarray) -> Box:
    return Box(float(row[0]), float(row[1]), float(row[2]), float(row[3]))


def detector_forward(params: DetectorParams, tokens) -> DetectorOutput:
    """One proposal per token: embedding head, sigmoid box head, class logits."""
    tokens = np.asarray(tokens, dtype=float)
    if tokens.ndim != 2 or tokens.shape[0] != params.n_proposals or tokens.shape[1] != params.w.shape[1]:
        raise ShapeError(
            f"expected tokens of shape ({params.n_proposals}, {params.w.shape[1]}), got {tokens.shape}"
        )
    raw = tokens @ params.w.T + params.b
    k = params.embed_dim
    return DetectorOutput(
        z=raw[:, :k],
        boxes=_sigmoid(raw[:, k:k + 4]),
        logits=raw[:, k + 4:],
    )


def detector_param_grads(params: DetectorParams, tokens, g_z, g_boxes, g_logits):
    """Chain per-proposal output gradients back to (w, b) through the forward."""
    tokens = np.asarray(tokens, dtype=float)
    raw = tokens @ params.w.T + params.b
    k = params.embed_dim
    boxes = _sigmoid(raw[:, k:k + 4])
    g_raw = np.concatenate([g_z, g_boxes * boxes * (1.0 - boxes), g_logits], axis=1)
    return g_raw.T @ tokens, g_raw.sum(axis=0)


# ---------------------------------------------------------------------------
# EMA teacher
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmaSchedule:
    alpha_start: float = 0.9996
    alpha_end: float = 1.0
    total_epochs: int = 50

    def __post_init__(self):
        if not (0.0 <= self.alpha_start <= self.alpha_end <= 1.0):
            raise InvalidInput("need 0 <= alpha_start <= alpha_end <= 1")
        if self.total_epochs < 1:
            raise InvalidInput("total_epochs must be >= 1")


def ema_update(teacher: DetectorParams, student: DetectorParams, alpha: float) -> DetectorParams:
    """theta_t <- alpha * theta_t + (1 - alpha) * theta_s, elementwise."""
    if not (np.isfinite(alpha) and 0.0 <= alpha <= 1.0):
        raise InvalidInput(f"alpha must lie in [0, 1], got {alpha}")
    if teacher.w.shape != student.w.shape or teacher.b.shape != student.b.shape:
        raise ShapeError("teacher and student parameter shapes differ")
    return replace(
        teacher,
        w=alpha * teacher.w + (1.0 - alpha) * student.w,
        b=alpha * teacher.b + (1.0 - alpha) * student.b,
    )


def cosine_keep_rate(k: float, sched: EmaSchedule) -> float:
    """alpha_end - (alpha_end - alpha_start) * (cos(pi k / K) + 1) / 2."""
    if not (0 <= k <= sched.total_epochs):
        raise InvalidInput(f"epoch {k} outside [0, {sched.total_epochs}]")
    span = sched.alpha_end - sched.alpha_start
    return sched.alpha_end - span * (np.cos(np.pi * k / sched.total_epochs) + 1.0) / 2.0


# ---------------------------------------------------------------------------
# region proposals and feature-space augmentation
# ---------------------------------------------------------------------------

_BG_BOX_TRIES = 1000


def region_proposals(scene: Scene, k: int, jitter_std: float, bg_ratio: float,
                     rng: np.random.Generator):
    """K candidate boxes: ground-truth boxes with coordinate jitter, plus a
    bg_ratio fraction of background boxes rejection-sampled to overlap no
    object above IoU 0.5."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    if not (0.0 <= bg_ratio <= 1.0):
        raise InvalidInput(f"bg_ratio must lie in [0, 1], got {bg_ratio}")
    n_bg = int(round(bg_ratio * k))
    if not scene.objects:
        n_bg = k
    n_gt = k - n_bg
    out = []
    for i in range(n_gt):
        gt = scene.objects[i % len(scene.objects)].box.as_array()
        if jitter_std > 0:
            gt = gt + jitter_std * rng.standard_normal(4)
        cx, cy = np.clip(gt[:2], 0.0, 1.0)
        w, h = np.clip(gt[2:], 0.02, 1.0)
        out.append(Box(float(cx), float(cy), float(w), float(h)))
    gt_boxes = np.stack([o.box.as_array() for o in scene.objects]) if scene.objects else None
    for _ in range(n_bg):
        best, best_overlap = None, np.inf
        for _ in range(_BG_BOX_TRIES):
            w, h = rng.uniform(0.05, 0.3, size=2)
            cx = rng.uniform(w / 2, 1.0 - w / 2)
            cy = rng.uniform(h / 2, 1.0 - h / 2)
            cand = Box(float(cx), float(cy), float(w), float(h))
            overlap = 0.0
            if gt_boxes is not None:
                overlap = float(geometry.iou_matrix(cand.as_array()[None, :], gt_boxes).max())
            if overlap <= 0.5:
                best = cand
                break
            if overlap < best_overlap:
                best, best_overlap = cand, overlap
        out.append(best)
    return out


@dataclass(frozen=True)
class AugmentConfig:
    weak_noise: float = 0.05
    strong_noise: float = 0.2
    mask_prob: float = 0.15


def augment_view(tokens, strength: str, rng: np.random.Generator, cfg: AugmentConfig):
    """Feature-space stand-in for image augmentation.

    "weak" adds small Gaussian noise; "strong" is the second stage applied to
    an already-weakened view: larger noise plus random token zeroing.
    """
    tokens = np.asarray(tokens, dtype=float)
    if strength == "weak":
        if cfg.weak_noise == 0:
            return tokens.copy()
        return tokens + cfg.weak_noise * rng.standard_normal(tokens.shape)
    if strength == "strong":
        out = tokens + cfg.strong_noise * rng.standard_normal(tokens.shape)
        mask = rng.random(tokens.shape[0]) < cfg.mask_prob
        out[mask] = 0.0
        return out
    raise InvalidInput(f"strength must be 'weak' or 'strong', got {strength!r}")


# ---------------------------------------------------------------------------
# pseudo-labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoLabelFlags:
    use_nms: bool = False
    nms_iou: float = 0.5
    confidence_threshold: float | None = None
    hard_labels: bool = False

    def __post_init__(self):
        if self.confidence_threshold is not None and not (0.0 < self.confidence_threshold < 1.0):
            raise InvalidInput(f"confidence_threshold must lie in (0, 1), got {self.confidence_threshold}")


def pseudo_labels(teacher_out: DetectorOutput, flags: PseudoLabelFlags):
    """Targets from raw teacher outputs: by default the full softmax
    distribution and box of every proposal. Optional heuristics reproduce the
    classical post-processing: class-aware NMS first, then a confidence
    threshold on the best real-class probability, then hard argmax labels."""
    n = len(teacher_out.logits)
    probs = np.exp(teacher_out.logits - teacher_out.logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    scores = probs[:, :-1].max(axis=1)
    keep = list(range(n))
    if flags.use_nms:
        cands = [
            ScoredBox(_box_from_row(teacher_out.boxes[i]), float(scores[i]),
                      int(np.argmax(probs[i, :-1])))
            for i in range(n)
        ]
        keep = sorted(geometry.nms(cands, flags.nms_iou))
    if flags.confidence_threshold is not None:
        keep = [i for i in keep if scores[i] >= flags.confidence_threshold]
    out = []
    for i in keep:
        if flags.hard_labels:
            target = int(np.argmax(probs[i]))
        else:
            target = probs[i].copy()
        out.append((target, _box_from_row(teacher_out.boxes[i])))
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

DEFAULT_IOU_THRESHOLDS = np.round(np.arange(0.5, 0.951, 0.05), 2)


def evaluate_map(params: DetectorParams, scenes, iou_thresholds=None) -> float:
    """Mean average precision over classes and IoU thresholds (101-point
    interpolated precision-recall, greedy score-descending matching)."""
    if len(scenes) == 0:
        raise InvalidInput("need at least one scene")
    thresholds = DEFAULT_IOU_THRESHOLDS if iou_thresholds is None else np.asarray(iou_thresholds, dtype=float)
    detections = []  # (score, scene idx, class, box row)
    gt = []          # per scene: (classes array, boxes array)
    for si, scene in enumerate(scenes):
        out = detector_forward(params, scene_tokens(scene))
        probs = np.exp(out.logits - out.logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        for i in range(len(probs)):
            cls = int(np.argmax(probs[i]))
            if cls == params.n_classes:
                continue
            detections.append((float(probs[i, cls]), si, cls, out.boxes[i]))
        classes = np.array([o.class_id for o in scene.objects], dtype=int)
        boxes = (
            np.stack([o.box.as_array() for o in scene.objects])
            if scene.objects else np.zeros((0, 4))
        )
        gt.append((classes, boxes))

    present = sorted({int(c) for classes, _ in gt for c in classes})
    if not present:
        return 0.0
    recall_grid = np.linspace(0.0, 1.0, 101)
    aps = []
    for cls in present:
        n_gt = sum(int((classes == cls).sum()) for classes, _ in gt)
        dets = sorted(
            [d for d in detections if d[2] == cls], key=lambda d: (-d[0], d[1])
        )
        for thr in thresholds:
            taken = [np.zeros(len(classes), dtype=bool) for classes, _ in gt]
            tp = np.zeros(len(dets))
            for di, (_, si, _, dbox) in enumerate(dets):
                classes, boxes = gt[si]
                cand = np.nonzero((classes == cls) & ~taken[si])[0]
                if len(cand) == 0:
                    continue
                ious = geometry.iou_matrix(dbox[None, :], boxes[cand])[0]
                best = int(np.argmax(ious))
                if ious[best] >= thr:
                    taken[si][cand[best]] = True
                    tp[di] = 1.0
            cum_tp = np.cumsum(tp)
            recall = cum_tp / n_gt
            precision = cum_tp / np.arange(1, len(dets) + 1)
            ap = 0.0
            for r in recall_grid:
                mask = recall >= r
                ap += float(precision[mask].max()) if mask.any() else 0.0
            aps.append(ap / len(recall_grid))
    return float(np.mean(aps))


# ---------------------------------------------------------------------------
# proposal-contrastive pretraining loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProsecoConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    aug: AugmentConfig = field(default_factory=AugmentConfig)
    lambda_contrast: float = 2.0
    ema_alpha: float = 0.999
    lr: float = 0.01
    embed_dim: int = 8
    n_regions: int = 8
    jitter_std: float = 0.02
    bg_ratio: float = 0.25
    batch_scenes: int = 4


@dataclass
class ProsecoState:
    student: DetectorParams
    teacher: DetectorParams
    step: int
    seed: int


def init_proseco(cfg: ProsecoConfig, seed: int) -> ProsecoState:
    student = init_detector(
        cfg.scene.d_f, cfg.embed_dim, cfg.scene.n_classes, cfg.scene.n_tokens,
        rngmod.substream(seed, "proseco-init"),
    )
    return ProsecoState(student=student, teacher=copy.deepcopy(student), step=0, seed=seed)


def proseco_step(state: ProsecoState, scenes, cfg: ProsecoConfig):
    """One pretraining step: teacher proposals from the weak view, student
    predictions from the strong view, dual matching (proposal-contrastive and
    student-box to region proposals), one gradient step on the student, EMA
    teacher update with the constant keep rate."""
    teacher_batches, student_batches, region_batches = [], [], []
    prop_sigmas, box_sigmas = [], []
    token_batches, weak_batches, strong_batches = [], [], []
    for i, scene in enumerate(scenes):
        tokens = scene_tokens(scene)
        weak = augment_view(tokens, "weak", rngmod.substream(state.seed, "ps-weak", state.step, i), cfg.aug)
        strong = augment_view(weak, "strong", rngmod.substream(state.seed, "ps-strong", state.step, i), cfg.aug)
        t_out = detector_forward(state.teacher, weak)
        s_out = detector_forward(state.student, strong)
        regions = region_proposals(
            scene, cfg.n_regions, cfg.jitter_std, cfg.bg_ratio,
            rngmod.substream(state.seed, "ps-regions", state.step, i),
        )
        t_props = t_out.proposals()
        s_props = s_out.proposals()
        prop_sigmas.append(matching.hungarian(matching.prop_cost_matrix(t_props, s_props, cfg.weights)))
        box_sigmas.append(matching.hungarian(matching.box_cost_matrix(regions, [p.box for p in s_props], cfg.weights)))
        teacher_batches.append(t_props)
        student_batches.append(s_props)
        region_batches.append(regions)
        token_batches.append(tokens)
        weak_batches.append(weak)
        strong_batches.append(strong)

    loss = losses.proseco_loss(
        teacher_batches, student_batches, region_batches, prop_sigmas, box_sigmas,
        cfg.weights, cfg.contrast, cfg.lambda_contrast,
    )
    contrast_part = (
        cfg.lambda_contrast * losses.loc_sce(teacher_batches, student_batches, prop_sigmas, cfg.contrast)
        if cfg.lambda_contrast > 0 else 0.0
    )
    g_z, g_boxes = losses.proseco_grads(
        teacher_batches, student_batches, region_batches, prop_sigmas, box_sigmas,
        cfg.weights, cfg.contrast, cfg.lambda_contrast,
    )
    n = cfg.scene.n_tokens
    g_w = np.zeros_like(state.student.w)
    g_b = np.zeros_like(state.student.b)
    g_logits = np.zeros((n, cfg.scene.n_classes + 1))
    for i in range(len(scenes)):
        gw, gb = detector_param_grads(
            state.student, strong_batches[i],
            g_z[i * n:(i + 1) * n], g_boxes[i * n:(i + 1) * n], g_logits,
        )
        g_w += gw
        g_b += gb
    state.student = replace(state.student, w=state.student.w - cfg.lr * g_w,
                            b=state.student.b - cfg.lr * g_b)
    state.teacher = ema_update(state.teacher, state.student, cfg.ema_alpha)
    state.step += 1
    return {"loss": float(loss), "contrast_loss": float(contrast_part),
            "box_loss": float(loss - contrast_part)}


# ---------------------------------------------------------------------------
# semi-supervised loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MtDetrConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    aug: AugmentConfig = field(default_factory=AugmentConfig)
    lr: float = 0.01
    embed_dim: int = 8


@dataclass
class MtDetrState:
    student: DetectorParams
    teacher: DetectorParams
    step: int
    seed: int
    cfg: MtDetrConfig


def _scene_targets(scene: Scene):
    return [(o.class_id, o.box) for o in scene.objects]


def _pseudo_cost_matrix(targets, predictions, w: CostWeights) -> np.ndarray:
    """Matching cost mirroring the unsupervised loss integrand: distribution
    cross-entropy class term plus the box terms."""
    m = np.empty((len(targets), len(predictions)))
    for a, (dist, tbox) in enumerate(targets):
        if np.ndim(dist) == 0:
            onehot = np.zeros(predictions[0][0].size)
            onehot[int(dist)] = 1.0
            dist = onehot
        for b, (logits, pbox) in enumerate(predictions):
            ce = losses.distribution_cross_entropy(dist, logits)
            m[a, b] = (
                w.lambda_class * ce
                + w.lambda_l1 * geometry.l1_box_loss(tbox, pbox)
                + w.lambda_giou * geometry.giou_loss(tbox, pbox)
            )
    return m


def _supervised_pass(student: DetectorParams, scenes, cfg: MtDetrConfig, seed, *label):
    """Loss and parameter gradient of the supervised branch over `scenes`."""
    total = 0.0
    g_w = np.zeros_like(student.w)
    g_b = np.zeros_like(student.b)
    for i, scene in enumerate(scenes):
        tokens = scene_tokens(scene)
        view = augment_view(tokens, "weak", rngmod.substream(seed, *label, "sup-aug", i), cfg.aug)
        out = detector_forward(student, view)
        preds = out.predictions()
        targets = _scene_targets(scene)
        sigma = matching.hungarian(matching.supervised_cost_matrix(targets, preds, cfg.weights)) \
            if targets else np.zeros(0, dtype=int)
        total += losses.supervised_detr_loss([targets], [preds], [sigma], cfg.weights)
        (g_logits, g_boxes), = losses.supervised_detr_grads([targets], [preds], [sigma], cfg.weights)
        gw, gb = detector_param_grads(student, view, np.zeros_like(out.z), g_boxes, g_logits)
        g_w += gw
        g_b += gb
    return total, g_w, g_b


def supervised_finetune(cfg: MtDetrConfig, labeled_scenes, steps: int, seed: int) -> DetectorParams:
    """Plain supervised training on the labeled scenes (the initialization
    used before semi-supervised training)."""
    params = init_detector(
        cfg.scene.d_f, cfg.embed_dim, cfg.scene.n_classes, cfg.scene.n_tokens,
        rngmod.substream(seed, "finetune-init"),
    )
    n_l = len(labeled_scenes)
    for step in range(steps):
        loss, g_w, g_b = _supervised_pass(params, labeled_scenes, cfg, seed, "finetune", step)
        params = replace(params, w=params.w - cfg.lr * g_w / n_l, b=params.b - cfg.lr * g_b / n_l)
    return params


def init_mtdetr(cfg: MtDetrConfig, labeled_scenes, seed: int, burnin_steps: int = 300) -> MtDetrState:
    student = supervised_finetune(cfg, labeled_scenes, burnin_steps, seed)
    return MtDetrState(student=student, teacher=copy.deepcopy(student), step=0, seed=seed, cfg=cfg)


def mtdetr_step(state: MtDetrState, labeled, unlabeled, flags: PseudoLabelFlags,
                lambda_u: float, epoch: float, sched: EmaSchedule):
    """One semi-supervised step: supervised branch on labeled scenes,
    pseudo-label branch on unlabeled scenes (teacher on the weak view,
    student on the strong view, matched by the unsupervised integrand cost),
    combined as sup/N_l + lambda_u * unsup/N_u, then an EMA update with the
    cosine-scheduled keep rate."""
    cfg = state.cfg
    n_l = max(1, len(labeled))
    sup_loss, g_w, g_b = _supervised_pass(state.student, labeled, cfg, state.seed, "mt", state.step)
    sup_loss /= n_l
    g_w /= n_l
    g_b /= n_l

    unsup_loss = 0.0
    if lambda_u > 0 and len(unlabeled) > 0:
        n_u = len(unlabeled)
        uw = np.zeros_like(g_w)
        ub = np.zeros_like(g_b)
        for i, scene in enumerate(unlabeled):
            tokens = scene_tokens(scene)
            weak = augment_view(tokens, "weak", rngmod.substream(state.seed, "mt", state.step, "u-weak", i), cfg.aug)
            strong = augment_view(weak, "strong", rngmod.substream(state.seed, "mt", state.step, "u-strong", i), cfg.aug)
            t_out = detector_forward(state.teacher, weak)
            s_out = detector_forward(state.student, strong)
            targets = pseudo_labels(t_out, flags)
            if not targets:
                continue
            preds = s_out.predictions()
            sigma = matching.hungarian(_pseudo_cost_matrix(targets, preds, cfg.weights))
            unsup_loss += losses.unsupervised_detr_loss([targets], [preds], [sigma], cfg.weights)
            (g_logits, g_boxes), = losses.unsupervised_detr_grads([targets], [preds], [sigma], cfg.weights)
            gw, gb = detector_param_grads(state.student, strong, np.zeros_like(s_out.z), g_boxes, g_logits)
            uw += gw
            ub += gb
        unsup_loss /= n_u
        g_w = g_w + lambda_u * uw / n_u
        g_b = g_b + lambda_u * ub / n_u

    state.student = replace(state.student, w=state.student.w - cfg.lr * g_w,
                            b=state.student.b - cfg.lr * g_b)
    alpha = cosine_keep_rate(epoch, sched)
    state.teacher = ema_update(state.teacher, state.student, alpha)
    state.step += 1
    total = sup_loss + lambda_u * unsup_loss
    return {"loss": float(total), "sup_loss": float(sup_loss), "unsup_loss": float(unsup_loss)}
