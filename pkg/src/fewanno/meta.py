"""Desk-scale episodic framework.

Synthetic N-way K-shot tasks over Gaussian class blobs, prototype trainers
with a linear encoder (vanilla, normalized prototypes, singular-value-entropy
regularized), the closed-form linear-regression simulator whose condition
number never decreases under colinear task parameters, a constructive
two-task example where two representations fit identical data with wildly
different predictor conditioning, infinite-mixture prototype inference, and
the Kronecker-structured gradient transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import losses, numerics, rng as rngmod, spectral
from .errors import (
    DegenerateMatrix,
    InvalidEpisode,
    InvalidInput,
    ShapeError,
    TrainingDiverged,
)

# Cap on the number of episodes whose prototypes are re-stacked with the
# frozen final encoder for the full-history condition number.
FULL_STACK_CAP = 2000


@dataclass(frozen=True)
class TaskGenConfig:
    d: int = 16
    n_way: int = 5
    k_shot: int = 1
    q_queries: int = 15
    class_spread: float = 4.0
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.d, self.n_way, self.k_shot, self.q_queries) < 1:
            raise InvalidInput("d, n_way, k_shot and q_queries must all be positive")
        if self.noise_std < 0 or not np.isfinite(self.noise_std):
            raise InvalidInput(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class Episode:
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray


@dataclass(frozen=True)
class LinearEncoder:
    phi: np.ndarray  # (k, d)

    def __post_init__(self):
        object.__setattr__(self, "phi", numerics.as_matrix(self.phi, "phi"))

    def encode(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.phi.T


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    kappa_wn: list = field(default_factory=list)
    frob_wn: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    final_kappa_full: float | None = None

    def append(self, step, loss, kappa, frob, acc):
        for v in (loss, kappa, frob, acc):
            if not np.isfinite(v):
                raise TrainingDiverged(f"non-finite training metric at step {step}")
        self.steps.append(int(step))
        self.loss.append(float(loss))
        self.kappa_wn.append(float(kappa))
        self.frob_wn.append(float(frob))
        self.accuracy.append(float(acc))

    def rows(self):
        return list(zip(self.steps, self.loss, self.kappa_wn, self.frob_wn, self.accuracy))


def sample_episode(cfg: TaskGenConfig, rng: np.random.Generator) -> Episode:
    """Class means drawn uniformly on the sphere of radius class_spread;
    samples are mean + isotropic Gaussian noise. Class-major ordering."""
    dirs = rng.standard_normal((cfg.n_way, cfg.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = cfg.class_spread * dirs
    sx = np.repeat(means, cfg.k_shot, axis=0)
    sx = sx + cfg.noise_std * rng.standard_normal(sx.shape)
    sy = np.repeat(np.arange(cfg.n_way), cfg.k_shot)
    qx = np.repeat(means, cfg.q_queries, axis=0)
    qx = qx + cfg.noise_std * rng.standard_normal(qx.shape)
    qy = np.repeat(np.arange(cfg.n_way), cfg.q_queries)
    return Episode(sx, sy, qx, qy)


def prototypes(support, encoder: LinearEncoder, normalize: bool = False,
               n_classes: int | None = None) -> np.ndarray:
    """Per-class means of the encoded support inputs, one row per class;
    rows are unit-normalized when `normalize` is set."""
    x, y = support
    enc = encoder.encode(x)
    y = np.asarray(y)
    n_cls = int(n_classes) if n_classes is not None else int(y.max()) + 1
    rows = []
    for c in range(n_cls):
        members = enc[y == c]
        if members.shape[0] == 0:
            raise InvalidEpisode(f"class {c} has no support points")
        rows.append(members.mean(axis=0))
    w = np.stack(rows)
    if normalize:
        norms = np.linalg.norm(w, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise InvalidEpisode("zero-norm prototype cannot be normalized")
        w = w / norms
    return w


VARIANTS = ("vanilla", "normalized", "normalized+entropy")


def train_protonet(cfg: TaskGenConfig, episodes: int, variant: str, lr: float,
                   rng: np.random.Generator, embed_dim: int = 8,
                   batch_episodes: int = 4, entropy_lambda: float = 1.0) -> TrainLog:
    """Gradient descent on the prototype objective with a linear encoder.

    Per batch of episodes, the predictor matrix W_N stacks the batch's
    prototypes (normalized rows for the normalized variants); its condition
    number and Frobenius norm are logged alongside loss and query accuracy.
    The "normalized+entropy" variant adds entropy_lambda * H_sigma(W_N) to
    the objective. Step 0 logs the pre-update metrics of a probe batch.
    """
    if variant not in VARIANTS:
        raise InvalidInput(f"variant must be one of {VARIANTS}, got {variant!r}")
    if not (np.isfinite(lr) and lr > 0):
        raise InvalidInput(f"lr must be positive, got {lr}")
    normalize = variant != "vanilla"
    use_entropy = variant == "normalized+entropy"

    phi = rng.standard_normal((embed_dim, cfg.d)) / np.sqrt(cfg.d)
    log = TrainLog()
    episode_means: list[np.ndarray] = []

    n_batches = int(np.ceil(episodes / batch_episodes)) if episodes > 0 else 0
    remaining = episodes
    for step in range(n_batches + 1):
        size = batch_episodes if step == 0 else min(batch_episodes, remaining)
        batch = [sample_episode(cfg, rng) for _ in range(size)]
        enc = LinearEncoder(phi)
        metrics, g_phi, batch_means = _protonet_batch(
            batch, enc, cfg, normalize, use_entropy, entropy_lambda
        )
        log.append(step, *metrics)
        if step == 0:
            continue  # probe batch: metrics only, no update
        if len(episode_means) < FULL_STACK_CAP:
            episode_means.extend(batch_means[: FULL_STACK_CAP - len(episode_means)])
        phi = phi - lr * g_phi
        if not np.all(np.isfinite(phi)):
            raise TrainingDiverged(f"encoder became non-finite at step {step}")
        remaining -= size

    log.final_kappa_full = _kappa_full_stack(episode_means, LinearEncoder(phi), normalize)
    return log


def _protonet_batch(batch, encoder, cfg, normalize, use_entropy, entropy_lambda):
    """Loss/metrics and the encoder gradient for one batch of episodes."""
    phi = encoder.phi
    losses_sum = 0.0
    acc_sum = 0.0
    g_phi = np.zeros_like(phi)
    wn_rows = []
    batch_means = []
    n = len(batch)
    for ep in batch:
        es = encoder.encode(ep.support_x)
        eq = encoder.encode(ep.query_x)
        loss, protos = losses.proto_loss((es, ep.support_y), (eq, ep.query_y), normalize)
        g_s, g_q = losses.proto_loss_grads((es, ep.support_y), (eq, ep.query_y), normalize)
        g_phi += (g_s.T @ ep.support_x + g_q.T @ ep.query_x) / n
        losses_sum += loss / n
        d = np.sum((eq[:, None, :] - protos[None, :, :]) ** 2, axis=-1)
        acc_sum += float(np.mean(np.argmin(d, axis=1) == ep.query_y)) / n
        wn_rows.append(protos)
        means = np.stack([ep.support_x[ep.support_y == c].mean(axis=0) for c in range(cfg.n_way)])
        batch_means.append(means)
    w_n = np.vstack(wn_rows)
    kappa = spectral.condition_number(w_n)
    frob = float(np.linalg.norm(w_n))
    total = losses_sum
    if use_entropy:
        total += entropy_lambda * spectral.sv_entropy(w_n)
        g_wn = entropy_lambda * spectral.grad_sv_entropy(w_n)
        row = 0
        for ep, means in zip(batch, batch_means):
            protos_raw = np.stack(
                [encoder.encode(ep.support_x[ep.support_y == c]).mean(axis=0) for c in range(cfg.n_way)]
            )
            for c in range(cfg.n_way):
                g_row = g_wn[row + c]
                if normalize:
                    norm = np.linalg.norm(protos_raw[c])
                    unit = protos_raw[c] / norm
                    g_row = (g_row - (unit @ g_row) * unit) / norm
                g_phi += np.outer(g_row, means[c])
            row += cfg.n_way
    return (total, kappa, frob, acc_sum), g_phi, batch_means


def _kappa_full_stack(episode_means, encoder, normalize) -> float | None:
    if not episode_means:
        return None
    rows = np.vstack([encoder.encode(m) for m in episode_means])
    if normalize:
        rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    try:
        return spectral.condition_number(rows)
    except DegenerateMatrix:
        return float("inf")


# ---------------------------------------------------------------------------
# closed-form gradient-based simulator
# ---------------------------------------------------------------------------

class MamlTrajectory(NamedTuple):
    matrices: list          # W2^i, each (2, d): rows (w_i, w_{i+1})
    kappas: np.ndarray      # condition numbers, +inf where degenerate
    thetas: np.ndarray      # the task parameters consumed, (T+1, d)


def maml_update(w: np.ndarray, theta: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """One meta-update of the linear-regression model:
    w <- w - beta * (1 - alpha)^2 * (w - theta)."""
    c = beta * (1.0 - alpha) ** 2
    return (1.0 - c) * w + c * theta


def maml_linreg_sim(iterations: int, alpha: float, beta: float, d: int,
                    mode: str, rng: np.random.Generator) -> MamlTrajectory:
    """Closed-form predictor trajectory of the linear-regression model.

    iid mode draws task parameters theta_t ~ N(0, I_d); colinear mode chains
    theta_{t+1} = c_t * theta_t with c_t ~ U[0.5, 2], which keeps every
    consecutive task-parameter pair rank-1. In that mode the stacked last-two
    predictors are themselves rank-1, so their condition number is reported
    as +inf (and trivially never decreases).
    """
    if d < 2:
        raise InvalidInput(f"d must be >= 2, got {d}")
    c = beta * (1.0 - alpha) ** 2
    if not (0.0 < c < 2.0):
        raise InvalidInput(f"beta * (1 - alpha)^2 must lie in (0, 2), got {c}")
    if mode not in ("iid", "colinear"):
        raise InvalidInput(f"mode must be 'iid' or 'colinear', got {mode!r}")
    if iterations < 1:
        raise InvalidInput("iterations must be >= 1")

    if mode == "iid":
        thetas = rng.standard_normal((iterations + 1, d))
    else:
        direction = rng.standard_normal(d)
        scales = np.concatenate([[1.0], rng.uniform(0.5, 2.0, size=iterations)]).cumprod()
        thetas = scales[:, None] * direction[None, :]

    w = np.zeros(d)
    ws = []
    for t in range(iterations + 1):
        w = maml_update(w, thetas[t], alpha, beta)
        ws.append(w.copy())

    matrices = []
    kappas = np.empty(iterations)
    for i in range(iterations):
        w2 = np.stack([ws[i], ws[i + 1]])
        matrices.append(w2)
        try:
            kappas[i] = spectral.condition_number(w2)
        except DegenerateMatrix:
            kappas[i] = np.inf
    return MamlTrajectory(matrices, kappas, thetas)


# ---------------------------------------------------------------------------
# constructive two-task example
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prop44Result:
    phi_star: np.ndarray     # (d, 2) projector onto the first two coordinates
    w_star: np.ndarray       # (2, 2): [[1, eps], [1, -eps]]
    phi_hat: np.ndarray      # (d, 2) projector onto coordinates 2-3
    w_hat: np.ndarray        # (2, 2): [[0, 1], [1, -eps]]
    kappa_star: float        # closed form 1/eps
    kappa_hat: float         # closed form
    kappa_star_svd: float    # cross-check via SVD
    kappa_hat_svd: float
    max_residual: float      # worst |y - <w, phi(x)>| over the generated samples


# The construction's free scalar; every identity below holds for any value.
_PROP44_K = 2.0


def kappa_hat_closed_form(epsilon: float) -> float:
    e2 = epsilon * epsilon
    root = epsilon * np.sqrt(e2 + 4.0)
    return float(np.sqrt((2.0 + e2 + root) / (2.0 + e2 - root)))


def prop44_example(epsilon: float, d: int = 3, n_samples: int = 32) -> Prop44Result:
    """Two tasks, one data set, two exact linear fits: the projector onto the
    first two coordinates needs predictors with condition number 1/eps, while
    the projector onto coordinates 2-3 fits the same labels with condition
    number -> 1 as eps -> 0. Labeled samples from both task distributions are
    generated and checked against both (representation, predictor) pairs.
    """
    if not (0.0 < epsilon < 1.0):
        raise InvalidInput(f"epsilon must lie in (0, 1), got {epsilon}")
    if d < 3:
        raise InvalidInput(f"d must be >= 3, got {d}")
    k = _PROP44_K
    phi_star = np.zeros((d, 2))
    phi_star[0, 0] = 1.0
    phi_star[1, 1] = 1.0
    w_star = np.array([[1.0, epsilon], [1.0, -epsilon]])
    phi_hat = np.zeros((d, 2))
    phi_hat[1, 0] = 1.0
    phi_hat[2, 1] = 1.0
    w_hat = np.array([[0.0, 1.0], [1.0, -epsilon]])

    gen = rngmod.substream(0, "prop44-tail-coords")
    residual = 0.0
    for task, pts in enumerate(_prop44_samples(epsilon, k, d, n_samples, gen)):
        for x, y in pts:
            for phi, w in ((phi_star, w_star), (phi_hat, w_hat)):
                residual = max(residual, abs(y - float(w[task] @ (phi.T @ x))))

    return Prop44Result(
        phi_star=phi_star,
        w_star=w_star,
        phi_hat=phi_hat,
        w_hat=w_hat,
        kappa_star=1.0 / epsilon,
        kappa_hat=kappa_hat_closed_form(epsilon),
        kappa_star_svd=spectral.condition_number(w_star),
        kappa_hat_svd=spectral.condition_number(w_hat),
        max_residual=residual,
    )


def _prop44_samples(epsilon, k, d, n, gen):
    ke = k * epsilon
    # (first three coordinates, label) per branch of each task distribution
    task1 = [((1.0 - ke, k, 1.0), 1.0), ((-(1.0 + ke), k, -1.0), -1.0)]
    task2 = [((1.0 + ke, k, (k - 1.0) / epsilon), 1.0), ((-1.0 + ke, k, (1.0 + k) / epsilon), -1.0)]
    for branches in (task1, task2):
        pts = []
        for head, y in branches:
            for _ in range(max(1, n // 2)):
                x = np.empty(d)
                x[:3] = head
                x[3:] = gen.standard_normal(d - 3)
                pts.append((x, y))
        yield pts


# ---------------------------------------------------------------------------
# infinite mixture prototypes
# ---------------------------------------------------------------------------

def imp_infer(support, query_x, lambda_thresh: float, sigma_cluster: float,
              encoder: LinearEncoder):
    """Multi-cluster prototype inference.

    Clusters start at the class means; any support point whose squared
    distance to every existing cluster exceeds lambda_thresh spawns a new
    cluster of its own class. One soft-assignment pass (normalized Gaussian
    density, within-class) re-estimates the cluster means, and each query is
    classified by the softmax over distances to the closest cluster of each
    class. A very large threshold reduces exactly to nearest-prototype
    classification.

    Returns (predicted labels, list of (mean, class label) clusters).
    """
    if not (np.isfinite(lambda_thresh) and lambda_thresh > 0):
        raise InvalidInput(f"lambda_thresh must be positive, got {lambda_thresh}")
    if not (np.isfinite(sigma_cluster) and sigma_cluster > 0):
        raise InvalidInput(f"sigma_cluster must be positive, got {sigma_cluster}")
    sx, sy = support
    sx = np.asarray(sx, dtype=float)
    sy = np.asarray(sy)
    if sx.size == 0:
        raise InvalidEpisode("empty support set")
    h = encoder.encode(sx)
    hq = encoder.encode(np.asarray(query_x, dtype=float))
    classes = np.unique(sy)

    means = [h[sy == c].mean(axis=0) for c in classes]
    labels = [int(c) for c in classes]
    for i in range(h.shape[0]):
        d2 = np.array([np.sum((h[i] - m) ** 2) for m in means])
        if d2.min() > lambda_thresh:
            means.append(h[i].copy())
            labels.append(int(sy[i]))

    # one soft-assignment pass, within each class
    mu = np.stack(means)
    lab = np.asarray(labels)
    new_means = mu.copy()
    for c in classes:
        idx = np.nonzero(lab == c)[0]
        pts = h[sy == c]
        d2 = np.sum((pts[:, None, :] - mu[idx][None, :, :]) ** 2, axis=-1)
        w = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) / (2.0 * sigma_cluster**2))
        w /= w.sum(axis=1, keepdims=True)
        for a, ci in enumerate(idx):
            mass = w[:, a].sum()
            if mass > 0:
                new_means[ci] = (w[:, a] @ pts) / mass

    # classify queries by the closest cluster per class
    d2_clusters = np.sum((hq[:, None, :] - new_means[None, :, :]) ** 2, axis=-1)
    per_class = np.stack(
        [d2_clusters[:, lab == c].min(axis=1) for c in classes], axis=1
    )
    preds = classes[np.argmin(per_class, axis=1)]
    clusters = [(new_means[i], int(lab[i])) for i in range(len(lab))]
    return preds, clusters


# ---------------------------------------------------------------------------
# Kronecker-structured gradient transform
# ---------------------------------------------------------------------------

def mc_transform(g, m_o, m_i, m_f) -> np.ndarray:
    """Mode products of an order-3 gradient tensor with three square matrices:
    g x3 m_f x2 m_i x1 m_o. Equivalent to (m_o (x) m_i (x) m_f) vec(g)."""
    g = numerics.as_tensor3(g, "gradient tensor")
    for m, mode in ((m_o, 1), (m_i, 2), (m_f, 3)):
        m = numerics.as_matrix(m)
        if m.shape[0] != m.shape[1] or m.shape[1] != g.shape[mode - 1]:
            raise ShapeError(
                f"transform matrix for mode {mode} must be square of size {g.shape[mode - 1]}, "
                f"got {m.shape}"
            )
    out = numerics.n_mode_product(g, m_f, 3)
    out = numerics.n_mode_product(out, m_i, 2)
    return numerics.n_mode_product(out, m_o, 1)
