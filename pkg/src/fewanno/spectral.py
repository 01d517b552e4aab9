"""Spectral measures and regularizers over predictor matrices.

A predictor matrix stacks one linear predictor (or prototype) per row.
The condition number kappa = sigma_max / sigma_min over the r = min(N, k)
singular values measures how evenly the predictors cover the embedding
space; the singular-value entropy H = sum_i p_i log p_i with
p = softmax(sigma) is its smooth surrogate (<= 0, minimized at equal
singular values). Analytic gradients use d sigma_i / dW = u_i v_i^T.
"""
from __future__ import annotations

import numpy as np

from . import numerics
from .errors import DegenerateMatrix, NonSmoothPoint

# Below this, sigma_min is treated as zero and ratio-based quantities are refused.
DEGENERACY_RTOL = 1e-12
# Relative gap under which singular values count as repeated (gradients undefined).
GAP_RTOL = 1e-9


def _checked_svd(w) -> numerics.SvdResult:
    res = numerics.svd(numerics.as_matrix(w, "predictor matrix"))
    s = res.singular_values
    if s[-1] <= DEGENERACY_RTOL * s[0]:
        raise DegenerateMatrix(
            f"sigma_min = {s[-1]:.3e} below tolerance relative to sigma_max = {s[0]:.3e}; "
            "the predictors are (numerically) linearly dependent"
        )
    return res


def condition_number(w) -> float:
    """sigma_max / sigma_min over the r = min(N, k) singular values; always >= 1."""
    s = _checked_svd(w).singular_values
    return float(s[0] / s[-1])


def sv_entropy(w) -> float:
    """sum_i p_i log p_i with p = softmax of the singular values (temperature 1).

    Lies in [-log r, 0]; equals -log r exactly at equal singular values and 0
    for a single predictor.
    """
    s = _checked_svd(w).singular_values
    p = numerics.softmax(s)
    return float(np.sum(p * np.log(p)))


def grad_condition_number(w) -> np.ndarray:
    """Gradient of the condition number w.r.t. the matrix entries.

    d kappa / dW = (sigma_min * u_1 v_1^T - sigma_max * u_r v_r^T) / sigma_min^2.
    """
    res = _checked_svd(w)
    u, s, v = res
    r = len(s)
    if r < 2:
        # kappa is identically 1 for a single predictor.
        return np.zeros((u.shape[0], v.shape[0]))
    if (s[0] - s[1]) <= GAP_RTOL * s[0] or (s[-2] - s[-1]) <= GAP_RTOL * s[0]:
        raise NonSmoothPoint("repeated extreme singular values; kappa gradient undefined")
    top = np.outer(u[:, 0], v[:, 0])
    bot = np.outer(u[:, -1], v[:, -1])
    return (s[-1] * top - s[0] * bot) / s[-1] ** 2


def grad_sv_entropy(w) -> np.ndarray:
    """Gradient of sv_entropy: dH/d sigma_j = p_j (log p_j - H) chained through u_j v_j^T."""
    res = _checked_svd(w)
    u, s, v = res
    r = len(s)
    if r >= 2 and np.any(np.diff(s) >= -GAP_RTOL * s[0]):
        # diff of a descending sequence is <= 0; entries near 0 mean repeats
        raise NonSmoothPoint("repeated singular values; entropy gradient undefined")
    p = numerics.softmax(s)
    h = float(np.sum(p * np.log(p)))
    coeff = p * (np.log(p) - h)
    # sum_j coeff_j * u_j v_j^T
    return (u * coeff) @ v.T


def frobenius_sq(w) -> float:
    w = numerics.as_matrix(w, "predictor matrix")
    return float(np.sum(w * w))


def spectral_regularizer(w, lambda1: float, lambda2: float) -> float:
    """lambda1 * kappa(W) + lambda2 * ||W||_F^2 (each term skipped at weight 0)."""
    _check_weight(lambda1, "lambda1")
    _check_weight(lambda2, "lambda2")
    total = 0.0
    if lambda1 > 0:
        total += lambda1 * condition_number(w)
    if lambda2 > 0:
        total += lambda2 * frobenius_sq(w)
    return total


def entropy_regularizer(w, lambda1: float) -> float:
    """lambda1 * sv_entropy(W) (skipped at weight 0)."""
    _check_weight(lambda1, "lambda1")
    if lambda1 == 0:
        return 0.0
    return lambda1 * sv_entropy(w)


def _check_weight(value: float, name: str) -> None:
    if not np.isfinite(value) or value < 0:
        from .errors import InvalidInput

        raise InvalidInput(f"{name} must be a finite non-negative real, got {value}")
