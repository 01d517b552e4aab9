"""Dense linear-algebra substrate.

Float64 numpy throughout; everything here is a pure function. Matrices are
2-D row-major arrays, order-3 tensors are 3-D arrays.
"""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInput, NumericalError, ShapeError


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return m


def as_tensor3(t, name: str = "tensor") -> np.ndarray:
    a = np.asarray(t, dtype=float)
    if a.ndim != 3 or a.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 3-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 1-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


class SvdResult(NamedTuple):
    u: np.ndarray                # (rows, r) orthonormal columns
    singular_values: np.ndarray  # (r,) non-negative, descending
    v: np.ndarray                # (cols, r) orthonormal columns


def svd(m) -> SvdResult:
    """Thin SVD with r = min(rows, cols) singular values, descending."""
    m = as_matrix(m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SvdResult(u=u, singular_values=s, v=vt.T)


def softmax(v, temperature: float = 1.0) -> np.ndarray:
    """Stable softmax of v/temperature (max subtracted before exponentiation)."""
    if not np.isfinite(temperature) or temperature <= 0:
        raise InvalidInput(f"temperature must be positive, got {temperature}")
    x = as_vector(v, "logits") / temperature
    e = np.exp(x - x.max())
    return e / e.sum()


def n_mode_product(t, m, mode: int) -> np.ndarray:
    """Mode-n product of an order-3 tensor with a matrix (mode in {1, 2, 3}).

    out[..., r, ...] = sum_a m[r, a] * t[..., a, ...] along the given mode;
    the output's size at `mode` is m.shape[0].
    """
    t = as_tensor3(t)
    m = as_matrix(m)
    if mode not in (1, 2, 3):
        raise InvalidInput(f"mode must be 1, 2 or 3, got {mode}")
    axis = mode - 1
    if m.shape[1] != t.shape[axis]:
        raise ShapeError(
            f"matrix has {m.shape[1]} columns but tensor mode {mode} has size {t.shape[axis]}"
        )
    out = np.tensordot(m, t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def kron(a, b) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def vec(t) -> np.ndarray:
    """Flatten an order-3 tensor with the first index slowest, the last fastest.

    This ordering makes vec(T x3 Mf x2 Mi x1 Mo) = (Mo (x) I (x) I)(I (x) Mi (x) I)
    (I (x) I (x) Mf) vec(T) hold with `kron` above.
    """
    return as_tensor3(t).reshape(-1)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    Accepts arrays of any shape (the gradient has the same shape).
    """
    if not np.isfinite(h) or h <= 0:
        raise InvalidInput(f"step h must be positive, got {h}")
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"function evaluated to a non-finite value near index {idx}")
        g[idx] = (fp - fm) / (2.0 * h)
    return g
