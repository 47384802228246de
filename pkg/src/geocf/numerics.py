"""Dense float64 helpers shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64, stored
row-major, with rows treated as samples.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_FD_STEP = 1e-5


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-D C-contiguous float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with max subtraction; each output row sums to one."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp_rows(m: np.ndarray) -> np.ndarray:
    mx = m.max(axis=-1)
    return mx + np.log(np.exp(m - mx[..., None]).sum(axis=-1))


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; equal seeds give equal streams."""
    return np.random.default_rng(np.uint64(seed))


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    Parameters
    ----------
    f : callable
        Maps an array shaped like ``x`` to a scalar.
    x : array_like
        Point at which to differentiate. Not modified.
    h : float
        Step size.

    Returns
    -------
    ndarray
        ``(f(x + h e_k) - f(x - h e_k)) / (2h)`` for every coordinate ``k``,
        shaped like ``x``.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = float(f(x))
        flat[k] = orig - h
        down = float(f(x))
        flat[k] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite function value at coordinate {k}")
        gflat[k] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(a, b, floor: float = 1e-8) -> float:
    """Largest elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
