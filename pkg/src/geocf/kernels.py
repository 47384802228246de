"""Gaussian RBF kernel and the unbiased squared-MMD estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BANDWIDTH_CANDIDATES = (0.05, 0.1, 0.5, 1.0)


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def rbf_gram(a, b, cfg: KernelConfig) -> np.ndarray:
    """``exp(-|x - y|^2 / (2 sigma^2))`` for every row pair of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"point dimensions differ: {a.shape} vs {b.shape}")
    return np.exp(-_sq_dists(a, b) / (2.0 * cfg.bandwidth ** 2))


def _check_sizes(x, y):
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError(f"need at least 2 samples on each side, got {x.shape[0]} and {y.shape[0]}")


_BLOCK = 2048


def _block_sums(a: np.ndarray, b: np.ndarray, cfg: KernelConfig, drop_diag: bool):
    """Row sums of k(a, b) and k(a, b) @ b, computed in row blocks.

    ``drop_diag`` zeroes the pairs ``(a_i, b_i)``; it needs equal sizes.
    """
    rowsum = np.empty(a.shape[0])
    kb = np.empty_like(a)
    for start in range(0, a.shape[0], _BLOCK):
        stop = min(start + _BLOCK, a.shape[0])
        k = rbf_gram(a[start:stop], b, cfg)
        if drop_diag:
            k[np.arange(stop - start), np.arange(start, stop)] = 0.0
        rowsum[start:stop] = k.sum(1)
        kb[start:stop] = k @ b
    return rowsum, kb


def mmd_sq_unbiased(x, y, cfg: KernelConfig) -> float:
    """U-statistic estimate of squared MMD; may be slightly negative.

    Within-sample terms average over ordered pairs ``i != j``. With equal
    sample sizes the cross term also drops the pairs ``(x_i, y_i)`` (the
    paired U-statistic: still unbiased, and exactly zero when ``y`` is
    ``x``); unequal sizes average the cross term over all ``m * n`` pairs.
    """
    return mmd_sq_grad(x, y, cfg, with_grad=False)[0]


def mmd_sq_grad(x, y, cfg: KernelConfig, with_grad: bool = True):
    """Value of :func:`mmd_sq_unbiased` and its gradient with respect to ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    _check_sizes(x, y)
    m, n = x.shape[0], y.shape[0]
    paired = m == n
    n_xy = m * (m - 1) if paired else m * n
    s2 = cfg.bandwidth ** 2
    rs_xx, kx_x = _block_sums(x, x, cfg, True)
    rs_yy, _ = _block_sums(y, y, cfg, True)
    rs_xy, kx_y = _block_sums(x, y, cfg, paired)
    value = rs_xx.sum() / (m * (m - 1)) + rs_yy.sum() / (n * (n - 1)) - 2.0 * (rs_xy.sum() / n_xy)
    if not with_grad:
        return float(value), None
    # d k(x_i, u) / d x_i = -k (x_i - u) / s2
    g_xx = -(rs_xx[:, None] * x - kx_x) / s2 * (2.0 / (m * (m - 1)))
    g_xy = (rs_xy[:, None] * x - kx_y) / s2 * (2.0 / n_xy)
    return float(value), g_xx + g_xy
