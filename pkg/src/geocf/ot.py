"""Optimal transport between discrete measures.

Three entry points:

* :func:`exact_wasserstein` solves the Kantorovich linear program exactly on
  small instances (test oracle and diagnostics).
* :func:`sinkhorn` solves the entropic problem
  ``min <P, C> + eps * sum P log P`` over couplings ``P`` with the given
  marginals, in the log domain.
* :func:`sinkhorn_batch_grad` runs a fixed number of Sinkhorn iterations for a
  batch of (target, prediction) pairs sharing one cost matrix and returns the
  gradient of each value with respect to the prediction weights, obtained by
  reverse accumulation through the unrolled iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .numerics import logsumexp_rows

EXACT_MAX_SUPPORT = 64
DEFAULT_MAX_ITER = 500
DEFAULT_MARGINAL_TOL = 1e-6
DEFAULT_N_UNROLL = 50
# exp(-x) underflows to zero near x = 745
_MAX_KERNEL_EXPONENT = 700.0


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability weights over a finite support.

    ``support`` holds item indices or point coordinates; it is carried along
    for bookkeeping and never used by the solvers, which only see weights and
    a cost matrix.
    """

    weights: np.ndarray
    support: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        check_weights(w, "weights")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, support) -> "DiscreteMeasure":
        support = np.asarray(support)
        n = len(support)
        if n == 0:
            raise ValueError("uniform measure needs a nonempty support")
        return cls(np.full(n, 1.0 / n), support)

    def __len__(self):
        return self.weights.size


@dataclass
class SinkhornResult:
    value: float
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    iterations_run: int
    converged: bool
    # dual objective after each iteration at the target epsilon
    trace: list = field(default_factory=list)

    @property
    def potentials(self):
        return self.f, self.g


def check_weights(w: np.ndarray, name: str = "weights", tol: float = 1e-9) -> None:
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"{name} must sum to 1 (got {w.sum():.12g})")


def check_cost(c, shape=None) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    if shape is not None and c.shape != tuple(shape):
        raise ValueError(f"cost matrix shape {c.shape} does not match marginals {tuple(shape)}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    if np.any(c < 0):
        raise ValueError("cost matrix has negative entries")
    return c


def _weights(p) -> np.ndarray:
    if isinstance(p, DiscreteMeasure):
        return p.weights
    w = np.asarray(p, dtype=np.float64).reshape(-1)
    check_weights(w)
    return w


def transport_cost(plan, c) -> float:
    return float(np.sum(np.asarray(plan) * np.asarray(c)))


def exact_wasserstein(p, q, c) -> float:
    """Exact optimal transport cost between two small discrete measures.

    Equal-size uniform measures reduce to an assignment problem; everything
    else goes to the HiGHS dual simplex on the Kantorovich program.
    """
    a, b = _weights(p), _weights(q)
    c = check_cost(c, (a.size, b.size))
    if a.size > EXACT_MAX_SUPPORT or b.size > EXACT_MAX_SUPPORT:
        raise ValueError(
            f"exact solver limited to supports of size <= {EXACT_MAX_SUPPORT} "
            f"(got {a.size}x{b.size}); use sinkhorn for larger instances"
        )
    if a.size == b.size and np.all(a == a[0]) and np.all(b == b[0]):
        rows, cols = linear_sum_assignment(c)
        return float(c[rows, cols].sum() / a.size)
    m, n = c.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _sinkhorn_loop(f, g, log_a, log_b, c, ct, a, b, eps, max_iter, tol, trace=None):
    """Alternating log-domain updates; returns (f, g, iterations, converged).

    On return ``g`` is freshly updated, so column marginals are exact and the
    row marginals are within ``tol`` when converged.
    """
    # iterate on u = f / eps, v = g / eps against the scaled cost
    kc, kct = c / eps, ct / eps
    u = log_a - logsumexp_rows(g[None, :] / eps - kc)
    v = log_b - logsumexp_rows(u[None, :] - kct)
    if trace is not None:
        trace.append(eps * float(u @ a + v @ b))
    for it in range(1, max_iter):
        u_next = log_a - logsumexp_rows(v[None, :] - kc)
        # row marginals of the current plan, read off the potential change
        err = np.max(np.abs(a * np.expm1(u - u_next)))
        if err <= tol:
            return eps * u, eps * v, it, True
        u = u_next
        v = log_b - logsumexp_rows(u[None, :] - kct)
        if trace is not None:
            trace.append(eps * float(u @ a + v @ b))
    u_next = log_a - logsumexp_rows(v[None, :] - kc)
    err = np.max(np.abs(a * np.expm1(u - u_next)))
    return eps * u, eps * v, max_iter, bool(err <= tol)


def sinkhorn(p, q, c, epsilon: float, max_iter: int = DEFAULT_MAX_ITER,
             marginal_tol: float = DEFAULT_MARGINAL_TOL, eps_scaling: bool = True,
             stage_iter: int = 100) -> SinkhornResult:
    """Entropic optimal transport in the log domain.

    Parameters
    ----------
    p, q : DiscreteMeasure or array_like
        Source and target weights.
    c : array_like, shape (len(p), len(q))
        Nonnegative ground cost.
    epsilon : float
        Entropic regularization strength, > 0.
    max_iter : int
        Iteration budget at the target ``epsilon``.
    marginal_tol : float
        Stop once the largest marginal violation of the plan is below this.
    eps_scaling : bool
        Warm-start the potentials by solving a geometric sequence of larger
        regularizations first (halving from ``max(c)``), each for at most
        ``stage_iter`` iterations. This does not change the fixed point, only
        how quickly it is reached for small ``epsilon``.

    Returns
    -------
    SinkhornResult
        ``value`` is ``<plan, c> + epsilon * sum(plan * log(plan))`` for the
        final plan. ``trace`` records the dual objective after each iteration
        at the target ``epsilon``; it is non-decreasing.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    a_full, b_full = _weights(p), _weights(q)
    c_full = check_cost(c, (a_full.size, b_full.size))
    # zero-weight atoms carry no mass; solve on the supports
    si = np.flatnonzero(a_full > 0)
    sj = np.flatnonzero(b_full > 0)
    a, b = a_full[si], b_full[sj]
    cc = np.ascontiguousarray(c_full[np.ix_(si, sj)])
    ct = np.ascontiguousarray(cc.T)
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    iters = 0
    if eps_scaling:
        e = float(cc.max()) / 2.0
        while e > epsilon:
            f, g, k, _ = _sinkhorn_loop(f, g, log_a, log_b, cc, ct, a, b, e, stage_iter, 1e-4)
            iters += k
            e /= 2.0
    trace: list = []
    f, g, k, converged = _sinkhorn_loop(f, g, log_a, log_b, cc, ct, a, b, epsilon,
                                        max_iter, marginal_tol, trace)
    iters += k
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise FloatingPointError("non-finite Sinkhorn potentials")
    fg = f[:, None] + g[None, :]
    plan_s = np.exp((fg - cc) / epsilon)
    value = float(np.sum(plan_s * fg))
    plan = np.zeros_like(c_full)
    plan[np.ix_(si, sj)] = plan_s
    f_full = np.full(a_full.size, -np.inf)
    g_full = np.full(b_full.size, -np.inf)
    f_full[si] = f
    g_full[sj] = g
    return SinkhornResult(value, plan, f_full, g_full, iters, converged, trace)


def _kernel(c: np.ndarray, eps: float):
    shift = c.min(axis=1)
    expo = (c - shift[:, None]) / eps
    if expo.max() > _MAX_KERNEL_EXPONENT:
        raise ValueError(
            f"cost spread / epsilon = {expo.max():.1f} would underflow the "
            "batched kernel; increase epsilon or rescale the cost"
        )
    return np.exp(-expo), shift


def _f_step(g, log_a, mask, kern, kern_t, eps):
    gmax = g.max(axis=1, keepdims=True)
    alpha = np.exp((g - gmax) / eps)
    s = alpha @ kern_t
    f = np.where(mask, eps * log_a - eps * np.log(s) - gmax, 0.0)
    return f, alpha, s


def _g_step(f, log_b, mask, kern, shift, eps):
    ft = np.where(mask, f - shift, -np.inf)
    fmax = ft.max(axis=1, keepdims=True)
    beta = np.exp((ft - fmax) / eps)
    t = beta @ kern
    g = eps * log_b - eps * np.log(t) - fmax
    return g, beta, t


def sinkhorn_batch_grad(targets, predictions, c, epsilon: float,
                        n_unroll: int = DEFAULT_N_UNROLL, return_plans: bool = False):
    """Unrolled entropic OT values and prediction gradients for a batch.

    Parameters
    ----------
    targets : array_like, shape (B, I)
        Target probability rows (zeros allowed: atoms outside the support).
    predictions : array_like, shape (B, I2)
        Strictly positive probability rows.
    c : array_like, shape (I, I2)
        Cost shared by every row of the batch.
    epsilon : float
    n_unroll : int
        Exact number of Sinkhorn iterations.
    return_plans : bool
        Also return the final (B, I, I2) couplings. Memory heavy; for tests.

    Returns
    -------
    values : ndarray, shape (B,)
        ``<P_b, c> + epsilon * sum(P_b log P_b)`` of each final coupling.
    grad : ndarray, shape (B, I2)
        d values[b] / d predictions[b], through all ``n_unroll`` iterations.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if n_unroll < 1:
        raise ValueError("n_unroll must be >= 1")
    a = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    b = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    c = check_cost(c, (a.shape[1], b.shape[1]))
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"batch sizes differ: {a.shape} vs {b.shape}")
    if np.any(a < 0) or np.any(np.abs(a.sum(1) - 1) > 1e-9):
        raise ValueError("target rows must be probability vectors")
    # loose sum check: finite-difference probes step slightly off the simplex
    if np.any(b <= 0) or np.any(np.abs(b.sum(1) - 1) > 1e-3):
        raise ValueError("prediction rows must be strictly positive probability vectors")
    eps = float(epsilon)
    kern, shift = _kernel(c, eps)
    kern_t = np.ascontiguousarray(kern.T)
    mask = a > 0
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
    log_b = np.log(b)

    gs = [np.zeros_like(b)]
    fs = []
    for _ in range(n_unroll):
        f, _, _ = _f_step(gs[-1], log_a, mask, kern, kern_t, eps)
        # the kernel rows were shifted by the per-row minimum cost
        f = np.where(mask, f + shift, 0.0)
        g, _, _ = _g_step(f, log_b, mask, kern, shift, eps)
        fs.append(f)
        gs.append(g)
    f, g = fs[-1], gs[-1]

    # final coupling statistics
    gmax = g.max(axis=1, keepdims=True)
    alpha = np.exp((g - gmax) / eps)
    s = alpha @ kern_t
    log_r = np.where(mask, (f - shift + gmax) / eps + np.log(s), -np.inf)
    r = np.exp(log_r)
    row_g = ((alpha * g) @ kern_t) / s          # E_{P(.|i)}[g]
    _, beta, t = _g_step(f, log_b, mask, kern, shift, eps)
    col_f = ((beta * np.where(mask, f, 0.0)) @ kern) / t   # E_{P(.|j)}[f]
    values = np.sum(np.where(mask, f * r, 0.0), axis=1) + np.sum(g * b, axis=1)

    # adjoints of V = sum_ij P_ij (f_i + g_j)
    f_bar = np.where(mask, r * (1.0 + f / eps) + r * row_g / eps, 0.0)
    g_bar = b * (1.0 + g / eps) + b * col_f / eps
    b_bar = np.zeros_like(b)
    for step in range(n_unroll - 1, -1, -1):
        f_t = fs[step]
        g_prev = gs[step]
        # g_t = eps log b - eps LSE_i((f_t - C)/eps)
        _, beta, t = _g_step(f_t, log_b, mask, kern, shift, eps)
        b_bar += eps * g_bar / b
        f_bar = f_bar - np.where(mask, beta * ((g_bar / t) @ kern_t), 0.0)
        # f_t = eps log a - eps LSE_j((g_prev - C)/eps)
        _, alpha, s = _f_step(g_prev, log_a, mask, kern, kern_t, eps)
        g_bar = -alpha * ((np.where(mask, f_bar / s, 0.0)) @ kern)
        f_bar = np.zeros_like(f_bar)

    if return_plans:
        plans = np.exp((np.where(mask, f, -np.inf)[:, :, None] + g[:, None, :] - c[None]) / eps)
        return values, b_bar, plans
    return values, b_bar
