"""The GeoCF training objective and loop.

Per minibatch of click rows the loss is

    mean_u S_eps(p_u, D(z_u)) + lambda_e * MMD^2({z_u}, {prior draws})

where ``p_u`` spreads a user's mass uniformly over their clicked items,
``D`` is the decoder, ``S_eps`` the entropic OT value under the item ground
cost, and ``lambda_e = lambda0 * decay**epoch``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelConfig, mmd_sq_grad
from .model import Adam, ModelParams, backward, forward, init_params, l2_normalize_rows
from .numerics import make_rng
from .ot import DEFAULT_N_UNROLL, sinkhorn_batch_grad

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("epoch", "step", "total", "reconstruction", "mmd", "lambda")


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1.0
    lambda0: float = 10.0
    lambda_decay: float = 0.97
    n_unroll: int = DEFAULT_N_UNROLL
    kernel: KernelConfig = field(default_factory=KernelConfig)
    prior_samples_per_batch: int | None = None  # None: same as the batch size

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")
        if not 0 < self.lambda_decay <= 1:
            raise ValueError("lambda_decay must lie in (0, 1]")
        if self.n_unroll < 1:
            raise ValueError("n_unroll must be >= 1")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    reconstruction: float
    mmd: float
    lambda_used: float


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 500
    lr: float = 1e-3
    hidden: int = 600
    latent: int = 200


@dataclass
class TrainResult:
    params: ModelParams
    steps: list            # (epoch, step, LossBreakdown)
    epoch_means: list      # LossBreakdown per epoch

    def write_trace(self, path) -> None:
        write_trace_tsv(path, self.steps)


def lambda_at(cfg: LossConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lambda0 * cfg.lambda_decay ** epoch


def _cost(geometry) -> np.ndarray:
    return np.asarray(getattr(geometry, "cost", geometry), dtype=np.float64)


def target_measures(rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    counts = rows.sum(axis=1, keepdims=True)
    if np.any(counts <= 0):
        raise ValueError("every user in the batch needs at least one click")
    return rows / counts


def geocf_loss(params: ModelParams, batch, geometry, cfg: LossConfig, epoch: int,
               rng: np.random.Generator):
    """Loss breakdown and parameter gradients for one minibatch.

    ``batch`` holds binary click rows. Randomness is drawn from ``rng`` in a
    fixed order: reparameterization noise, then prior samples.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    x = l2_normalize_rows(batch)
    targets = target_measures(batch)
    probs, cache = forward(params, x, rng)
    values, grad_b = sinkhorn_batch_grad(targets, probs, _cost(geometry), cfg.epsilon, cfg.n_unroll)
    n = batch.shape[0]
    reconstruction = float(values.mean())

    n_prior = cfg.prior_samples_per_batch or n
    prior = rng.standard_normal((n_prior, params.config.latent))
    lam = lambda_at(cfg, epoch)
    mmd, grad_z = mmd_sq_grad(cache.latent.z, prior, cfg.kernel)
    total = reconstruction + lam * mmd
    grads = backward(params, cache, grad_probs=grad_b / n, grad_z=lam * grad_z)
    return LossBreakdown(total, reconstruction, mmd, lam), grads


def train(dataset, geometry, cfg: LossConfig, model_cfg: TrainConfig | None = None,
          seed: int = 0, params: ModelParams | None = None, callback=None) -> TrainResult:
    """Minibatch Adam on the GeoCF loss.

    ``dataset`` is an InteractionMatrix or a dense binary users x items array.
    One generator seeded with ``seed`` drives, in order: parameter
    initialization, then per epoch the user shuffle and per step the loss's
    draws. ``callback(epoch, params)`` runs after every epoch if given.
    """
    model_cfg = model_cfg or TrainConfig()
    rows = dataset.to_dense() if hasattr(dataset, "to_dense") else np.asarray(dataset, dtype=np.float64)
    if rows.shape[0] == 0:
        raise ValueError("empty dataset")
    rng = make_rng(seed)
    if params is None:
        params = init_params(rows.shape[1], rng, model_cfg.hidden, model_cfg.latent)
    opt = Adam(params, lr=model_cfg.lr)
    steps, epoch_means = [], []
    for epoch in range(model_cfg.epochs):
        order = rng.permutation(rows.shape[0])
        acc = np.zeros(4)
        nb = 0
        for step, start in enumerate(range(0, len(order), model_cfg.batch_size)):
            idx = order[start:start + model_cfg.batch_size]
            br, grads = geocf_loss(params, rows[idx], geometry, cfg, epoch, rng)
            opt.step(params, grads)
            steps.append((epoch, step, br))
            acc += (br.total, br.reconstruction, br.mmd, br.lambda_used)
            nb += 1
        mean = LossBreakdown(*(acc / nb))
        epoch_means.append(mean)
        log.info("epoch %d total %.6f rec %.6f mmd %.6f lambda %.4g", epoch, *acc / nb)
        if callback is not None:
            callback(epoch, params)
    return TrainResult(params, steps, epoch_means)


def write_trace_tsv(path, steps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for epoch, step, br in steps:
            w.writerow([epoch, step, repr(br.total), repr(br.reconstruction), repr(br.mmd), repr(br.lambda_used)])
