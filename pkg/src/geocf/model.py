"""Gaussian-encoder / deterministic-decoder MLP autoencoder.

Layout (``tanh`` between layers)::

    I -> hidden -> 2 * latent  (mean, log-variance)      encoder
    latent -> hidden -> I -> softmax                    decoder

The defaults ``hidden=600, latent=200`` give the
``I -> 600 -> 200 -> 600 -> I`` architecture. All gradients are written out
by hand; :func:`backward` consumes the state recorded by :func:`forward`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .io import read_container, write_container
from .numerics import softmax_rows

LOG_VAR_CLAMP = 10.0
PARAM_NAMES = ("enc_w1", "enc_b1", "enc_w2", "enc_b2",
               "dec_w1", "dec_b1", "dec_w2", "dec_b2")


@dataclass(frozen=True)
class ModelConfig:
    num_items: int
    hidden: int = 600
    latent: int = 200

    def shapes(self) -> dict:
        i, h, l = self.num_items, self.hidden, self.latent
        return {
            "enc_w1": (i, h), "enc_b1": (h,),
            "enc_w2": (h, 2 * l), "enc_b2": (2 * l,),
            "dec_w1": (l, h), "dec_b1": (h,),
            "dec_w2": (h, i), "dec_b2": (i,),
        }


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict
    # bumped on every in-place update so stale forward state can be detected
    version: int = 0

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, self.version)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in PARAM_NAMES])

    def with_flat(self, vec) -> "ModelParams":
        out, pos = {}, 0
        for k in PARAM_NAMES:
            shape = self.tensors[k].shape
            size = int(np.prod(shape))
            out[k] = np.asarray(vec[pos:pos + size], dtype=np.float64).reshape(shape).copy()
            pos += size
        return ModelParams(self.config, out, 0)

    def touch(self):
        self.version += 1


@dataclass
class LatentBatch:
    z: np.ndarray
    mean: np.ndarray
    log_var: np.ndarray
    noise: np.ndarray
    # forward state for backward()
    x: np.ndarray = field(repr=False, default=None)
    h1: np.ndarray = field(repr=False, default=None)
    clamp_mask: np.ndarray = field(repr=False, default=None)
    version: int = -1


@dataclass
class ForwardCache:
    latent: LatentBatch
    h2: np.ndarray
    probs: np.ndarray
    version: int


def init_params(num_items: int, rng: np.random.Generator, hidden: int = 600,
                latent: int = 200) -> ModelParams:
    """Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases."""
    if num_items < 1:
        raise ValueError("num_items must be >= 1")
    cfg = ModelConfig(num_items, hidden, latent)
    tensors = {}
    for name, shape in cfg.shapes().items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            bound = np.sqrt(3.0 / shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(cfg, tensors)


def l2_normalize_rows(x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValueError(f"cannot encode all-zero rows (batch rows {bad.tolist()[:10]})")
    return x / norms[:, None]


def encode(params: ModelParams, x, rng: np.random.Generator | None = None,
           noise=None) -> LatentBatch:
    """Encoder pass plus reparameterized sample ``z = mean + exp(log_var/2) * noise``.

    ``x`` rows must already be normalized click vectors. Pass ``noise``
    explicitly (e.g. zeros for the posterior mean) or an ``rng`` to draw it.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.config.num_items:
        raise ValueError(f"input has {x.shape[1]} items, model expects {params.config.num_items}")
    zero = np.flatnonzero(~np.any(x != 0, axis=1))
    if zero.size:
        raise ValueError(f"cannot encode all-zero rows (batch rows {zero.tolist()[:10]})")
    lat = params.config.latent
    h1 = np.tanh(x @ params["enc_w1"] + params["enc_b1"])
    out = h1 @ params["enc_w2"] + params["enc_b2"]
    mean = out[:, :lat]
    raw_lv = out[:, lat:]
    clamp_mask = np.abs(raw_lv) < LOG_VAR_CLAMP
    log_var = np.clip(raw_lv, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    if noise is None:
        if rng is None:
            raise ValueError("encode needs either rng or explicit noise")
        noise = rng.standard_normal(mean.shape)
    noise = np.asarray(noise, dtype=np.float64)
    z = mean + np.exp(0.5 * log_var) * noise
    return LatentBatch(z, mean, log_var, noise, x, h1, clamp_mask, params.version)


def decode(params: ModelParams, z, return_state: bool = False):
    """Item-probability rows ``softmax(tanh(z W1 + b1) W2 + b2)``."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    h2 = np.tanh(z @ params["dec_w1"] + params["dec_b1"])
    probs = softmax_rows(h2 @ params["dec_w2"] + params["dec_b2"])
    if return_state:
        return probs, h2
    return probs


def forward(params: ModelParams, x, rng=None, noise=None):
    latent = encode(params, x, rng, noise)
    probs, h2 = decode(params, latent.z, return_state=True)
    return probs, ForwardCache(latent, h2, probs, params.version)


def backward(params: ModelParams, cache: ForwardCache, grad_probs=None, grad_z=None) -> dict:
    """Reverse-mode gradients of a loss for every parameter tensor.

    ``grad_probs`` is dL/d(decoder output probabilities) and ``grad_z`` an
    extra dL/dz acting on the latent sample directly (the prior term). Either
    may be omitted. Gradients are sums over the batch rows.
    """
    if cache.version != params.version or cache.latent.version != params.version:
        raise RuntimeError("forward cache is stale: parameters changed since the forward pass")
    lat = cache.latent
    probs = cache.probs
    if grad_probs is None:
        grad_probs = np.zeros_like(probs)
    if grad_z is None:
        grad_z = np.zeros_like(lat.z)
    grads = {}
    # softmax
    d_logits = probs * (grad_probs - np.sum(probs * grad_probs, axis=1, keepdims=True))
    grads["dec_w2"] = cache.h2.T @ d_logits
    grads["dec_b2"] = d_logits.sum(0)
    d_h2 = d_logits @ params["dec_w2"].T
    d_pre2 = d_h2 * (1.0 - cache.h2 ** 2)
    grads["dec_w1"] = lat.z.T @ d_pre2
    grads["dec_b1"] = d_pre2.sum(0)
    d_z = d_pre2 @ params["dec_w1"].T + grad_z
    # reparameterization
    std = np.exp(0.5 * lat.log_var)
    d_mean = d_z
    d_log_var = d_z * lat.noise * std * 0.5 * lat.clamp_mask
    d_out = np.concatenate([d_mean, d_log_var], axis=1)
    grads["enc_w2"] = lat.h1.T @ d_out
    grads["enc_b2"] = d_out.sum(0)
    d_h1 = d_out @ params["enc_w2"].T
    d_pre1 = d_h1 * (1.0 - lat.h1 ** 2)
    grads["enc_w1"] = lat.x.T @ d_pre1
    grads["enc_b1"] = d_pre1.sum(0)
    return grads


class Adam:
    """Adaptive moment estimation over a ModelParams tensor dict."""

    def __init__(self, params: ModelParams, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params.tensors[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        params.touch()


def recommend_scores(params: ModelParams, rows) -> np.ndarray:
    """Decoder probabilities at the posterior mean, used as ranking scores."""
    x = l2_normalize_rows(rows)
    lat = encode(params, x, noise=np.zeros((x.shape[0], params.config.latent)))
    return decode(params, lat.z)


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    """Write parameters (and JSON-able ``meta`` such as seed and epoch) to ``path``."""
    cfg = params.config
    header = {"kind": "checkpoint", "num_items": cfg.num_items, "hidden": cfg.hidden,
              "latent": cfg.latent, "extra": dict(meta or {})}
    write_container(path, header, {k: params[k] for k in PARAM_NAMES})


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(params, meta)``."""
    header, arrays = read_container(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a model checkpoint")
    cfg = ModelConfig(header["num_items"], header["hidden"], header["latent"])
    for name, shape in cfg.shapes().items():
        if name not in arrays or arrays[name].shape != tuple(shape):
            raise ValueError(f"{path}: tensor {name} missing or misshapen")
    return ModelParams(cfg, {k: arrays[k] for k in PARAM_NAMES}), header["extra"]
