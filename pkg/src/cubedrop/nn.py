"""Two-hidden-layer ReLU network with inverted dropout, trained by momentum SGD.

Weights follow the ``z = W a + b`` convention, so ``W`` has shape
``(fan_out, fan_in)``; batches are rows and the forward pass computes
``A @ W.T + b``.  Dropout acts on the two hidden activations only.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as _rng
from .matio import read_matrix, write_matrix

HEADS = ("mean_only", "mean_and_logvar")
LOSSES = {"mse": "mean_only", "gaussian_nll": "mean_and_logvar"}


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetArchitecture:
    input_dim: int
    h1: int
    h2: int
    heads: str = "mean_only"

    @property
    def n_out(self) -> int:
        return 1 if self.heads == "mean_only" else 2

    @property
    def sizes(self) -> tuple:
        return (self.input_dim, self.h1, self.h2, self.n_out)


def architecture(input_dim: int, heads: str = "mean_only") -> NetArchitecture:
    """Hidden widths ``h1 = min(2d, 100)`` and ``h2 = max(floor(0.8 h1), 16)``."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if heads not in HEADS:
        raise ValueError(f"heads must be one of {HEADS}")
    h1 = min(2 * input_dim, 100)
    h2 = max(math.floor(0.8 * h1), 16)
    return NetArchitecture(input_dim, h1, h2, heads)


@dataclass
class NetParams:
    arch: NetArchitecture
    weights: list
    biases: list
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        d = self.arch.input_dim
        if self.input_shift is None:
            self.input_shift = np.zeros(d)
        if self.input_scale is None:
            self.input_scale = np.ones(d)
        sizes = self.arch.sizes
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} shapes {W.shape}, {b.shape} do not match {sizes}")

    def copy(self) -> "NetParams":
        return replace(self, weights=[W.copy() for W in self.weights],
                       biases=[b.copy() for b in self.biases], history=list(self.history))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def weight_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(W * W) for W in self.weights)))


def init_params(arch: NetArchitecture, seed: int) -> NetParams:
    gen = _rng.stream(seed, 10)
    sizes = arch.sizes
    weights, biases = [], []
    for l in range(3):
        fan_in = sizes[l]
        gain = 2.0 if l < 2 else 1.0
        weights.append(gen.standard_normal((sizes[l + 1], fan_in)) * math.sqrt(gain / fan_in))
        biases.append(np.zeros(sizes[l + 1]))
    return NetParams(arch, weights, biases)


def standardize_inputs(params: NetParams, x_train) -> NetParams:
    x_train = np.asarray(x_train, dtype=float)
    scale = x_train.std(axis=0)
    scale[scale == 0] = 1.0
    params.input_shift = x_train.mean(axis=0)
    params.input_scale = scale
    return params


def draw_masks(gen: np.random.Generator, n: int, arch: NetArchitecture, rate: float):
    if rate <= 0:
        return None
    return [gen.random((n, arch.h1)) >= rate, gen.random((n, arch.h2)) >= rate]


def apply_dropout(a, mask, rate: float):
    """Inverted dropout: zero the dropped units and rescale the kept ones by ``1/(1-rate)``."""
    if mask is None:
        return a
    return a * mask / (1.0 - rate)


def _forward(params: NetParams, x, masks, rate):
    a0 = (np.asarray(x, dtype=float) - params.input_shift) / params.input_scale
    W1, W2, W3 = params.weights
    b1, b2, b3 = params.biases
    z1 = a0 @ W1.T + b1
    a1 = np.maximum(z1, 0.0)
    if masks is not None:
        a1 = apply_dropout(a1, masks[0], rate)
    z2 = a1 @ W2.T + b2
    a2 = np.maximum(z2, 0.0)
    if masks is not None:
        a2 = apply_dropout(a2, masks[1], rate)
    out = a2 @ W3.T + b3
    return out, (a0, z1, a1, z2, a2)


def forward(params: NetParams, x, masks=None, rate: float = 0.0):
    """Return ``(mean, logvar)``; ``logvar`` is None for a mean-only network.

    With ``masks`` (one 0/1 array per hidden layer) the kept activations are
    scaled by ``1 / (1 - rate)``; without masks the full network runs unscaled.
    """
    out, _ = _forward(params, x, masks, rate)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite network output")
    logvar = out[:, 1] if params.arch.n_out == 2 else None
    return out[:, 0], logvar


@dataclass(frozen=True)
class TrainConfig:
    dropout_rate: float = 0.1
    weight_decay: float = 0.0
    learning_rate: float = 1e-3
    momentum: float = 0.9
    grad_clip: float | None = 10.0
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {tuple(LOSSES)}")

    @property
    def heads(self) -> str:
        return LOSSES[self.loss]


def loss_and_grad(params: NetParams, x, y, cfg: TrainConfig, masks=None):
    """Penalised batch loss and its gradients ``(loss, (dW list, db list))``.

    MSE: ``mean (y - f)^2``.  Gaussian NLL: ``mean (y - f)^2 / (2 s2) + log(s2)/2``
    with ``s2 = exp(logvar)``.  Both add ``weight_decay/2 * sum ||W||_F^2``;
    biases are not penalised.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    rate = cfg.dropout_rate
    out, (a0, z1, a1, z2, a2) = _forward(params, x, masks, rate)
    W1, W2, W3 = params.weights
    resid = out[:, 0] - y
    d_out = np.zeros_like(out)
    if params.arch.n_out == 1:
        loss = float(np.mean(resid ** 2))
        d_out[:, 0] = 2.0 * resid / n
    else:
        s = out[:, 1]
        inv = np.exp(-s)
        loss = float(np.mean(0.5 * resid ** 2 * inv + 0.5 * s))
        d_out[:, 0] = resid * inv / n
        d_out[:, 1] = (0.5 - 0.5 * resid ** 2 * inv) / n
    lam = cfg.weight_decay
    loss += 0.5 * lam * sum(float(np.sum(W * W)) for W in params.weights)

    gW3 = d_out.T @ a2 + lam * W3
    gb3 = d_out.sum(axis=0)
    d_a2 = d_out @ W3
    if masks is not None:
        d_a2 = apply_dropout(d_a2, masks[1], rate)
    d_z2 = d_a2 * (z2 > 0)
    gW2 = d_z2.T @ a1 + lam * W2
    gb2 = d_z2.sum(axis=0)
    d_a1 = d_z2 @ W2
    if masks is not None:
        d_a1 = apply_dropout(d_a1, masks[0], rate)
    d_z1 = d_a1 * (z1 > 0)
    gW1 = d_z1.T @ a0 + lam * W1
    gb1 = d_z1.sum(axis=0)
    return loss, ([gW1, gW2, gW3], [gb1, gb2, gb3])


def train(x_train, y_train, cfg: TrainConfig, init: NetParams | None = None) -> NetParams:
    """Mini-batch SGD with momentum; fresh dropout masks for every batch.

    Gradients are rescaled to global norm ``grad_clip`` when they exceed it.
    """
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    n = x_train.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"{n} training rows is fewer than batch_size={cfg.batch_size}")
    if init is None:
        params = init_params(architecture(x_train.shape[1], cfg.heads), cfg.seed)
        standardize_inputs(params, x_train)
        params.biases[2][0] = float(np.mean(y_train))
        if params.arch.n_out == 2:
            params.biases[2][1] = math.log(max(float(np.var(y_train)), 1e-12))
    else:
        params = init.copy()
    gen = _rng.stream(cfg.seed, 11)
    vel_W = [np.zeros_like(W) for W in params.weights]
    vel_b = [np.zeros_like(b) for b in params.biases]
    history = []
    for epoch in range(cfg.epochs):
        order = gen.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = draw_masks(gen, idx.size, params.arch, cfg.dropout_rate)
            loss, (gW, gb) = loss_and_grad(params, x_train[idx], y_train[idx], cfg, masks)
            if not math.isfinite(loss):
                raise DivergenceError(f"loss became non-finite in epoch {epoch}")
            if cfg.grad_clip is not None:
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in gW + gb))
                if norm > cfg.grad_clip:
                    gW = [g * (cfg.grad_clip / norm) for g in gW]
                    gb = [g * (cfg.grad_clip / norm) for g in gb]
            for l in range(3):
                vel_W[l] = cfg.momentum * vel_W[l] - cfg.learning_rate * gW[l]
                vel_b[l] = cfg.momentum * vel_b[l] - cfg.learning_rate * gb[l]
                params.weights[l] += vel_W[l]
                params.biases[l] += vel_b[l]
            total += loss * idx.size
        history.append(total / n)
    params.history = history
    return params


def save_params(params: NetParams, stem, cfg: TrainConfig | None = None) -> None:
    """Write ``<stem>.bin`` (all arrays stacked as one column) and ``<stem>.json``."""
    stem = Path(stem)
    arrays = [params.input_shift, params.input_scale] + [
        a.ravel() for pair in zip(params.weights, params.biases) for a in pair]
    write_matrix(stem.with_suffix(".bin"), np.concatenate(arrays)[:, None])
    meta = {"architecture": asdict(params.arch), "history": params.history,
            "train_config": asdict(cfg) if cfg is not None else None}
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_params(stem) -> NetParams:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    arch = NetArchitecture(**meta["architecture"])
    flat = read_matrix(stem.with_suffix(".bin"))[:, 0]
    d = arch.input_dim
    shift, scale, pos = flat[:d], flat[d:2 * d], 2 * d
    weights, biases = [], []
    sizes = arch.sizes
    for l in range(3):
        k = sizes[l + 1] * sizes[l]
        weights.append(flat[pos:pos + k].reshape(sizes[l + 1], sizes[l]))
        pos += k
        biases.append(flat[pos:pos + sizes[l + 1]].copy())
        pos += sizes[l + 1]
    return NetParams(arch, weights, biases, shift.copy(), scale.copy(), meta["history"])
