"""MC-dropout predictive inference and the EU / FA / LA variance treatments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .nn import NetParams, draw_masks, forward

VARIANTS = ("EU", "FA", "LA")


@dataclass(frozen=True)
class UQVariant:
    tag: str
    length_scale: float = 1.0
    n_train: int | None = None

    def __post_init__(self):
        if self.tag not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.tag!r}")
        if self.tag == "FA":
            if not self.length_scale > 0:
                raise ValueError("FA needs a positive length scale")
            if self.n_train is None or self.n_train < 1:
                raise ValueError("FA needs n_train >= 1")


@dataclass
class Passes:
    """Raw outputs of ``T`` stochastic passes, arrays of shape ``(T, n)``."""
    mean: np.ndarray
    logvar: np.ndarray | None
    dropout_rate: float

    @property
    def T(self) -> int:
        return self.mean.shape[0]


@dataclass
class PredictiveSummary:
    mean: np.ndarray
    var_epi: np.ndarray
    var_ale: np.ndarray
    var_tot: np.ndarray
    samples: np.ndarray

    @property
    def sd_tot(self) -> np.ndarray:
        return np.sqrt(self.var_tot)


def predictive_passes(net: NetParams, x_star, T: int = 500, dropout_rate: float = 0.1,
                      seed: int = 0) -> Passes:
    """``T`` forward passes per test row, each with fresh inverted-dropout masks.

    Masks for test row ``i`` come from stream ``(seed, 20, i)``, so any subset
    of rows can be evaluated separately and still match a full run.
    """
    if T < 2:
        raise ValueError("need at least two passes")
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    n = x_star.shape[0]
    means = np.empty((T, n))
    logvars = np.empty((T, n)) if net.arch.n_out == 2 else None
    if dropout_rate <= 0:
        # deterministic network: every pass is the same single forward pass
        mu, lv = forward(net, x_star)
        means[:] = mu
        if logvars is not None:
            logvars[:] = lv
        return Passes(means, logvars, dropout_rate)
    for i in range(n):
        gen = _rng.stream(seed, 20, i)
        masks = draw_masks(gen, T, net.arch, dropout_rate)
        mu, lv = forward(net, np.broadcast_to(x_star[i], (T, x_star.shape[1])), masks, dropout_rate)
        means[:, i] = mu
        if logvars is not None:
            logvars[:, i] = lv
    return Passes(means, logvars, dropout_rate)


def fa_precision(dropout_rate: float, length_scale: float, n_train: int,
                 weight_decay: float) -> float:
    """Model precision ``p * l^2 / (2 N lambda)``; the FA noise variance is its inverse."""
    if weight_decay <= 0:
        raise ValueError("FA precision needs weight_decay > 0")
    if dropout_rate <= 0:
        raise ValueError("FA precision needs dropout_rate > 0")
    return dropout_rate * length_scale ** 2 / (2.0 * n_train * weight_decay)


def summarize(passes: Passes, variant: UQVariant, weight_decay: float = 0.0) -> PredictiveSummary:
    mean = passes.mean.mean(axis=0)
    # shifted by the first pass so identical passes give exactly zero
    var_epi = (passes.mean - passes.mean[:1]).var(axis=0)
    if variant.tag == "EU":
        var_ale = np.zeros_like(mean)
    elif variant.tag == "FA":
        tau = fa_precision(passes.dropout_rate, variant.length_scale, variant.n_train, weight_decay)
        var_ale = np.full_like(mean, 1.0 / tau)
    else:
        if passes.logvar is None:
            raise ValueError("LA summary needs a network with a log-variance head")
        var_ale = np.exp(passes.logvar).mean(axis=0)
    return PredictiveSummary(mean, var_epi, var_ale, var_epi + var_ale, passes.mean)


def interval(summary: PredictiveSummary, k: float):
    if not k > 0:
        raise ValueError("k must be positive")
    half = k * summary.sd_tot
    return summary.mean - half, summary.mean + half


def crps_samples_for_variant(passes: Passes, variant: UQVariant, seed: int = 0) -> np.ndarray:
    """Predictive samples ``(T, n)`` used for CRPS.

    EU and FA both return the raw pass outputs; LA adds Gaussian noise with
    each pass's learned standard deviation.
    """
    if passes.T < 2:
        raise ValueError("need at least two passes")
    if variant.tag in ("EU", "FA"):
        return passes.mean
    if passes.logvar is None:
        raise ValueError("LA samples need a network with a log-variance head")
    noise = _rng.stream(seed, 21).standard_normal(passes.mean.shape)
    return passes.mean + noise * np.exp(0.5 * passes.logvar)
