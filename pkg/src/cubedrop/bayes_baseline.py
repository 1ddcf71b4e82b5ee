"""Conjugate Gibbs sampler for the basis-augmented Bayesian linear model.

Model: ``z ~ N(X beta, tau2 I)``, ``beta ~ N(mu, C)``,
``tau2 ~ IG(a, b)`` with density proportional to ``tau2^(-a-1) exp(-b / tau2)``
(``b`` is a scale).  The full conditionals are

* ``beta | tau2 ~ N(P^-1 (C^-1 mu + X'z / tau2), P^-1)``,
  ``P = C^-1 + X'X / tau2``
* ``tau2 | beta ~ IG(a + n/2, b + RSS(beta)/2)``.

The beta draw is done in whitened coordinates ``beta = mu + R theta`` with
``C = R R'``.  One eigendecomposition of ``R' X'X R`` up front makes every
subsequent conditional draw O(q^2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .scoring import ScoreRecord, crps_from_samples, score_intervals


class PrecisionError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BaselinePriors:
    beta_mean: np.ndarray
    beta_cov: np.ndarray
    tau2_shape: float = 2.0
    tau2_scale: float = 1.0

    def __post_init__(self):
        if not (self.tau2_shape > 0 and self.tau2_scale > 0):
            raise ValueError("inverse-gamma shape and scale must be positive")
        cov = np.asarray(self.beta_cov, dtype=float)
        if cov.shape != (len(self.beta_mean),) * 2 or not np.allclose(cov, cov.T):
            raise ValueError("beta_cov must be a symmetric q x q matrix")

    @classmethod
    def default(cls, q: int, z_train, cov_scale: float = 100.0, shape: float = 2.0):
        """``beta ~ N(0, 100 I)``, ``tau2 ~ IG(2, var(z_train))``."""
        return cls(np.zeros(q), cov_scale * np.eye(q), shape, float(np.var(z_train)))


@dataclass
class PosteriorDraws:
    beta_draws: np.ndarray
    tau2_draws: np.ndarray
    n_burn: int
    n_iter: int
    meta: dict = field(default_factory=dict)

    @property
    def n_keep(self) -> int:
        return self.n_iter - self.n_burn


def gibbs_sample(x_tilde, z_train, priors: BaselinePriors, n_iter: int = 10_000,
                 n_burn: int = 1_000, seed: int = 0, tau2_init: float | None = None
                 ) -> PosteriorDraws:
    X = np.asarray(x_tilde, dtype=float)
    z = np.asarray(z_train, dtype=float)
    n, q = X.shape
    if z.shape != (n,):
        raise ValueError("z_train length does not match design rows")
    if not 0 <= n_burn < n_iter:
        raise ValueError("need 0 <= n_burn < n_iter")
    mu = np.asarray(priors.beta_mean, dtype=float)
    R = np.linalg.cholesky(np.asarray(priors.beta_cov, dtype=float))

    XtX = X.T @ X
    Xtz = X.T @ z
    ztz = float(z @ z)
    # whitened sufficient statistics, residual r0 = z - X mu
    A = R.T @ XtX @ R
    A = 0.5 * (A + A.T)
    d, V = np.linalg.eigh(A)
    d = np.clip(d, 0.0, None)
    g = V.T @ (R.T @ (Xtz - XtX @ mu))

    a_post = priors.tau2_shape + 0.5 * n
    gen = _rng.stream(seed, 0)
    tau2 = float(np.var(z)) if tau2_init is None else float(tau2_init)

    n_keep = n_iter - n_burn
    betas = np.empty((n_keep, q))
    tau2s = np.empty(n_keep)
    for it in range(n_iter):
        prec = 1.0 + d / tau2
        if not np.all(np.isfinite(prec)) or np.any(prec <= 0):
            raise PrecisionError(f"non-positive-definite precision at iteration {it}")
        # theta | tau2 in the eigenbasis of the whitened precision
        eta = g / (tau2 * prec) + gen.standard_normal(q) / np.sqrt(prec)
        beta = mu + R @ (V @ eta)
        rss = ztz - 2.0 * beta @ Xtz + beta @ XtX @ beta
        rss = max(rss, 0.0)
        tau2 = (priors.tau2_scale + 0.5 * rss) / gen.gamma(a_post)
        if it >= n_burn:
            betas[it - n_burn] = beta
            tau2s[it - n_burn] = tau2
    return PosteriorDraws(betas, tau2s, n_burn, n_iter, meta={"seed": seed})


def conditional_beta_moments(x_tilde, z_train, priors: BaselinePriors, tau2: float):
    """Closed-form mean and covariance of ``beta | tau2`` (direct inversion)."""
    X = np.asarray(x_tilde, dtype=float)
    Cinv = np.linalg.inv(np.asarray(priors.beta_cov, dtype=float))
    P = Cinv + X.T @ X / tau2
    cov = np.linalg.inv(P)
    mean = cov @ (Cinv @ priors.beta_mean + X.T @ np.asarray(z_train, dtype=float) / tau2)
    return mean, cov


def posterior_predictive(draws: PosteriorDraws, x_tilde_test, seed: int = 0) -> np.ndarray:
    """``n_test x n_keep`` predictive draws ``X beta_t + N(0, tau2_t)``."""
    Xt = np.asarray(x_tilde_test, dtype=float)
    if draws.beta_draws.shape[0] == 0:
        raise ValueError("no posterior draws")
    if Xt.ndim != 2 or Xt.shape[1] != draws.beta_draws.shape[1]:
        raise ValueError(f"test design has shape {Xt.shape}, draws have "
                         f"{draws.beta_draws.shape[1]} coefficients")
    mean = Xt @ draws.beta_draws.T
    noise = _rng.stream(seed, 1).standard_normal(mean.shape)
    return mean + noise * np.sqrt(draws.tau2_draws)[None, :]


def baseline_scores(pred_samples, z_test, alpha: float = 0.05, gamma: float = 1.0
                    ) -> ScoreRecord:
    S = np.asarray(pred_samples, dtype=float)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ValueError("need at least two predictive samples per test row")
    L, U = np.quantile(S, [alpha / 2, 1 - alpha / 2], axis=1)
    crps = float(np.mean(crps_from_samples(S, z_test)))
    return score_intervals(S.mean(axis=1), L, U, z_test, crps, alpha, gamma)
