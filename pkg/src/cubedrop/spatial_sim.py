"""Simulation of spatial linear mixed model data with Matern random effects."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import rng as _rng

SUPPORTED_NU = (0.5, 1.5, 2.5)
EFFECTIVE_CORRELATION = 0.05


class CholeskyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MaternParams:
    sigma2: float = 1.0
    rho: float = 1.0
    nu: float = 0.5

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if float(self.nu) not in SUPPORTED_NU:
            raise ValueError(f"nu must be one of {SUPPORTED_NU}, got {self.nu}")


def matern_cov(d, params: MaternParams):
    """Half-integer Matern covariance at distance(s) ``d``.

    Uses the ``sqrt(2 nu) d / rho`` scaling, so for nu=0.5 this is
    ``sigma2 * exp(-d / rho)``.  Accepts scalars or arrays.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    nu = float(params.nu)
    r = math.sqrt(2.0 * nu) * d / params.rho
    if nu == 0.5:
        c = np.exp(-r)
    elif nu == 1.5:
        c = (1.0 + r) * np.exp(-r)
    elif nu == 2.5:
        c = (1.0 + r + r * r / 3.0) * np.exp(-r)
    else:  # pragma: no cover - guarded by MaternParams
        raise ValueError(f"unsupported nu {nu}")
    out = params.sigma2 * c
    return float(out) if out.ndim == 0 else out


def effective_range_to_rho(eff_range: float, nu: float, *, rtol: float = 1e-10,
                           max_iter: int = 500) -> float:
    """Range parameter whose correlation at ``eff_range`` equals 0.05 (bisection)."""
    if not eff_range > 0:
        raise ValueError("effective range must be positive")

    def corr(rho):
        return matern_cov(eff_range, MaternParams(1.0, rho, nu)) - EFFECTIVE_CORRELATION

    # correlation at fixed distance increases with rho
    lo, hi = eff_range * 1e-3, eff_range
    while corr(hi) < 0:
        hi *= 2.0
    while corr(lo) > 0:
        lo /= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if corr(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            return 0.5 * (lo + hi)
    raise RuntimeError(f"bisection did not converge in {max_iter} iterations")


def build_cov_matrix(locations, params: MaternParams) -> np.ndarray:
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if locations.shape[0] < 1:
        raise ValueError("need at least one location")
    cov = matern_cov(cdist(locations, locations), params)
    cov = np.atleast_2d(cov)
    np.fill_diagonal(cov, params.sigma2)
    return 0.5 * (cov + cov.T)


def jittered_cholesky(cov: np.ndarray, scale: float, start: float = 1e-10,
                      stop: float = 1e-4) -> np.ndarray:
    """Lower Cholesky factor of ``cov + delta*scale*I``, escalating delta x10."""
    delta = start
    eye = np.eye(cov.shape[0])
    while delta <= stop * (1 + 1e-9):
        try:
            return np.linalg.cholesky(cov + delta * scale * eye)
        except np.linalg.LinAlgError:
            delta *= 10.0
    raise CholeskyError(f"Cholesky failed with jitter up to {stop:g} * {scale:g}")


def simulate_gp(locations, params: MaternParams, seed: int) -> np.ndarray:
    """Draw one zero-mean GP realisation at ``locations``."""
    cov = build_cov_matrix(locations, params)
    chol = jittered_cholesky(cov, params.sigma2)
    z = _rng.stream(seed, _rng.FIELD).standard_normal(cov.shape[0])
    return chol @ z


@dataclass(frozen=True)
class SimConfig:
    n_total: int = 2000
    n_train: int = 1600
    beta: tuple = (1.0, 1.0)
    covariate_low: float = -0.5
    covariate_high: float = 0.5
    noise_var: float = 0.1
    sigma2: float = 1.0
    nu: float = 0.5
    effective_range: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.n_train < self.n_total:
            raise ValueError("need 0 < n_train < n_total")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if not self.covariate_low < self.covariate_high:
            raise ValueError("covariate_low must be below covariate_high")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @property
    def matern(self) -> MaternParams:
        rho = effective_range_to_rho(self.effective_range, self.nu)
        return MaternParams(self.sigma2, rho, self.nu)


@dataclass
class SpatialDataset:
    locations: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    omega: np.ndarray | None
    train_idx: np.ndarray
    test_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.locations.shape[0]
        if self.X.shape[0] != n or self.Z.shape[0] != n:
            raise ValueError("row counts of locations, X and Z differ")
        both = np.intersect1d(self.train_idx, self.test_idx)
        if both.size:
            raise ValueError(f"indices in both partitions: {both[:5]}")
        if self.train_idx.size + self.test_idx.size != n:
            raise ValueError("train/test partition does not cover all rows")

    @property
    def n_total(self) -> int:
        return self.locations.shape[0]

    @property
    def split(self) -> np.ndarray:
        labels = np.empty(self.n_total, dtype=object)
        labels[self.train_idx] = "train"
        labels[self.test_idx] = "test"
        return labels


def simulate_dataset(cfg: SimConfig, omega: np.ndarray | None = None) -> SpatialDataset:
    """Simulate ``Z = X beta + omega + eps`` at uniform random locations.

    ``omega`` may be supplied to override the GP draw (e.g. zeros for checks).
    """
    n, p = cfg.n_total, len(cfg.beta)
    locations = _rng.stream(cfg.seed, _rng.LOCATIONS).random((n, 2))
    X = _rng.stream(cfg.seed, _rng.COVARIATES).uniform(cfg.covariate_low, cfg.covariate_high, (n, p))
    if omega is None:
        omega = simulate_gp(locations, cfg.matern, cfg.seed)
    eps = math.sqrt(cfg.noise_var) * _rng.stream(cfg.seed, _rng.NOISE).standard_normal(n)
    Z = X @ np.asarray(cfg.beta) + omega + eps
    perm = _rng.stream(cfg.seed, _rng.SPLIT).permutation(n)
    train_idx = np.sort(perm[: cfg.n_train])
    test_idx = np.sort(perm[cfg.n_train:])
    return SpatialDataset(locations, X, Z, omega, train_idx, test_idx,
                          meta={"eps": eps, "nu": cfg.nu, "effective_range": cfg.effective_range})
