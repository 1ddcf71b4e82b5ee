"""Interval scores, sample CRPS and the usual point/interval diagnostics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

SCORE_FIELDS = ("mmis", "crps", "rmse", "width", "coverage")


@dataclass(frozen=True)
class ScoreRecord:
    mmis: float
    crps: float
    rmse: float
    width: float
    coverage: float
    alpha: float = 0.05
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage outside [0, 1]: {self.coverage}")
        for name in ("width", "rmse", "crps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json_obj(self) -> dict:
        """The wire form: ``{mis, crps, rmse, width, coverage}``."""
        return {"mis": self.mmis, "crps": self.crps, "rmse": self.rmse,
                "width": self.width, "coverage": self.coverage}


def _check_alpha_gamma(alpha, gamma):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")


def m_interval_score(L, U, y, alpha: float = 0.05, gamma: float = 1.0):
    """Width-weighted interval score; elementwise for array inputs.

    ``gamma * (U - L) + 2/alpha * (L - y) 1{y < L} + 2/alpha * (y - U) 1{y > U}``
    """
    _check_alpha_gamma(alpha, gamma)
    L, U, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (L, U, y)))
    if np.any(L > U):
        raise ValueError("interval lower bound exceeds upper bound")
    s = gamma * (U - L)
    s = s + (2.0 / alpha) * np.where(y < L, L - y, 0.0)
    s = s + (2.0 / alpha) * np.where(y > U, y - U, 0.0)
    return float(s) if s.ndim == 0 else s


def mmis(L, U, y, alpha: float = 0.05, gamma: float = 1.0) -> float:
    L, U, y = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (L, U, y))
    if not (L.shape == U.shape == y.shape):
        raise ValueError("interval and observation lengths differ")
    if y.size == 0:
        raise ValueError("empty test set")
    return float(np.mean(m_interval_score(L, U, y, alpha, gamma)))


def crps_from_samples(samples, y):
    """Energy-form CRPS estimate from predictive samples.

    ``samples`` has shape ``(..., T)`` with matching leading shape in ``y``.
    The pairwise term uses the sorted-sample identity, so the cost is
    O(T log T) per observation.
    """
    x = np.asarray(samples, dtype=float)
    y = np.asarray(y, dtype=float)
    T = x.shape[-1]
    if T < 2:
        raise ValueError("CRPS needs at least two samples")
    x = np.sort(x, axis=-1)
    # offsets from the first entry keep a point mass exact: CRPS = |x - y|
    d = np.abs(x - y[..., None])
    abs_err = d[..., 0] + np.mean(d - d[..., :1], axis=-1)
    # sum_{t,s} |x_t - x_s| = 2 * sum_i (2i - T - 1) x_(i), i = 1..T; weights sum to 0
    w = 2.0 * np.arange(1, T + 1) - T - 1
    pair = 2.0 * np.sum(w * (x - x[..., :1]), axis=-1)
    out = abs_err - pair / (2.0 * T * T)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def _paired(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def rmse(pred, y) -> float:
    pred, y = _paired(pred, y)
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def coverage(L, U, y) -> float:
    L, y = _paired(L, y)
    U, _ = _paired(U, y)
    return float(np.mean((y >= L) & (y <= U)))


def mean_width(L, U) -> float:
    L, U = _paired(L, U)
    return float(np.mean(U - L))


def score_intervals(mean, L, U, y, crps: float, alpha: float = 0.05,
                    gamma: float = 1.0) -> ScoreRecord:
    return ScoreRecord(
        mmis=mmis(L, U, y, alpha, gamma),
        crps=float(crps),
        rmse=rmse(mean, y),
        width=mean_width(L, U),
        coverage=coverage(L, U, y),
        alpha=alpha,
        gamma=gamma,
    )
