"""Eigenvector spatial basis functions and the augmented design matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spatial_sim import MaternParams, build_cov_matrix


@dataclass(frozen=True)
class BasisSet:
    phi: np.ndarray
    eigenvalues: np.ndarray
    source_params: MaternParams | None = None

    @property
    def m(self) -> int:
        return self.phi.shape[1]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # first entry with non-negligible magnitude made positive
    tol = 1e-12 * max(1.0, float(np.abs(vecs).max(initial=0.0)))
    for j in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, j]) > tol)
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def eigen_basis(cov, m: int, source_params: MaternParams | None = None) -> BasisSet:
    """Leading ``m`` eigenpairs of a symmetric matrix, largest eigenvalue first."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if cov.shape != (n, n):
        raise ValueError("covariance must be square")
    if not 0 <= m <= n:
        raise ValueError(f"m must lie in [0, {n}], got {m}")
    if m == 0:
        return BasisSet(np.empty((n, 0)), np.empty(0), source_params)
    try:
        vals, vecs = scipy.linalg.eigh(cov, subset_by_index=(n - m, n - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], np.ascontiguousarray(vecs[:, order])
    return BasisSet(_fix_signs(vecs), vals, source_params)


def matern_basis(locations, params: MaternParams, m: int) -> BasisSet:
    return eigen_basis(build_cov_matrix(locations, params), m, params)


def augment_design(X, phi) -> np.ndarray:
    """``[X, phi]`` with the covariates first."""
    X = np.asarray(X, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != phi.shape[0]:
        raise ValueError(f"row mismatch: X has {X.shape[0]}, phi has {phi.shape[0]}")
    return np.hstack([X, phi])


def basis_at_test(basis: BasisSet, test_indices) -> np.ndarray:
    """Rows of the all-location basis belonging to ``test_indices``."""
    idx = np.asarray(test_indices, dtype=int)
    n = basis.phi.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"test index out of range for {n} basis rows")
    return basis.phi[idx]
