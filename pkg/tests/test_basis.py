import numpy as np
import pytest

from cubedrop.basis import augment_design, basis_at_test, eigen_basis, matern_basis
from cubedrop.spatial_sim import MaternParams, build_cov_matrix


def test_identity():
    b = eigen_basis(np.eye(6), 6)
    assert np.allclose(b.eigenvalues, 1.0)
    assert np.allclose(b.phi.T @ b.phi, np.eye(6), atol=1e-12)


def test_diagonal():
    b = eigen_basis(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(b.eigenvalues, [3.0, 2.0])
    assert np.allclose(np.abs(b.phi), [[1, 0], [0, 1], [0, 0]])
    # sign convention: first non-negligible entry positive
    assert np.array_equal(b.phi, [[1, 0], [0, 1], [0, 0]])


def test_matern_orthonormal_and_truncation(rng):
    locs = rng.random((300, 2))
    p = MaternParams(1.0, 0.1, 0.5)
    b = matern_basis(locs, p, 25)
    assert b.phi.shape == (300, 25)
    assert np.abs(b.phi.T @ b.phi - np.eye(25)).max() < 1e-8
    assert np.all(np.diff(b.eigenvalues) <= 0)
    cov = build_cov_matrix(locs, p)
    errs = []
    for m in (1, 5, 10, 25, 50):
        bm = eigen_basis(cov, m)
        errs.append(np.linalg.norm(cov - bm.phi @ np.diag(bm.eigenvalues) @ bm.phi.T))
    assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))


def test_bad_m():
    with pytest.raises(ValueError):
        eigen_basis(np.eye(3), 4)
    with pytest.raises(ValueError):
        eigen_basis(np.eye(3), -1)


def test_augment(rng):
    phi = rng.random((20, 3))
    X = rng.random((20, 2))
    assert np.array_equal(augment_design(np.empty((20, 0)), phi), phi)
    assert np.array_equal(augment_design(X, np.empty((20, 0))), X)
    assert augment_design(rng.random((2000, 2)), rng.random((2000, 25))).shape == (2000, 27)
    with pytest.raises(ValueError):
        augment_design(X[:5], phi)


def test_basis_at_test_partition(rng):
    b = eigen_basis(np.diag(rng.random(10) + 1), 4)
    assert basis_at_test(b, []).shape == (0, 4)
    assert np.array_equal(basis_at_test(b, np.arange(10)), b.phi)
    tr, te = np.arange(0, 10, 2), np.arange(1, 10, 2)
    back = np.empty_like(b.phi)
    back[tr] = basis_at_test(b, tr)
    back[te] = basis_at_test(b, te)
    assert np.array_equal(back, b.phi)
