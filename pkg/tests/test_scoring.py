import numpy as np
import pytest
from hypothesis import given, strategies as st

from cubedrop.scoring import (coverage, crps_from_samples, m_interval_score, mean_width, mmis,
                              rmse, score_intervals)

# frozen from /root/notes/oracles.py
MIXED_MEAN = 9.166666666666668       # (1 + 22 + 4.5) / 3
GAUSS_CRPS = 0.23369497725510913     # 2 phi(0) - 1/sqrt(pi)
TWO_POINT_RMSE = 1.5811388300841898


def test_mis_hand_cases():
    assert m_interval_score(0, 1, 0.5) == 1.0
    assert m_interval_score(0, 1, 1.2) == pytest.approx(9.0, abs=1e-12)
    assert m_interval_score(0, 1, 0.5, gamma=2) == 2.0
    assert m_interval_score(0, 1, 1.2, gamma=2) == pytest.approx(10.0, abs=1e-12)


def test_mmis_cases():
    assert mmis([0, 1], [0.5, 1.5], [0.2, 1.0]) == pytest.approx(0.5)
    assert mmis([0], [1], [1.2]) == m_interval_score(0, 1, 1.2)
    assert mmis([0, 0, 1], [1, 2, 1.5], [0.5, -0.5, 1.6]) == pytest.approx(MIXED_MEAN, rel=1e-12)


def test_alpha_gamma_validation():
    with pytest.raises(ValueError):
        m_interval_score(0, 1, 0.5, alpha=0)
    with pytest.raises(ValueError):
        m_interval_score(0, 1, 0.5, gamma=-1)
    with pytest.raises(ValueError):
        mmis([1.0], [0.0], [0.5])


def test_crps_point_mass():
    y = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(crps_from_samples(np.repeat(y[:, None], 7, 1), y), np.zeros(3))
    c = np.array([0.5, -2.0, 0.25])
    assert np.array_equal(crps_from_samples(np.repeat((y + c)[:, None], 7, 1), y), np.abs(c))


def test_crps_gaussian():
    s = np.random.default_rng(0).standard_normal(100_000)
    assert crps_from_samples(s, 0.0) == pytest.approx(GAUSS_CRPS, rel=0.02)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(-10, 10))
def test_crps_matches_pairwise_definition(samples, y):
    x = np.array(samples)
    ref = np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x[:, None] - x[None, :]))
    assert crps_from_samples(x, y) == pytest.approx(ref, abs=1e-9)
    assert crps_from_samples(x, y) >= -1e-12


def test_rmse_coverage_width():
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([1, 2], [0, 4]) == pytest.approx(TWO_POINT_RMSE, rel=1e-15)
    assert coverage([-1e9] * 3, [1e9] * 3, [0, 5, -5]) == 1.0
    assert coverage([0, 0], [1, 1], [1.0, 1.5]) == 0.5   # endpoint inclusive
    assert mean_width([0, 1], [2, 2]) == 1.5
    with pytest.raises(ValueError):
        rmse([], [])


def test_score_intervals_record():
    rec = score_intervals([0.5, 0.5], [0, 0], [1, 1], [0.5, 1.2], crps=0.1)
    assert rec.mmis == pytest.approx(5.0)
    assert rec.coverage == 0.5 and rec.width == 1.0
    assert set(rec.to_json_obj()) == {"mis", "crps", "rmse", "width", "coverage"}
