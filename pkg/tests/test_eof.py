"""Basis extraction tests: orthonormality, retention rule, Eckart-Young,
Gram route equivalence, and subspace recovery."""

import numpy as np
import pytest

from cgssm.eof import compute_eof
from cgssm.errors import DegenerateBasisError, DimensionError


def _panel(rng, n=80, p=30, k=3, noise=0.1):
    loading = rng.standard_normal((p, k))
    signal = rng.standard_normal((n, k)) * np.array([5.0, 3.0, 2.0][:k])
    return signal @ loading.T + noise * rng.standard_normal((n, p))


def test_columns_orthonormal_and_explained_sorted():
    rng = np.random.default_rng(0)
    basis = compute_eof(_panel(rng), threshold=0.001, k_max=5)
    k = basis.theta.shape[1]
    assert np.max(np.abs(basis.theta.T @ basis.theta - np.eye(k))) < 1e-10
    assert np.all(np.diff(basis.explained) <= 1e-15)
    assert np.all(basis.explained >= 0.001)


def test_eckart_young_reconstruction():
    rng = np.random.default_rng(1)
    data = _panel(rng)
    centered = data - data.mean(axis=0)
    sing = np.linalg.svd(centered, compute_uv=False)
    basis = compute_eof(data, threshold=0.001, k_max=2)
    approx = (centered @ basis.theta) @ basis.theta.T
    err = float(np.sum((centered - approx) ** 2))
    assert abs(err - float(np.sum(sing[2:] ** 2))) < 1e-8 * np.sum(sing ** 2)


def test_rank_one_panel():
    rng = np.random.default_rng(2)
    pattern = rng.standard_normal(12)
    series = rng.standard_normal(40)
    basis = compute_eof(np.outer(series, pattern), k_max=5)
    assert basis.theta.shape == (12, 1)
    assert abs(basis.explained[0] - 1.0) < 1e-12


def test_sign_convention_deterministic():
    rng = np.random.default_rng(3)
    data = _panel(rng)
    basis = compute_eof(data, k_max=3)
    again = compute_eof(-1.0 * -1.0 * data, k_max=3)
    assert np.array_equal(basis.theta, again.theta)
    for j in range(basis.theta.shape[1]):
        pivot = np.argmax(np.abs(basis.theta[:, j]))
        assert basis.theta[pivot, j] > 0.0


def test_gram_route_matches_direct_svd():
    rng = np.random.default_rng(4)
    n, p = 25, 400  # wide panel forces the Gram route
    loading = rng.standard_normal((p, 2))
    signal = rng.standard_normal((n, 2)) * [4.0, 2.0]
    data = signal @ loading.T + 0.05 * rng.standard_normal((n, p))
    basis = compute_eof(data, threshold=0.001, k_max=4)
    centered = data - data.mean(axis=0)
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    k = basis.theta.shape[1]
    for j in range(k):
        direct = vt[j] if vt[j, np.argmax(np.abs(vt[j]))] > 0 else -vt[j]
        assert np.max(np.abs(basis.theta[:, j] - direct)) < 1e-8
    assert np.max(np.abs(basis.explained
                         - sing[:k] ** 2 / np.sum(sing ** 2))) < 1e-10


def test_subspace_angle_under_noise():
    rng = np.random.default_rng(5)
    n, p, k = 200, 50, 2
    loading, _ = np.linalg.qr(rng.standard_normal((p, k)))
    signal = rng.standard_normal((n, k))
    signal_mat = signal @ loading.T
    # signal-to-noise 10 in variance
    noise_sd = np.sqrt(np.var(signal_mat) / 10.0)
    data = signal_mat + noise_sd * rng.standard_normal((n, p))
    basis = compute_eof(data, threshold=0.01, k_max=2)
    assert basis.theta.shape[1] == 2
    angles = np.linalg.svd(loading.T @ basis.theta, compute_uv=False)
    worst = np.degrees(np.arccos(np.clip(angles.min(), -1.0, 1.0)))
    assert worst < 5.0


def test_threshold_retention_rule():
    rng = np.random.default_rng(6)
    n, p = 100, 6
    scales = np.array([10.0, 5.0, 0.01, 0.01, 0.01, 0.01])
    data = rng.standard_normal((n, p)) * scales
    basis = compute_eof(data, threshold=0.01, k_max=6)
    assert basis.theta.shape[1] == 2
    capped = compute_eof(data, threshold=0.01, k_max=1)
    assert capped.theta.shape[1] == 1


def test_standardized_variant():
    rng = np.random.default_rng(7)
    data = _panel(rng) * np.linspace(1.0, 50.0, 30)
    basis = compute_eof(data, threshold=0.001, k_max=3, standardize=True)
    assert np.all(basis.col_scales > 0.0)
    k = basis.theta.shape[1]
    assert np.max(np.abs(basis.theta.T @ basis.theta - np.eye(k))) < 1e-10


def test_degenerate_inputs():
    with pytest.raises(DegenerateBasisError):
        compute_eof(np.ones((30, 4)))
    with pytest.raises(DegenerateBasisError):
        compute_eof(np.r_[np.ones((30, 4)), np.full((1, 4), np.nan)])
    with pytest.raises(DimensionError):
        compute_eof(np.ones(10))
    with pytest.raises(DimensionError):
        compute_eof(np.ones((1, 5)))
