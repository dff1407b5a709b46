import numpy as np
import pytest

from cgssm.errors import DimensionError
from cgssm.ssm import (
    CgssModel,
    IndicatorSequence,
    SystemMatrices,
    constant_provider,
    null_indicators,
    simulate,
)

from oracles import JointOracle, random_model


def test_indicator_sequence_validation():
    seq = IndicatorSequence(np.array([0, 1, 2, 0]), (0, 1, 2))
    assert seq.n == 4 and seq.size == 3
    with pytest.raises(DimensionError):
        IndicatorSequence(np.array([0, 3]), (0, 1, 2))
    with pytest.raises(DimensionError):
        IndicatorSequence(np.array([-1, 0]), (0, 1))


def test_null_indicators():
    seq = null_indicators(5, (0, 1, 2))
    assert seq.n == 5
    assert np.all(seq.labels == 0)


def test_indicator_copy_is_independent():
    seq = IndicatorSequence(np.array([0, 1]), (0, 1))
    dup = seq.copy()
    dup.labels[0] = 1
    assert seq.labels[0] == 0


def test_constant_provider_shape_check():
    mats = SystemMatrices(
        obs_offset=np.zeros(2),
        obs_loading=np.ones((2, 3)),
        obs_noise=np.eye(2),
        state_offset=np.zeros(3),
        transition=np.eye(3),
        noise_loading=np.ones((3, 1)),
    )
    model = CgssModel(
        n=4, p=2, m=3, r=1,
        provider=constant_provider(mats),
        init_mean=np.zeros(3), init_cov=np.eye(3),
    )
    got = model.mats(2, 0, None)
    assert got.obs_loading.shape == (2, 3)

    bad = SystemMatrices(
        obs_offset=np.zeros(2),
        obs_loading=np.ones((2, 2)),   # wrong m
        obs_noise=np.eye(2),
        state_offset=np.zeros(3),
        transition=np.eye(3),
        noise_loading=np.ones((3, 1)),
    )
    model_bad = CgssModel(
        n=4, p=2, m=3, r=1,
        provider=constant_provider(bad),
        init_mean=np.zeros(3), init_cov=np.eye(3),
    )
    with pytest.raises(DimensionError):
        model_bad.mats(0, 0, None)


def test_simulate_shapes_and_determinism():
    rng = np.random.default_rng(7)
    model = random_model(rng, n=6, p=2, m=3, r=2)
    seq = null_indicators(6, (0,))
    y1, x1 = simulate(model, seq, None, np.random.default_rng(123))
    y2, x2 = simulate(model, seq, None, np.random.default_rng(123))
    assert y1.shape == (6, 2) and x1.shape == (6, 3)
    np.testing.assert_array_equal(y1, y2)
    np.testing.assert_array_equal(x1, x2)


def test_simulate_moments_match_oracle():
    # sample mean/cov of simulated draws converges to the oracle joint
    rng = np.random.default_rng(99)
    model = random_model(rng, n=4, p=2, m=2, r=1)
    seq = null_indicators(4, (0,))
    oracle = JointOracle(model, seq, None)
    draws = np.random.default_rng(5)
    n_rep = 40000
    ys = np.empty((n_rep, 4 * 2))
    for i in range(n_rep):
        y, _ = simulate(model, seq, None, draws)
        ys[i] = y.ravel()
    idx = np.arange(4 * 2 * 2)[4 * 2:]  # observation block of oracle vector
    mu_o = oracle.mean[idx]
    s_o = oracle.cov[np.ix_(idx, idx)]
    err_mean = np.max(np.abs(ys.mean(axis=0) - mu_o))
    err_cov = np.max(np.abs(np.cov(ys.T) - s_o))
    scale = np.sqrt(np.max(np.diag(s_o)))
    assert err_mean < 5.0 * scale / np.sqrt(n_rep) * 4
    assert err_cov < 0.15 * np.max(np.diag(s_o))


def test_label_changes_noise_loading():
    rng = np.random.default_rng(3)
    model = random_model(rng, n=5, p=2, m=2, r=1, n_labels=3)
    base = model.mats(2, 0, None)
    hit = model.mats(2, 2, None)
    assert not np.allclose(base.noise_loading, hit.noise_loading)
    # observation side must not depend on the label
    np.testing.assert_array_equal(base.obs_loading, hit.obs_loading)


def test_noiseless_constant_path():
    # zero noise on both equations and a degenerate start pin every value
    mats = SystemMatrices(
        obs_offset=np.zeros(1),
        obs_loading=np.eye(1),
        obs_noise=np.zeros((1, 1)),
        state_offset=np.zeros(1),
        transition=np.eye(1),
        noise_loading=np.zeros((1, 1)),
    )
    model = CgssModel(
        n=6, p=1, m=1, r=1,
        provider=constant_provider(mats),
        init_mean=np.array([5.0]), init_cov=np.zeros((1, 1)),
    )
    y, x = simulate(model, null_indicators(6, (0,)), None,
                    np.random.default_rng(0))
    assert np.all(y == 5.0)
    assert np.all(x == 5.0)
