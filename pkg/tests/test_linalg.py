import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgssm.errors import SingularInnovationError
from cgssm.linalg import (
    chol_lower,
    chol_solve,
    logdet_from_chol,
    psd_factor,
    symmetrize,
)


def random_psd(rng, m, rank=None):
    rank = m if rank is None else rank
    a = rng.standard_normal((m, rank))
    return a @ a.T


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_psd_factor_reconstructs(m, rank, seed):
    rank = min(rank, m)
    rng = np.random.default_rng(seed)
    mat = random_psd(rng, m, rank)
    root = psd_factor(mat)
    assert root.shape[0] == m and root.shape[1] <= m
    np.testing.assert_allclose(root @ root.T, mat, atol=1e-10 * max(1.0, np.abs(mat).max()))


def test_psd_factor_drops_null_directions():
    mat = np.diag([2.0, 0.0, 1.0])
    root = psd_factor(mat)
    assert root.shape == (3, 2)


def test_psd_factor_tolerates_tiny_negatives():
    mat = np.diag([1.0, -1e-15])
    root = psd_factor(mat)
    np.testing.assert_allclose(root @ root.T, np.diag([1.0, 0.0]), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_chol_solve_inverts(m, seed):
    rng = np.random.default_rng(seed)
    mat = random_psd(rng, m) + np.eye(m)
    low = chol_lower(mat)
    b = rng.standard_normal((m, 2))
    np.testing.assert_allclose(mat @ chol_solve(low, b), b, atol=1e-8)
    # log det agreement with slogdet
    assert logdet_from_chol(low) == pytest.approx(
        np.linalg.slogdet(mat)[1], abs=1e-9
    )


def test_chol_lower_jitters_once_then_raises():
    # barely indefinite matrix is rescued by the jitter
    mat = np.eye(2) * 1.0
    mat[1, 1] = -1e-14
    low = chol_lower(mat)
    assert np.isfinite(low).all()
    # a hard zero matrix cannot be rescued
    with pytest.raises(SingularInnovationError) as exc:
        chol_lower(np.zeros((2, 2)), t=7)
    assert exc.value.t == 7


def test_symmetrize():
    a = np.array([[1.0, 2.0], [0.0, 3.0]])
    s = symmetrize(a)
    np.testing.assert_array_equal(s, s.T)
    np.testing.assert_allclose(s, np.array([[1.0, 1.0], [1.0, 3.0]]))
