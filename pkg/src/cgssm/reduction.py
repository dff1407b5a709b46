"""Dimension reduction of the observation equation by GLS projection.

For observations y_t = g_t + L q_t(x_t) + noise with a tall full-rank static
loading L (p x k, k << p) and diagonal noise covariance diag(noise_var), the
GLS projection

    y*_t = (L' S^{-1} L)^{-1} L' S^{-1} y_t,    S = diag(noise_var)

carries all information about the state: the complementary residual is
independent of both the state and y*. The projected series follows a state
space model with k-dimensional observations whose noise covariance is
(L' S^{-1} L)^{-1}, so filtering costs no longer scale with p.

The projected likelihood differs from the full-data likelihood by an additive
constant that depends only on (L, noise_var) and the discarded residuals.
Likelihood differences across state-side parameters, likelihood ratios, and
indicator label conditionals are therefore unchanged; tests pin this down.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, ReductionRankError
from .linalg import chol_solve, symmetrize
from .ssm import CgssModel, SystemMatrices


@dataclass
class ObservationReduction:
    """Precomputed GLS projection onto the column space of a static loading."""

    loading: np.ndarray      # (p, k) original loading L
    noise_var: np.ndarray    # (p,) diagonal of the full noise covariance
    projector: np.ndarray    # (k, p) pseudo-inverse (L'S^-1 L)^-1 L'S^-1
    noise_root: np.ndarray   # (k, k) lower root of the projected noise cov

    @property
    def p(self):
        return self.loading.shape[0]

    @property
    def k(self):
        return self.loading.shape[1]

    def transform(self, y):
        """Project observations, one row per time point."""
        y = np.asarray(y, dtype=float)
        return y @ self.projector.T


def observation_reduction(loading, noise_var):
    """Build the projection for a loading matrix and noise variances."""
    loading = np.asarray(loading, dtype=float)
    noise_var = np.asarray(noise_var, dtype=float)
    if loading.ndim != 2:
        raise DimensionError("loading must be a matrix")
    p, k = loading.shape
    if noise_var.shape != (p,):
        raise DimensionError(f"noise_var must have shape ({p},)")
    if np.any(noise_var <= 0.0):
        raise ReductionRankError("noise variances must be strictly positive")
    if k > p:
        raise ReductionRankError(
            f"loading has more columns ({k}) than rows ({p})"
        )
    weighted = loading / noise_var[:, None]
    gram = symmetrize(loading.T @ weighted)
    try:
        low = scipy.linalg.cholesky(gram, lower=True)
    except scipy.linalg.LinAlgError:
        raise ReductionRankError(
            "loading is numerically rank deficient"
        ) from None
    projector = chol_solve(low, weighted.T)
    cov = chol_solve(low, np.eye(k))
    noise_root = scipy.linalg.cholesky(symmetrize(cov), lower=True)
    return ObservationReduction(
        loading=loading, noise_var=noise_var,
        projector=projector, noise_root=noise_root,
    )


def reduce_model(model, reduction):
    """Model for the projected observations.

    Valid when, at every (t, label, omega), the full model's obs_loading has
    all columns in the column space of reduction.loading and its obs_noise
    satisfies obs_noise @ obs_noise.T == diag(reduction.noise_var). Both hold
    by construction for factor models with static loadings; nothing here can
    check the span condition cheaply, so it is the caller's contract.
    """
    if model.p != reduction.p:
        raise DimensionError(
            f"model has p={model.p}, reduction expects p={reduction.p}"
        )
    proj = reduction.projector
    root = reduction.noise_root

    def provider(t, label, omega):
        mats = model.mats(t, label, omega)
        return SystemMatrices(
            obs_offset=proj @ mats.obs_offset,
            obs_loading=proj @ mats.obs_loading,
            obs_noise=root,
            state_offset=mats.state_offset,
            transition=mats.transition,
            noise_loading=mats.noise_loading,
        )

    return CgssModel(
        n=model.n, p=reduction.k, m=model.m, r=model.r, provider=provider,
        init_mean=model.init_mean, init_cov=model.init_cov, validate=False,
    )
