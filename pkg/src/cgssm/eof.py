"""Empirical orthogonal functions: a fixed loading basis from the data.

Each series is centered over time and the leading right-singular vectors
of the centered matrix become the basis columns. Retention keeps the
largest k <= k_max whose k-th variance share still clears the threshold.
Covariance-based by default (the series share units); correlation-based
available via `standardize`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBasisError, DimensionError


@dataclass(frozen=True)
class EofBasis:
    theta: np.ndarray       # (p, k) orthonormal columns
    explained: np.ndarray   # (k,) non-increasing variance fractions
    col_means: np.ndarray   # (p,) temporal means removed before the SVD
    col_scales: np.ndarray  # (p,) divisors (ones unless standardized)


def compute_eof(data, threshold=0.01, k_max=None, standardize=False):
    """Basis of leading spatial patterns of an n x p panel.

    The Gram-matrix route (n x n eigenproblem, loadings by projection)
    kicks in when p is much larger than n.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionError("data must be an n x p matrix")
    n, p = data.shape
    if n < 2 or p < 1:
        raise DimensionError("need at least two rows and one column")
    if not np.all(np.isfinite(data)):
        raise DegenerateBasisError("data contains non-finite values")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    k_cap = min(n, p) if k_max is None else min(int(k_max), n, p)
    if k_cap < 1:
        raise ValueError("k_max must be at least 1")

    col_means = data.mean(axis=0)
    centered = data - col_means
    if standardize:
        col_scales = centered.std(axis=0)
        if np.any(col_scales <= 0.0):
            raise DegenerateBasisError("constant series cannot be standardized")
        centered = centered / col_scales
    else:
        col_scales = np.ones(p)

    total = float(np.sum(centered ** 2))
    if total <= 0.0:
        raise DegenerateBasisError("data has zero variance after centering")

    if p > 4 * n:
        # Gram route: eigendecompose the n x n matrix, project for loadings
        gram = centered @ centered.T
        eigval, eigvec = np.linalg.eigh(gram)
        order = np.argsort(eigval)[::-1]
        eigval = np.maximum(eigval[order], 0.0)
        eigvec = eigvec[:, order]
        sing = np.sqrt(eigval)
        keep = sing > sing[0] * 1e-12
        theta_full = centered.T @ (eigvec[:, keep] / sing[keep])
        sing = sing[keep]
    else:
        _, sing, vt = np.linalg.svd(centered, full_matrices=False)
        keep = sing > sing[0] * 1e-12
        sing = sing[keep]
        theta_full = vt[keep].T

    explained_full = sing ** 2 / total
    k_avail = min(k_cap, sing.size)
    k = int(np.sum(explained_full[:k_avail] >= threshold))
    if k == 0:
        raise DegenerateBasisError(
            "no component reaches the variance threshold")

    theta = theta_full[:, :k].copy()
    # sign convention: each column's largest-magnitude entry positive
    for j in range(k):
        pivot = np.argmax(np.abs(theta[:, j]))
        if theta[pivot, j] < 0.0:
            theta[:, j] = -theta[:, j]
    return EofBasis(
        theta=theta,
        explained=explained_full[:k].copy(),
        col_means=col_means,
        col_scales=col_scales,
    )
