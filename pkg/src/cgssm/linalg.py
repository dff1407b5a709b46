"""Small dense linear algebra helpers shared by the filtering code."""

import numpy as np
import scipy.linalg

from .errors import SingularInnovationError

# Relative eigenvalue cutoff for rank-revealing PSD square roots.
PSD_RTOL = 1e-12
# One-shot diagonal jitter applied before declaring a covariance singular.
JITTER_REL = 1e-10


def symmetrize(a):
    return 0.5 * (a + a.T)


def psd_factor(a, rtol=PSD_RTOL):
    """Factor a symmetric PSD matrix as T @ T.T, dropping null directions.

    Eigenvalues below rtol * max(eigenvalue, 0) are treated as exact zeros,
    so T may have fewer columns than a has rows. Small negative eigenvalues
    from roundoff are clipped.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    w, v = np.linalg.eigh(a)
    top = max(w[-1], 0.0)
    keep = w > rtol * top if top > 0.0 else np.zeros(w.shape, dtype=bool)
    return v[:, keep] * np.sqrt(w[keep])


def chol_lower(r, t=0, what="innovation covariance"):
    """Lower Cholesky factor of r with the jitter-once-then-fail policy.

    On failure adds JITTER_REL * trace(r)/dim to the diagonal and retries a
    single time; a second failure raises SingularInnovationError carrying t.
    """
    r = symmetrize(np.asarray(r, dtype=float))
    try:
        return np.linalg.cholesky(r)
    except np.linalg.LinAlgError:
        pass
    dim = r.shape[0]
    bump = JITTER_REL * np.trace(r) / max(dim, 1)
    if bump <= 0.0:
        raise SingularInnovationError(t, what)
    try:
        return np.linalg.cholesky(r + bump * np.eye(dim))
    except np.linalg.LinAlgError:
        raise SingularInnovationError(t, what) from None


def chol_solve(low, b):
    """Solve (L L') x = b given the lower factor."""
    y = scipy.linalg.solve_triangular(low, b, lower=True)
    return scipy.linalg.solve_triangular(low.T, y, lower=False)


def logdet_from_chol(low):
    return 2.0 * np.sum(np.log(np.diag(low)))
