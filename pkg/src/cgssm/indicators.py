"""Gibbs sampling of per-time indicator labels without state conditioning.

The sampler needs, at every t and for every candidate label, the density of
all future data given the filtered present. That density is Gaussian in the
current state, so a single backward pass stores its quadratic coefficients:

    log p(y[t+1:] | x_t, labels) = log_norm[t] - 0.5 (x_t' quad[t] x_t
                                                      - 2 lin[t] @ x_t)

Unlike the filter, the t entry of the cache depends on the label AT t (the
transition out of t carries it), so the per-candidate evaluation at t redoes
exactly one backward step from the cached t+1 entry. Entries at t+1 and later
depend only on labels the sweep has not yet reached, which is what makes the
per-time draw an exact conditional.

All constants are tracked, not dropped: for every t and any labels,

    sum(loglik[: t + 1]) + future_loglik(cache entry t, filter entry t)

equals the complete-data log likelihood. Tests lean on this identity.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionError, ImpossibleStateError
from .kalman import LOG2PI, filter_step
from .linalg import chol_lower, chol_solve, logdet_from_chol, psd_factor, symmetrize
from .ssm import IndicatorSequence


@dataclass
class IndicatorPrior:
    """Conditional prior over labels: log_prior(t, label, labels) -> float.

    labels is the full current label vector; an independent-across-time prior
    ignores it. size is the number of candidate labels (label 0 = no break).
    """

    size: int
    log_prior: Callable[[int, int, np.ndarray], float]


def iid_prior(probs):
    """Time-independent prior from a probability vector over labels."""
    probs = np.asarray(probs, dtype=float)
    if abs(probs.sum() - 1.0) > 1e-12 or np.any(probs < 0.0):
        raise ValueError("label probabilities must be a distribution")
    with np.errstate(divide="ignore"):
        logp = np.log(probs)

    def log_prior(t, label, labels):
        return float(logp[label])

    return IndicatorPrior(size=probs.size, log_prior=log_prior)


@dataclass
class BackwardCache:
    """Quadratic form of the future-data density in the current state."""

    quad: np.ndarray       # (n, m, m), quad[n-1] = 0
    lin: np.ndarray        # (n, m),   lin[n-1] = 0
    log_norm: np.ndarray   # (n,) accumulated state-free log constants


def backward_step(quad_next, lin_next, log_norm_next, trans, obs, y_next, t=0):
    """One step of the backward recursion, from t+1 down to t.

    trans holds the system matrices at t (transition t -> t+1, possibly
    label-dependent), obs the observation matrices at t+1, y_next the data
    at t+1. Returns (quad, lin, log_norm) at t.
    """
    m = trans.transition.shape[0]
    gam = trans.noise_loading
    h_next = obs.obs_loading
    j = h_next @ gam                                       # (p, r)
    r = j @ j.T + obs.obs_noise @ obs.obs_noise.T
    low_r = chol_lower(r, t + 1)
    d = y_next - obs.obs_offset - h_next @ trans.state_offset
    rinv_j = chol_solve(low_r, j)                          # (p, r)
    bt = gam @ rinv_j.T                                    # (m, p)
    e = np.eye(m) - bt @ h_next
    amat = e @ trans.transition
    a = e @ trans.state_offset + bt @ (y_next - obs.obs_offset)
    n_cond = symmetrize(gam @ (np.eye(gam.shape[1]) - j.T @ rinv_j) @ gam.T)
    c = psd_factor(n_cond)                                 # (m, rank)
    dmat = np.eye(c.shape[1]) + c.T @ quad_next @ c
    low_d = chol_lower(dmat, t + 1, "backward conditional scale")
    u = c @ chol_solve(low_d, c.T)                         # (m, m)
    hf = h_next @ trans.transition                         # (p, m)
    rinv_hf = chol_solve(low_r, hf)
    shrunk = symmetrize(quad_next - quad_next @ u @ quad_next)
    quad = symmetrize(hf.T @ rinv_hf + amat.T @ shrunk @ amat)
    rinv_d = chol_solve(low_r, d)
    resid = lin_next - quad_next @ a
    lin = hf.T @ rinv_d + amat.T @ (resid - quad_next @ (u @ resid))
    w0 = -resid
    inc = (
        -0.5 * d.size * LOG2PI
        - 0.5 * logdet_from_chol(low_r)
        - 0.5 * logdet_from_chol(low_d)
        - 0.5 * (d @ rinv_d)
        - 0.5 * (a @ (quad_next @ a) - 2.0 * (lin_next @ a))
        + 0.5 * (w0 @ (u @ w0))
    )
    return quad, lin, log_norm_next + float(inc)


def backward_pass(model, indicators, omega, y):
    """Cache the future-data density coefficients for the current labels."""
    y = np.asarray(y, dtype=float)
    n, m = model.n, model.m
    quad = np.zeros((n, m, m))
    lin = np.zeros((n, m))
    log_norm = np.zeros(n)
    for t in range(n - 2, -1, -1):
        trans = model.mats(t, int(indicators.labels[t]), omega)
        obs = model.mats(t + 1, int(indicators.labels[t + 1]), omega)
        quad[t], lin[t], log_norm[t] = backward_step(
            quad[t + 1], lin[t + 1], log_norm[t + 1], trans, obs, y[t + 1], t
        )
    return BackwardCache(quad=quad, lin=lin, log_norm=log_norm)


def future_loglik(quad, lin, state_filt, cov_filt, log_norm=0.0):
    """log p(future data | data so far) from one cache and one filter entry.

    Integrates the future-data density against N(state_filt, cov_filt).
    With quad = lin = 0 and log_norm = 0 this is exactly 0 (empty future).
    """
    tfac = psd_factor(cov_filt)
    z = np.eye(tfac.shape[1]) + tfac.T @ quad @ tfac
    low_z = chol_lower(z, what="future combination")
    offset = lin - quad @ state_filt
    s = tfac.T @ offset
    val = (
        -0.5 * logdet_from_chol(low_z)
        - 0.5 * (state_filt @ (quad @ state_filt - 2.0 * lin))
        + 0.5 * (s @ chol_solve(low_z, s))
    )
    return float(val + log_norm)


def sample_indicators(model, prior, omega, y, current, rng=None,
                      collect_pmf=False, freeze=False):
    """One Gibbs sweep over all indicator labels.

    For each t the candidate weight combines the one-step predictive density
    of y[t], the integrated future-data density, and the conditional prior.
    With freeze=True no draws are made (labels keep their current values) and
    the per-time conditional pmfs are simply evaluated, which is the hook the
    exactness tests use. Returns the new IndicatorSequence, plus the (n, S)
    pmf array when collect_pmf is set.
    """
    y = np.asarray(y, dtype=float)
    n = model.n
    size = prior.size
    if current.size != size:
        raise DimensionError("prior and indicator support sizes differ")
    if not freeze:
        rng = np.random.default_rng(rng)
    labels = current.labels.copy()
    pmfs = np.zeros((n, size)) if collect_pmf else None
    cache = backward_pass(model, current, omega, y)
    prev_state = None
    prev_trans = None
    init = (model.init_mean, model.init_cov)
    for t in range(n):
        logw = np.full(size, -np.inf)
        states = [None] * size
        mats_all = [None] * size
        obs_next = (
            model.mats(t + 1, int(labels[t + 1]), omega) if t + 1 < n else None
        )
        for cand in range(size):
            mats = model.mats(t, cand, omega)
            mats_all[cand] = mats
            fs = filter_step(prev_state, prev_trans, mats, y[t], t, init=init)
            states[cand] = fs
            if t + 1 < n:
                quad, lin, log_norm = backward_step(
                    cache.quad[t + 1], cache.lin[t + 1], cache.log_norm[t + 1],
                    mats, obs_next, y[t + 1], t,
                )
                fut = future_loglik(quad, lin, fs.state_filt, fs.cov_filt,
                                    log_norm)
            else:
                fut = 0.0
            logw[cand] = fs.loglik + fut + prior.log_prior(t, cand, labels)
        top = logw.max()
        if not np.isfinite(top):
            raise ImpossibleStateError(t)
        w = np.exp(logw - top)
        w /= w.sum()
        if collect_pmf:
            pmfs[t] = w
        if freeze:
            choice = int(labels[t])
        else:
            choice = int(np.searchsorted(np.cumsum(w), rng.random()))
            choice = min(choice, size - 1)
        labels[t] = choice
        prev_state = states[choice]
        prev_trans = mats_all[choice]
    out = IndicatorSequence(labels, current.support)
    if collect_pmf:
        return out, pmfs
    return out
