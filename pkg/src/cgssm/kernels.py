"""Compiled fast paths for structured models.

The component model has far more structure than a general CgssModel: the
observation side is time-invariant, the transition matrix and offsets carry
no label dependence, and the label only swaps the diagonal of the state
noise loading. StructuredModel captures exactly that shape as plain arrays,
and the numba kernels below run the filter, the backward cache, the label
sweep, the coefficient summary, and the smoother on it without Python
overhead. Every kernel mirrors its generic counterpart in kalman.py /
indicators.py line for line; the equivalence tests hold them to 1e-10.

Kernels return status codes instead of raising: 0 ok, 1/2/4 a Cholesky
failure in the filter / backward pass / future combination (the wrappers
raise SingularInnovationError with the failing time), 3 an all-impossible
label draw (ImpossibleStateError).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from . import dfm
from .errors import DimensionError, ImpossibleStateError, SingularInnovationError
from .kalman import LOG2PI, RegressionSummary
from .reduction import observation_reduction

STATUS_OK = 0
STATUS_FILTER_CHOL = 1
STATUS_BACKWARD_CHOL = 2
STATUS_IMPOSSIBLE = 3
STATUS_COMBINE_CHOL = 4


@dataclass
class StructuredModel:
    """Arrays of a label-switched model with a static observation side."""

    obs_loading: np.ndarray    # (p, m)
    obs_noise_cov: np.ndarray  # (p, p) measurement noise covariance
    state_offset: np.ndarray   # (n, m)
    transition: np.ndarray     # (m, m)
    noise_sd: np.ndarray       # (S, m) state noise diagonal per label
    init_mean: np.ndarray      # (m,)
    init_cov: np.ndarray       # (m, m)
    log_label_prior: np.ndarray  # (S,)

    def __post_init__(self):
        for name in ("obs_loading", "obs_noise_cov", "state_offset",
                     "transition", "noise_sd", "init_mean", "init_cov",
                     "log_label_prior"):
            setattr(self, name, np.ascontiguousarray(
                getattr(self, name), dtype=np.float64))

    @property
    def n(self):
        return self.state_offset.shape[0]

    @property
    def p(self):
        return self.obs_loading.shape[0]

    @property
    def m(self):
        return self.obs_loading.shape[1]

    @property
    def n_labels(self):
        return self.noise_sd.shape[0]


def structured_from_dfm(spec, params_list, loading, obs_noise_sd, coef=None,
                        reduction=None):
    """StructuredModel of the component model, optionally projected.

    With a reduction, the observation equation is premultiplied by its
    projector, shrinking p to the number of components.
    """
    k = spec.n_components
    loading = np.asarray(loading, dtype=float)
    obs_noise_sd = np.asarray(obs_noise_sd, dtype=float)
    obs_loading = loading @ dfm.factor_selector(k)
    obs_noise_cov = np.diag(obs_noise_sd ** 2)
    if reduction is not None:
        obs_loading = reduction.projector @ obs_loading
        obs_noise_cov = reduction.noise_root @ reduction.noise_root.T
    if coef is None:
        offsets = np.zeros((spec.n, spec.m))
        init_mean = np.zeros(spec.m)
    else:
        loadings, init_loading = dfm.regression_design(spec, params_list)
        offsets = loadings @ coef
        init_mean = init_loading @ coef
    logp = np.array([dfm.indicator_prior(spec).log_prior(0, s, None)
                     for s in range(spec.n_labels)])
    return StructuredModel(
        obs_loading=obs_loading,
        obs_noise_cov=obs_noise_cov,
        state_offset=offsets,
        transition=transition_of(params_list),
        noise_sd=dfm.noise_diag_table(params_list),
        init_mean=init_mean,
        init_cov=dfm.initial_cov(spec, params_list),
        log_label_prior=logp,
    )


def transition_of(params_list):
    return dfm.transition_matrix(params_list)


def reduction_for(loading, obs_noise_sd):
    """GLS projection of a panel onto the component space."""
    return observation_reduction(loading, np.asarray(obs_noise_sd) ** 2)


# ---------------------------------------------------------------------------
# numba primitives


@njit(cache=True)
def _chol(a):
    """Plain lower Cholesky; ok=False on a nonpositive pivot."""
    k = a.shape[0]
    low = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1):
            s = a[i, j]
            for l in range(j):
                s -= low[i, l] * low[j, l]
            if i == j:
                if s <= 0.0:
                    return low, False
                low[i, i] = np.sqrt(s)
            else:
                low[i, j] = s / low[j, j]
    return low, True


@njit(cache=True)
def _chol_jitter(a):
    """Cholesky with a single diagonal-jitter rescue, as chol_lower does."""
    low, ok = _chol(a)
    if ok:
        return low, True
    k = a.shape[0]
    tr = 0.0
    for i in range(k):
        tr += a[i, i]
    eps = 1e-10 * tr / k if k else 0.0
    if eps <= 0.0:
        return low, False
    b = a.copy()
    for i in range(k):
        b[i, i] += eps
    return _chol(b)


@njit(cache=True)
def _solve_low_vec(low, b):
    k = b.shape[0]
    x = b.copy()
    for i in range(k):
        s = x[i]
        for j in range(i):
            s -= low[i, j] * x[j]
        x[i] = s / low[i, i]
    return x


@njit(cache=True)
def _solve_lowt_vec(low, b):
    k = b.shape[0]
    x = b.copy()
    for i in range(k - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, k):
            s -= low[j, i] * x[j]
        x[i] = s / low[i, i]
    return x


@njit(cache=True)
def _solve_low_mat(low, b):
    k, q = b.shape
    x = b.copy()
    for col in range(q):
        for i in range(k):
            s = x[i, col]
            for j in range(i):
                s -= low[i, j] * x[j, col]
            x[i, col] = s / low[i, i]
    return x


@njit(cache=True)
def _solve_lowt_mat(low, b):
    k, q = b.shape
    x = b.copy()
    for col in range(q):
        for i in range(k - 1, -1, -1):
            s = x[i, col]
            for j in range(i + 1, k):
                s -= low[j, i] * x[j, col]
            x[i, col] = s / low[i, i]
    return x


@njit(cache=True)
def _chol_solve_vec(low, b):
    return _solve_lowt_vec(low, _solve_low_vec(low, b))


@njit(cache=True)
def _chol_solve_mat(low, b):
    return _solve_lowt_mat(low, _solve_low_mat(low, b))


@njit(cache=True)
def _logdet(low):
    out = 0.0
    for i in range(low.shape[0]):
        out += np.log(low[i, i])
    return 2.0 * out


@njit(cache=True)
def _symmetrize(a):
    k = a.shape[0]
    for i in range(k):
        for j in range(i):
            v = 0.5 * (a[i, j] + a[j, i])
            a[i, j] = v
            a[j, i] = v
    return a


@njit(cache=True)
def _filter_one(state_filt, cov_filt, offset, trans, gdiag, hmat, rcov, y_t,
                first):
    """One filter step; returns the new moments and the loglik term.

    For first=True the passed (state_filt, cov_filt) are the initial state
    moments and the predict half is skipped.
    """
    m = trans.shape[0]
    p = hmat.shape[0]
    if first:
        state_pred = state_filt.copy()
        cov_pred = cov_filt.copy()
    else:
        state_pred = offset + trans @ state_filt
        cov_pred = _symmetrize(trans @ cov_filt @ trans.T)
        for i in range(m):
            cov_pred[i, i] += gdiag[i] * gdiag[i]
    innovation = y_t - hmat @ state_pred
    hv = hmat @ cov_pred
    r = hv @ hmat.T + rcov
    low, ok = _chol_jitter(r)
    if not ok:
        return (state_pred, cov_pred, state_pred, cov_pred, 0.0, low,
                np.zeros((p, m)), innovation, False)
    gain = _chol_solve_mat(low, hv)
    new_filt = state_pred + gain.T @ innovation
    new_cov = _symmetrize(cov_pred - hv.T @ gain)
    white = _solve_low_vec(low, innovation)
    ll = -0.5 * (p * LOG2PI + _logdet(low) + white @ white)
    return (state_pred, cov_pred, new_filt, new_cov, ll, low, gain,
            innovation, True)


@njit(cache=True)
def _backward_one(quad_next, lin_next, log_norm_next, offset, trans, gdiag,
                  hmat, rcov, y_next):
    """One backward step of the future-density recursion (see indicators)."""
    m = trans.shape[0]
    p = hmat.shape[0]
    j = hmat * gdiag            # H_next Gamma, (p, m)
    r = j @ j.T + rcov
    low_r, ok = _chol_jitter(r)
    if not ok:
        return quad_next, lin_next, 0.0, False
    d = y_next - hmat @ offset
    rinv_j = _chol_solve_mat(low_r, j)
    bt = gdiag.reshape(m, 1) * rinv_j.T     # Gamma J' R^{-1}, (m, p)
    e = np.eye(m) - bt @ hmat
    amat = e @ trans
    a = e @ offset + bt @ y_next
    # factor of Gamma (I - J'R^{-1}J) Gamma via the inner matrix
    inner = np.eye(m) - j.T @ rinv_j
    low_m, ok = _chol_jitter(inner)
    if not ok:
        return quad_next, lin_next, 0.0, False
    c = gdiag.reshape(m, 1) * low_m
    dmat = np.eye(m) + c.T @ quad_next @ c
    low_d, ok = _chol_jitter(dmat)
    if not ok:
        return quad_next, lin_next, 0.0, False
    u = c @ _chol_solve_mat(low_d, c.T)
    hf = hmat @ trans
    rinv_hf = _chol_solve_mat(low_r, hf)
    shrunk = _symmetrize(quad_next - quad_next @ u @ quad_next)
    quad = _symmetrize(hf.T @ rinv_hf + amat.T @ shrunk @ amat)
    rinv_d = _chol_solve_vec(low_r, d)
    resid = lin_next - quad_next @ a
    lin = hf.T @ rinv_d + amat.T @ (resid - quad_next @ (u @ resid))
    inc = (
        -0.5 * p * LOG2PI
        - 0.5 * _logdet(low_r)
        - 0.5 * _logdet(low_d)
        - 0.5 * (d @ rinv_d)
        - 0.5 * (a @ (quad_next @ a) - 2.0 * (lin_next @ a))
        + 0.5 * (resid @ (u @ resid))
    )
    return quad, lin, log_norm_next + inc, True


@njit(cache=True)
def _future_value(quad, lin, log_norm, state_filt, tfac):
    """Future-data loglik given filtered moments; tfac factors cov_filt."""
    z = np.eye(tfac.shape[1]) + tfac.T @ quad @ tfac
    low_z, ok = _chol_jitter(z)
    if not ok:
        return 0.0, False
    off = lin - quad @ state_filt
    s = tfac.T @ off
    val = (
        -0.5 * _logdet(low_z)
        - 0.5 * (state_filt @ (quad @ state_filt - 2.0 * lin))
        + 0.5 * (s @ _chol_solve_vec(low_z, s))
    )
    return val + log_norm, True


@njit(cache=True)
def _filter_pass(hmat, rcov, offsets, trans, noise_sd, labels, init_mean,
                 init_cov, y, want_store):
    """Filter the whole sample; optionally store the p-sized quantities.

    Returns (status, fail_t, loglik, state_pred, cov_pred, state_filt,
    cov_filt, innovations, innovation_chol, gains, base_const). With
    want_store=False the last three are 1-length dummies.
    """
    n, p = y.shape
    m = trans.shape[0]
    state_pred = np.zeros((n, m))
    cov_pred = np.zeros((n, m, m))
    state_filt = np.zeros((n, m))
    cov_filt = np.zeros((n, m, m))
    ns = n if want_store else 1
    innovations = np.zeros((ns, p))
    chols = np.zeros((ns, p, p))
    gains = np.zeros((ns, p, m))
    loglik = 0.0
    base_const = 0.0
    sf = init_mean
    cf = init_cov
    for t in range(n):
        off = offsets[t - 1] if t > 0 else offsets[0]
        g = noise_sd[labels[t - 1]] if t > 0 else noise_sd[0]
        sp, cp, sf, cf, ll, low, gain, innovation, ok = _filter_one(
            sf, cf, off, trans, g, hmat, rcov, y[t], t == 0)
        if not ok:
            return (STATUS_FILTER_CHOL, t, 0.0, state_pred, cov_pred,
                    state_filt, cov_filt, innovations, chols, gains, 0.0)
        state_pred[t] = sp
        cov_pred[t] = cp
        state_filt[t] = sf
        cov_filt[t] = cf
        loglik += ll
        base_const += -0.5 * (p * LOG2PI + _logdet(low))
        if want_store:
            innovations[t] = innovation
            chols[t] = low
            gains[t] = gain
    return (STATUS_OK, -1, loglik, state_pred, cov_pred, state_filt,
            cov_filt, innovations, chols, gains, base_const)


@njit(cache=True)
def _backward_cache(hmat, rcov, offsets, trans, noise_sd, labels, y):
    """Future-density coefficients under the current labels."""
    n, p = y.shape
    m = trans.shape[0]
    quad = np.zeros((n, m, m))
    lin = np.zeros((n, m))
    log_norm = np.zeros(n)
    for t in range(n - 2, -1, -1):
        q, l, c, ok = _backward_one(
            quad[t + 1], lin[t + 1], log_norm[t + 1],
            offsets[t], trans, noise_sd[labels[t]], hmat, rcov, y[t + 1])
        if not ok:
            return quad, lin, log_norm, STATUS_BACKWARD_CHOL, t + 1
        quad[t] = q
        lin[t] = l
        log_norm[t] = c
    return quad, lin, log_norm, STATUS_OK, -1


@njit(cache=True)
def _sweep(hmat, rcov, offsets, trans, noise_sd, log_prior, init_mean,
           init_cov, y, labels, uniforms, collect_pmf, freeze):
    """One Gibbs sweep over the labels, mirroring sample_indicators.

    The observation side carries no label dependence here, so the filter
    step at t is shared by all candidates; only the backward step out of t
    differs. labels is updated in place unless freeze is set.
    """
    n, p = y.shape
    m = trans.shape[0]
    n_labels = noise_sd.shape[0]
    pmfs = np.zeros((n if collect_pmf else 1, n_labels))
    quad, lin, log_norm, status, fail_t = _backward_cache(
        hmat, rcov, offsets, trans, noise_sd, labels, y)
    if status != STATUS_OK:
        return pmfs, status, fail_t
    sf = init_mean
    cf = init_cov
    logw = np.zeros(n_labels)
    for t in range(n):
        off = offsets[t - 1] if t > 0 else offsets[0]
        g = noise_sd[labels[t - 1]] if t > 0 else noise_sd[0]
        sp, cp, sf, cf, ll, low, gain, innovation, ok = _filter_one(
            sf, cf, off, trans, g, hmat, rcov, y[t], t == 0)
        if not ok:
            return pmfs, STATUS_FILTER_CHOL, t
        if t + 1 < n:
            tfac, ok = _chol_jitter(cf)
            if not ok:
                return pmfs, STATUS_COMBINE_CHOL, t
            for cand in range(n_labels):
                q, l, c, ok = _backward_one(
                    quad[t + 1], lin[t + 1], log_norm[t + 1],
                    offsets[t], trans, noise_sd[cand], hmat, rcov, y[t + 1])
                if not ok:
                    return pmfs, STATUS_BACKWARD_CHOL, t + 1
                fut, ok = _future_value(q, l, c, sf, tfac)
                if not ok:
                    return pmfs, STATUS_COMBINE_CHOL, t
                logw[cand] = ll + fut + log_prior[cand]
        else:
            for cand in range(n_labels):
                logw[cand] = ll + log_prior[cand]
        top = logw[0]
        for cand in range(1, n_labels):
            if logw[cand] > top:
                top = logw[cand]
        if not np.isfinite(top):
            return pmfs, STATUS_IMPOSSIBLE, t
        total = 0.0
        w = np.empty(n_labels)
        for cand in range(n_labels):
            w[cand] = np.exp(logw[cand] - top)
            total += w[cand]
        for cand in range(n_labels):
            w[cand] /= total
        if collect_pmf:
            pmfs[t] = w
        if freeze:
            choice = labels[t]
        else:
            u = uniforms[t]
            acc = 0.0
            choice = n_labels - 1
            for cand in range(n_labels):
                acc += w[cand]
                if acc >= u:
                    choice = cand
                    break
        labels[t] = choice
    return pmfs, STATUS_OK, -1


@njit(cache=True)
def _design_pass(hmat, trans, loadings, init_loading, gains, chols,
                 innovations):
    """Whitened regression cross products, mirroring regression_summary."""
    n, p = innovations.shape
    m, q = init_loading.shape
    gram = np.zeros((q, q))
    xty = np.zeros(q)
    ssq = 0.0
    resp = np.zeros((m, q))
    for t in range(n):
        if t == 0:
            pred = init_loading.copy()
        else:
            pred = loadings[t - 1] + trans @ resp
        design = hmat @ pred
        resp = pred - gains[t].T @ design
        white_x = _solve_low_mat(chols[t], design)
        white_e = _solve_low_vec(chols[t], innovations[t])
        gram += white_x.T @ white_x
        xty += white_x.T @ white_e
        ssq += white_e @ white_e
    return gram, xty, ssq


@njit(cache=True)
def _smoother_mean(hmat, trans, state_pred, cov_pred, gains, chols,
                   innovations):
    """Backward innovation recursion for E(x | all data)."""
    n, p = innovations.shape
    m = trans.shape[0]
    out = np.empty((n, m))
    radj = np.zeros(m)
    eye = np.eye(m)
    for t in range(n - 1, -1, -1):
        u = _chol_solve_vec(chols[t], innovations[t])
        if t == n - 1:
            radj = hmat.T @ u
        else:
            lmat = trans @ (eye - gains[t].T @ hmat)
            radj = hmat.T @ u + lmat.T @ radj
        out[t] = state_pred[t] + cov_pred[t] @ radj
    return out


# ---------------------------------------------------------------------------
# python wrappers


def _raise_for(status, fail_t):
    if status == STATUS_OK:
        return
    if status == STATUS_IMPOSSIBLE:
        raise ImpossibleStateError(int(fail_t))
    where = {
        STATUS_FILTER_CHOL: "innovation",
        STATUS_BACKWARD_CHOL: "backward recursion",
        STATUS_COMBINE_CHOL: "future combination",
    }[status]
    raise SingularInnovationError(int(fail_t), where)


def _check(sm, labels, y):
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (sm.n, sm.p):
        raise DimensionError(
            f"observations shape {y.shape}, expected {(sm.n, sm.p)}")
    if labels.shape != (sm.n,):
        raise DimensionError("label vector length mismatch")
    if labels.min() < 0 or labels.max() >= sm.n_labels:
        raise DimensionError("label out of range")
    return labels, y


def filter_loglik_structured(sm, labels, y):
    """log p(y | labels) on a structured model."""
    labels, y = _check(sm, labels, y)
    out = _filter_pass(sm.obs_loading, sm.obs_noise_cov, sm.state_offset,
                       sm.transition, sm.noise_sd, labels, sm.init_mean,
                       sm.init_cov, y, False)
    _raise_for(out[0], out[1])
    return float(out[2])


def filter_moments_structured(sm, labels, y):
    """Full filter pass with stored innovations, factors, and gains."""
    labels, y = _check(sm, labels, y)
    out = _filter_pass(sm.obs_loading, sm.obs_noise_cov, sm.state_offset,
                       sm.transition, sm.noise_sd, labels, sm.init_mean,
                       sm.init_cov, y, True)
    _raise_for(out[0], out[1])
    return out


def sweep_structured(sm, labels, y, rng=None, collect_pmf=False,
                     freeze=False):
    """One label sweep; returns (labels, pmfs or None)."""
    labels, y = _check(sm, labels, y)
    labels = labels.copy()
    if freeze:
        uniforms = np.zeros(sm.n)
    else:
        rng = np.random.default_rng(rng)
        uniforms = rng.random(sm.n)
    pmfs, status, fail_t = _sweep(
        sm.obs_loading, sm.obs_noise_cov, sm.state_offset, sm.transition,
        sm.noise_sd, sm.log_label_prior, sm.init_mean, sm.init_cov, y,
        labels, uniforms, collect_pmf, freeze)
    _raise_for(status, fail_t)
    return labels, (pmfs if collect_pmf else None)


def smoothed_mean_structured(sm, labels, y, moments=None):
    if moments is None:
        moments = filter_moments_structured(sm, labels, y)
    (_, _, _, state_pred, cov_pred, _, _, innovations, chols, gains,
     _) = moments
    return _smoother_mean(sm.obs_loading, sm.transition, state_pred,
                          cov_pred, gains, chols, innovations)


def regression_summary_structured(sm, loadings, init_loading, labels, y):
    """RegressionSummary for coefficient loadings on the state offsets."""
    labels, y = _check(sm, labels, y)
    loadings = np.ascontiguousarray(loadings, dtype=np.float64)
    init_loading = np.ascontiguousarray(init_loading, dtype=np.float64)
    moments = filter_moments_structured(sm, labels, y)
    (_, _, _, _, _, _, _, innovations, chols, gains, base_const) = moments
    gram, xty, ssq = _design_pass(sm.obs_loading, sm.transition, loadings,
                                  init_loading, gains, chols, innovations)
    return RegressionSummary(gram=gram, xty=xty, ssq=float(ssq),
                             base_const=float(base_const), states=None)


def simulate_structured(sm, labels, rng):
    """Draw (y, x) from the structured model under the given labels."""
    rng = np.random.default_rng(rng)
    n, p, m = sm.n, sm.p, sm.m
    labels = np.asarray(labels, dtype=np.int64)
    low0, ok = _chol_jitter(sm.init_cov)
    if not ok:
        raise SingularInnovationError(0, "initial covariance")
    low_obs, ok = _chol_jitter(sm.obs_noise_cov)
    if not ok:
        raise SingularInnovationError(0, "measurement noise")
    x = np.empty((n, m))
    y = np.empty((n, p))
    x[0] = sm.init_mean + low0 @ rng.standard_normal(m)
    for t in range(n):
        y[t] = sm.obs_loading @ x[t] + low_obs @ rng.standard_normal(p)
        if t + 1 < n:
            x[t + 1] = (sm.state_offset[t] + sm.transition @ x[t]
                        + sm.noise_sd[labels[t]] * rng.standard_normal(m))
    return y, x


def simulation_smoother_structured(sm, labels, y, rng):
    """Exact draw from p(x | y, labels) by mean correction."""
    rng = np.random.default_rng(rng)
    y_syn, x_syn = simulate_structured(sm, labels, rng)
    return (smoothed_mean_structured(sm, labels, y) + x_syn
            - smoothed_mean_structured(sm, labels, y_syn))


def shift_for_coef(sm, loadings, init_loading, coef):
    """New StructuredModel with the coefficient effect folded in."""
    return StructuredModel(
        obs_loading=sm.obs_loading,
        obs_noise_cov=sm.obs_noise_cov,
        state_offset=sm.state_offset + loadings @ coef,
        transition=sm.transition,
        noise_sd=sm.noise_sd,
        init_mean=sm.init_mean + init_loading @ coef,
        init_cov=sm.init_cov,
        log_label_prior=sm.log_label_prior,
    )
