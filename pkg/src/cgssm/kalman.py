"""Kalman filtering, smoothing, and state draws for CgssModel.

The filter here is the one-step prediction-error form: at time t it consumes
the transition matrices of t-1 (mapping x[t-1] to x[t]) and the observation
matrices of t. Innovation covariances are factored once per step and reused
for the gain, the log determinant, and the quadratic form.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import ssm
from .errors import DegenerateRegressionError, DimensionError
from .linalg import chol_lower, chol_solve, logdet_from_chol, psd_factor, symmetrize

LOG2PI = float(np.log(2.0 * np.pi))


@dataclass
class FilterState:
    """Filter moments at one time point plus that point's loglik term."""

    t: int
    state_pred: np.ndarray      # E(x_t | y up to t-1)
    cov_pred: np.ndarray
    innovation: np.ndarray
    innovation_chol: np.ndarray  # lower factor of the innovation covariance
    gain: np.ndarray            # R^{-1} H V_pred, shape (p, m)
    state_filt: np.ndarray      # E(x_t | y up to t)
    cov_filt: np.ndarray
    loglik: float               # log p(y_t | y up to t-1)


def filter_step(prev, trans, obs, y_t, t=0, init=None):
    """Advance the filter one step.

    prev is the FilterState at t-1 together with trans, the system matrices
    at t-1 (whose transition block maps t-1 to t). For t=0 pass prev=None and
    init=(mean, cov) of the initial state. obs supplies the observation
    equation at t.
    """
    if prev is None:
        state_pred, cov_pred = init
        state_pred = np.asarray(state_pred, dtype=float)
        cov_pred = np.asarray(cov_pred, dtype=float)
    else:
        state_pred = trans.state_offset + trans.transition @ prev.state_filt
        cov_pred = symmetrize(
            trans.transition @ prev.cov_filt @ trans.transition.T
            + trans.noise_loading @ trans.noise_loading.T
        )
    h = obs.obs_loading
    innovation = y_t - obs.obs_offset - h @ state_pred
    hv = h @ cov_pred
    r = hv @ h.T + obs.obs_noise @ obs.obs_noise.T
    low = chol_lower(r, t)
    gain = chol_solve(low, hv)
    state_filt = state_pred + gain.T @ innovation
    cov_filt = symmetrize(cov_pred - hv.T @ gain)
    white = scipy.linalg.solve_triangular(low, innovation, lower=True)
    loglik = -0.5 * (
        innovation.size * LOG2PI + logdet_from_chol(low) + white @ white
    )
    return FilterState(
        t=t,
        state_pred=state_pred,
        cov_pred=cov_pred,
        innovation=innovation,
        innovation_chol=low,
        gain=gain,
        state_filt=state_filt,
        cov_filt=cov_filt,
        loglik=float(loglik),
    )


def run_filter(model, indicators, omega, y):
    """Full filter pass; returns the list of FilterState, one per time."""
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n, model.p):
        raise DimensionError(f"observations shape {y.shape}, expected {(model.n, model.p)}")
    states = []
    prev = None
    prev_mats = None
    for t in range(model.n):
        mats = model.mats(t, int(indicators.labels[t]), omega)
        prev = filter_step(
            prev, prev_mats, mats, y[t], t, init=(model.init_mean, model.init_cov)
        )
        states.append(prev)
        prev_mats = mats
    return states


def filter_loglik(model, indicators, omega, y):
    """log p(y | indicators, omega); 0.0 for an empty sample."""
    if model.n == 0:
        return 0.0
    return float(sum(s.loglik for s in run_filter(model, indicators, omega, y)))


def smoothed_mean(model, indicators, omega, y, states=None):
    """E(x | all observations) via the backward innovation recursion."""
    if states is None:
        states = run_filter(model, indicators, omega, y)
    n, m = model.n, model.m
    out = np.empty((n, m))
    radj = np.zeros(m)
    for t in range(n - 1, -1, -1):
        st = states[t]
        mats = model.mats(t, int(indicators.labels[t]), omega)
        h = mats.obs_loading
        u = chol_solve(st.innovation_chol, st.innovation)
        if t == n - 1:
            radj = h.T @ u
        else:
            # L = F (I - V_pred H' R^{-1} H); gain.T is V_pred H' R^{-1}
            lmat = mats.transition @ (np.eye(m) - st.gain.T @ h)
            radj = h.T @ u + lmat.T @ radj
        out[t] = st.state_pred + st.cov_pred @ radj
    return out


def simulation_smoother(model, indicators, omega, y, rng):
    """One exact draw from p(x | y, indicators, omega).

    Mean-correction scheme: simulate a synthetic path from the model, smooth
    the real and synthetic data with the same deterministic smoother, and
    shift the synthetic states by the difference of smoothed means.
    """
    rng = np.random.default_rng(rng)
    y_syn, x_syn = ssm.simulate(model, indicators, omega, rng)
    return smoothed_mean(model, indicators, omega, y) + x_syn - smoothed_mean(
        model, indicators, omega, y_syn
    )


@dataclass
class StateRegression:
    """CgssModel whose state equation carries a coefficient vector.

    The full state offset at t is model's state_offset plus loadings[t] @ b
    for an unknown coefficient vector b, and the initial mean gains
    init_loading @ b. The base model holds everything not depending on b.
    """

    model: ssm.CgssModel
    loadings: np.ndarray       # (n, m, q)
    init_loading: np.ndarray   # (m, q)

    @property
    def q(self):
        return self.init_loading.shape[1]

    def shifted_model(self, coef):
        """Base model with the regression effect folded into the offsets."""
        base = self.model
        offs = self.loadings @ coef
        init_mean = base.init_mean + self.init_loading @ coef

        def provider(t, label, omega):
            mats = base.mats(t, label, omega)
            return ssm.SystemMatrices(
                obs_offset=mats.obs_offset,
                obs_loading=mats.obs_loading,
                obs_noise=mats.obs_noise,
                state_offset=mats.state_offset + offs[t],
                transition=mats.transition,
                noise_loading=mats.noise_loading,
            )

        return ssm.CgssModel(
            n=base.n, p=base.p, m=base.m, r=base.r, provider=provider,
            init_mean=init_mean, init_cov=base.init_cov, validate=False,
        )


@dataclass
class RegressionSummary:
    """Sufficient statistics of the coefficient vector given the data.

    Innovations are linear in the coefficients, so one filter pass on the
    data plus one mean-only pass per coefficient direction turn the state
    space likelihood into an ordinary Gaussian regression on the whitened
    innovations: loglik(b) = base_const - 0.5 * (ssq - 2 b'xty + b'gram b).
    """

    gram: np.ndarray        # (q, q) whitened cross products
    xty: np.ndarray         # (q,)
    ssq: float              # whitened sum of squares at b = 0
    base_const: float       # sum of -p/2 log 2pi - 0.5 log det R_t
    states: list            # FilterStates of the b = 0 pass


def regression_summary(reg, indicators, omega, y):
    """Filter passes reducing the coefficient likelihood to a Gaussian form."""
    model = reg.model
    n, q = model.n, reg.q
    states = run_filter(model, indicators, omega, y)
    # Mean responses of predicted states to each unit coefficient direction.
    # Covariances (and hence gains) are shared with the base pass.
    resp = np.zeros((model.m, q))
    design = np.empty((n, model.p, q))
    gram = np.zeros((q, q))
    xty = np.zeros(q)
    ssq = 0.0
    base_const = 0.0
    prev_mats = None
    for t in range(n):
        st = states[t]
        mats = model.mats(t, int(indicators.labels[t]), omega)
        if t == 0:
            pred = reg.init_loading.copy()
        else:
            pred = reg.loadings[t - 1] + prev_mats.transition @ resp
        design[t] = mats.obs_loading @ pred
        resp = pred - st.gain.T @ design[t]
        low = st.innovation_chol
        white_e = scipy.linalg.solve_triangular(low, st.innovation, lower=True)
        white_x = scipy.linalg.solve_triangular(low, design[t], lower=True)
        gram += white_x.T @ white_x
        xty += white_x.T @ white_e
        ssq += white_e @ white_e
        base_const += -0.5 * (model.p * LOG2PI + logdet_from_chol(low))
        prev_mats = mats
    return RegressionSummary(gram=gram, xty=xty, ssq=ssq,
                             base_const=float(base_const), states=states)


def coef_posterior(summary, prior_var, include=None):
    """Gaussian posterior of the included coefficients, plus the marginal
    log likelihood of the data with those coefficients integrated out."""
    q = summary.xty.size
    if include is None:
        include = np.ones(q, dtype=bool)
    include = np.asarray(include, dtype=bool)
    idx = np.flatnonzero(include)
    pv = np.broadcast_to(np.asarray(prior_var, dtype=float), (q,))[idx]
    gram = summary.gram[np.ix_(idx, idx)]
    prec = gram + np.diag(np.where(np.isinf(pv), 0.0, 1.0 / pv))
    try:
        low = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise DegenerateRegressionError(
            "coefficient posterior precision is singular"
        ) from None
    mean = chol_solve(low, summary.xty[idx])
    # log det(prior_cov @ prec); infinite prior variance has no proper
    # marginal, only the posterior is defined then
    if np.any(np.isinf(pv)):
        log_ml = None
    else:
        log_ml = (
            summary.base_const
            - 0.5 * (summary.ssq - summary.xty[idx] @ mean)
            - 0.5 * (np.sum(np.log(pv)) + logdet_from_chol(low))
        )
    return idx, mean, low, log_ml


def coef_marginal_loglik(summary, prior_var, include=None):
    """log p(y) with the included coefficients integrated over their prior."""
    _, _, _, log_ml = coef_posterior(summary, prior_var, include)
    if log_ml is None:
        raise DegenerateRegressionError("marginal undefined for improper prior")
    return float(log_ml)


def joint_state_beta_draw(reg, indicators, omega, y, prior_var, rng,
                          include=None, summary=None):
    """Exact joint draw of (x, b): b marginal of the state, then x given b.

    prior_var holds the prior variances of the q coefficients; entries of
    `include` set to False pin the matching coefficient to zero. Returns
    (x, b) with b of full length q (zeros where excluded).
    """
    rng = np.random.default_rng(rng)
    if summary is None:
        summary = regression_summary(reg, indicators, omega, y)
    idx, mean, low, _ = coef_posterior(summary, prior_var, include)
    z = rng.standard_normal(idx.size)
    coef = np.zeros(reg.q)
    coef[idx] = mean + scipy.linalg.solve_triangular(low.T, z, lower=False)
    shifted = reg.shifted_model(coef)
    x = simulation_smoother(shifted, indicators, omega, y, rng)
    return x, coef
