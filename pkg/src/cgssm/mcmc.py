"""Posterior sampler for the component model: a nine-step sweep.

Every sweep executes, in this order: (1) a label sweep on the projected
panel conditional on the regression coefficients; (2) a joint draw of the
state path and coefficients; (3) conjugate updates of the break-size
parameters; (4)-(6) adaptive random-walk Metropolis moves of damping, cycle
scale, and frequency per component, each targeting the state-marginal
likelihood times the prior on a transformed scale; (7) a collapsed update
of the inclusion flags with the coefficients integrated out, followed by a
coefficient redraw under the new flags; (8) row-wise conjugate updates of
the loading matrix and its column precisions (skipped when the loading is
held fixed); (9) per-series measurement noise updates.

Conjugate-update algebra lives in small pure helpers (eta_posterior,
theta_row_posterior, kappa_posterior, obs_var_posterior, include_log_odds)
so the fixture tests can pin it down without running a chain.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg

from . import dfm, kernels
from .eof import compute_eof
from .errors import (
    DegenerateBasisError,
    SingularInnovationError,
    SweepError,
    ZeroVarianceChainError,
)
from .kalman import coef_posterior
from .reduction import observation_reduction
from .ssm import IndicatorSequence

TARGET_ACCEPT = 0.44
ADAPT_RATE = 2.3


# ---------------------------------------------------------------------------
# adaptive scaling and chain diagnostics

def adapt_rwmh(scale, accepted, iteration):
    """Robbins-Monro scale update steering acceptance toward 0.44.

    The step size decays as 1/iteration, so adaptation diminishes and the
    chain stays valid.
    """
    if scale <= 0.0:
        raise ValueError("proposal scale must be positive")
    move = ADAPT_RATE * ((1.0 if accepted else 0.0) - TARGET_ACCEPT)
    return float(scale * math.exp(move / max(int(iteration), 1)))


def inefficiency_factor(chain):
    """1 + 2 sum of Parzen-weighted autocorrelations.

    Bandwidth L = floor(len^(1/3) * 2); autocovariances via FFT. A value of
    1 means the chain mixes like independent draws.
    """
    chain = np.asarray(chain, dtype=float)
    if chain.ndim != 1 or chain.size < 100:
        raise ValueError("need a scalar chain of length >= 100")
    n = chain.size
    x = chain - chain.mean()
    var = float(x @ x) / n
    if not np.isfinite(var) or var <= 0.0:
        raise ZeroVarianceChainError("chain has no variance")
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    bandwidth = int(n ** (1.0 / 3.0) * 2)
    lags = np.arange(1, bandwidth + 1)
    z = lags / (bandwidth + 1.0)
    weights = np.where(
        z <= 0.5, 1.0 - 6.0 * z ** 2 + 6.0 * z ** 3, 2.0 * (1.0 - z) ** 3
    )
    return float(1.0 + 2.0 * np.sum(weights * rho[1:bandwidth + 1]))


# ---------------------------------------------------------------------------
# conjugate-update algebra (pure helpers, pinned by fixture tests)

def eta_posterior(prior_df, prior_s, residuals):
    """Inverse-gamma posterior (shape, rate) of a squared break size.

    residuals are the break innovations divided by the component's cycle
    scale; each contributes one degree of freedom.
    """
    residuals = np.asarray(residuals, dtype=float)
    shape = 0.5 * (prior_df + residuals.size)
    rate = 0.5 * (prior_s + float(residuals @ residuals))
    return shape, rate


def draw_root_inv_gamma(shape, rate, rng):
    return float(np.sqrt(rate / rng.gamma(shape)))


def break_residuals(x, labels, params_list, component, kind, size_idx, k):
    """Scaled trend innovations at the transitions carrying this label."""
    label = dfm.label_of(component, kind, size_idx, k)
    taus = np.flatnonzero(labels[:-1] == label)
    base = dfm.BLOCK * component
    scale = params_list[component].scale
    if kind == "level":
        inc = (x[taus + 1, base + dfm.LEVEL] - x[taus, base + dfm.LEVEL]
               - x[taus, base + dfm.SLOPE])
    else:
        inc = x[taus + 1, base + dfm.SLOPE] - x[taus, base + dfm.SLOPE]
    return inc / scale


def theta_row_posterior(factors, y_col, fixed_part, obs_sd, kappa_free):
    """Gaussian posterior (mean, precision_chol) of one loading row's free
    entries: regress (y - fixed part) on the factor columns."""
    resid = y_col - fixed_part
    prec = np.diag(kappa_free) + factors.T @ factors / obs_sd ** 2
    low = np.linalg.cholesky(prec)
    rhs = factors.T @ resid / obs_sd ** 2
    mean = scipy.linalg.cho_solve((low, True), rhs)
    return mean, low


def kappa_posterior(prior_df, prior_s, entries):
    """Gamma posterior (shape, rate) of one column's loading precision."""
    entries = np.asarray(entries, dtype=float)
    shape = 0.5 * (prior_df + entries.size)
    rate = 0.5 * (prior_s + float(entries @ entries))
    return shape, rate


def obs_var_posterior(prior_df, prior_s, resid_ssq, n_obs):
    """Inverse-gamma posterior (shape, rate) of one series' noise variance."""
    return 0.5 * (prior_df + n_obs), 0.5 * (prior_s + resid_ssq)


def include_log_odds(summary, prior_var, include_on, include_off,
                     include_prob):
    """Log posterior odds of one inclusion flag, coefficients integrated."""
    _, _, _, lml_on = coef_posterior(summary, prior_var, include_on)
    _, _, _, lml_off = coef_posterior(summary, prior_var, include_off)
    return float(lml_on - lml_off
                 + math.log(include_prob) - math.log1p(-include_prob))


# ---------------------------------------------------------------------------
# chain state and configuration

@dataclass
class RwmhScale:
    scale: float
    proposed: int = 0
    accepted: int = 0

    @property
    def rate(self):
        return self.accepted / self.proposed if self.proposed else 0.0


@dataclass
class SamplerConfig:
    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    adapt: bool = True
    theta_mode: str = "estimate"      # "estimate" or "fixed"
    init_scale: float = 0.3           # starting RWMH step on the z scale
    refresh_state_each_step: bool = False  # redraw x before steps 8-9

    def validate(self):
        problems = []
        if self.iterations < 0:
            problems.append("iterations must be >= 0")
        if self.burn_in < 0:
            problems.append("burn_in must be >= 0")
        if self.thin < 1:
            problems.append("thin must be >= 1")
        if self.theta_mode not in ("estimate", "fixed"):
            problems.append("theta_mode must be 'estimate' or 'fixed'")
        if self.init_scale <= 0:
            problems.append("init_scale must be positive")
        return problems


@dataclass
class ChainState:
    params_list: List[dfm.ComponentParams]
    labels: np.ndarray            # (n,) int64
    x: np.ndarray                 # (n, m)
    loading: np.ndarray           # (p, k)
    loading_prec: np.ndarray      # (k,) column precisions
    obs_sd: np.ndarray            # (p,)
    scales: Dict[str, RwmhScale] = field(default_factory=dict)
    iteration: int = 0


def loading_free_mask(p, k):
    """Boolean (p, k) mask of the free loading entries under the unit
    lower-triangular identification."""
    mask = np.ones((p, k), dtype=bool)
    for i in range(min(p, k)):
        mask[i, i:] = False
    return mask


def default_loading(p, k):
    out = np.zeros((p, k))
    out[:k, :k] = np.eye(k)
    return out


def _strip_smooth_trend(paths, window=15):
    """Remove a centered moving average from each column."""
    n = paths.shape[0]
    window = min(window, n if n % 2 == 1 else n - 1)
    if window < 3:
        return paths
    pad = window // 2
    padded = np.pad(paths, ((pad, pad), (0, 0)), mode="edge")
    kernel = np.full(window, 1.0 / window)
    trend = np.stack([
        np.convolve(padded[:, i], kernel, mode="valid")
        for i in range(paths.shape[1])
    ], axis=1)
    return paths - trend


def initial_loading_guess(spec, y):
    """Loading start: leading principal directions rotated into the
    identification (unit-lower-triangular top block) so that the implied
    component paths are mutually uncorrelated once the covariate transfer
    and a smooth trend are stripped. Falls back to the trivial loading
    when the rotation is ill-conditioned.

    Both halves matter. A start outside the data's factor subspace traps
    the noise variances in an inflated local mode. A start with the wrong
    rotation leaks one component's signal into another, which zeroes the
    contaminated component's covariate transfer and inflates its cycle
    scale the same way; the rotation is pinned by the independence of the
    component cycles, which only shows after the shared covariate signal
    and the (arbitrarily cross-correlated) trends are removed.
    """
    k = spec.n_components
    p = y.shape[1]
    try:
        basis = compute_eof(y, threshold=1e-12, k_max=k)
    except DegenerateBasisError:
        return default_loading(p, k)
    theta = basis.theta
    if theta.shape[1] < k:
        return default_loading(p, k)
    top = theta[:k, :k]
    if np.linalg.cond(top) > 1e8:
        return default_loading(p, k)
    scores = (y - y.mean(axis=0)) @ theta
    try:
        if spec.k_r:
            lagged = np.vstack([spec.presample_regressor,
                                spec.regressors[:-1]])
            bhat, *_ = np.linalg.lstsq(lagged, scores, rcond=None)
            scores = scores - lagged @ bhat
        scores = _strip_smooth_trend(scores)
        mixed = top @ np.cov(scores.T).reshape(k, k) @ top.T
        root = np.linalg.cholesky(mixed)
        unit_lower = root / np.diag(root)
        guess = theta @ np.linalg.solve(top, unit_lower)
    except (ValueError, np.linalg.LinAlgError):
        return default_loading(p, k)
    if not np.all(np.isfinite(guess)):
        return default_loading(p, k)
    # identification entries exactly, not to rounding error
    for i in range(k):
        guess[i, i] = 1.0
        guess[i, i + 1:] = 0.0
    return guess


def residual_sd_guess(y, loading):
    """Per-series noise start: residual std after projecting out the
    loading columns."""
    centered = y - y.mean(axis=0)
    coef, *_ = np.linalg.lstsq(loading, centered.T, rcond=None)
    resid = centered - (loading @ coef).T
    return np.maximum(resid.std(axis=0), 1e-3)


def initial_coef_guess(spec, y, loading):
    """Covariate-coefficient start: project the panel onto the loading
    columns, strip a moving-average trend, regress the remainder on the
    lagged covariates.

    Starting the transfer coefficients near zero lets the cycle scale
    inflate to soak up the covariate signal during early sweeps, a local
    mode the chain is slow to leave; a rough least-squares start avoids
    it.
    """
    k_r = spec.k_r
    k = spec.n_components
    if k_r == 0:
        return np.zeros((k, 0))
    try:
        fhat, *_ = np.linalg.lstsq(loading, y.T, rcond=None)
        fhat = _strip_smooth_trend(fhat.T)           # (n, k) factor paths
        # the cycle row at time t carries the covariates of time t - 1
        lagged = np.vstack([spec.presample_regressor,
                            spec.regressors[:-1]])
        coef, *_ = np.linalg.lstsq(lagged, fhat, rcond=None)
    except (ValueError, np.linalg.LinAlgError):
        return np.zeros((k, k_r))
    coef = coef.T                                    # (k, k_r)
    if not np.all(np.isfinite(coef)):
        return np.zeros((k, k_r))
    return coef


def init_state(spec, y, rng, cfg, loading=None):
    """Deterministic-given-rng starting point for a chain."""
    n, p = y.shape
    k = spec.n_components
    pri = spec.priors
    params_list = []
    for i in range(k):
        params_list.append(dfm.ComponentParams(
            damping=pri.damping_a / (pri.damping_a + pri.damping_b),
            frequency=0.5 * (pri.freq_lo + pri.freq_hi),
            scale=dfm.root_inv_gamma_mean(pri.cycle_scale_df,
                                          pri.cycle_scale_s),
            coef=np.zeros(spec.k_r + 1),
            include=np.ones(spec.k_r, dtype=bool),
            level_sizes=np.array([
                dfm.root_inv_gamma_mean(pri.level_small_df, pri.level_small_s),
                dfm.root_inv_gamma_mean(pri.level_large_df, pri.level_large_s),
            ]),
            slope_sizes=np.array([
                dfm.root_inv_gamma_mean(pri.slope_small_df, pri.slope_small_s),
                dfm.root_inv_gamma_mean(pri.slope_large_df, pri.slope_large_s),
            ]),
        ))
    if loading is None:
        if cfg.theta_mode == "fixed":
            raise ValueError("fixed loading mode needs a loading matrix")
        loading = initial_loading_guess(spec, y)
    loading = np.array(loading, dtype=float)
    obs_sd = residual_sd_guess(y, loading)
    coef_start = initial_coef_guess(spec, y, loading)
    for i in range(k):
        params_list[i].coef[:spec.k_r] = coef_start[i]
    scales = {}
    for i in range(k):
        for name in ("damping", "scale", "frequency"):
            scales[f"{name}_{i}"] = RwmhScale(scale=cfg.init_scale)
    return ChainState(
        params_list=params_list,
        labels=np.zeros(n, dtype=np.int64),
        x=np.zeros((n, spec.m)),
        loading=loading,
        loading_prec=np.full(k, pri.loading_prec_df / pri.loading_prec_s),
        obs_sd=obs_sd,
        scales=scales,
    )


# ---------------------------------------------------------------------------
# parameter transforms for the Metropolis moves

def _to_unconstrained(name, value, pri):
    if name == "damping":
        return math.log(value) - math.log1p(-value)
    if name == "scale":
        return math.log(value)
    lo, hi = pri.freq_lo, pri.freq_hi
    u = (value - lo) / (hi - lo)
    return math.log(u) - math.log1p(-u)


def _from_unconstrained(name, z, pri):
    if name == "damping":
        return 1.0 / (1.0 + math.exp(-z))
    if name == "scale":
        return math.exp(z)
    lo, hi = pri.freq_lo, pri.freq_hi
    return lo + (hi - lo) / (1.0 + math.exp(-z))


def _log_jacobian(name, value, pri):
    # d value / d z of the maps above, in log form
    if name == "damping":
        return math.log(value) + math.log1p(-value)
    if name == "scale":
        return math.log(value)
    lo, hi = pri.freq_lo, pri.freq_hi
    return math.log(value - lo) + math.log(hi - value) - math.log(hi - lo)


# ---------------------------------------------------------------------------
# the nine-step sweep

def _reduced_panel(state, y):
    red = observation_reduction(state.loading, state.obs_sd ** 2)
    return red, red.transform(y)


def _structured(spec, state, red, with_coef):
    coef = dfm.stack_coefs(state.params_list) if with_coef else None
    return kernels.structured_from_dfm(
        spec, state.params_list, state.loading, state.obs_sd,
        coef=coef, reduction=red)


def _marginal_loglik(spec, state, red, y_red):
    sm = _structured(spec, state, red, with_coef=True)
    return kernels.filter_loglik_structured(sm, state.labels, y_red)


def _factors(spec, state):
    return state.x @ dfm.factor_selector(spec.n_components).T


def _step_labels(spec, state, red, y_red, rng):
    sm = _structured(spec, state, red, with_coef=True)
    labels, _ = kernels.sweep_structured(sm, state.labels, y_red, rng=rng)
    state.labels = labels


def _step_joint_state_coef(spec, state, red, y_red, rng):
    sm0 = _structured(spec, state, red, with_coef=False)
    loadings, init_loading = dfm.regression_design(spec, state.params_list)
    summary = kernels.regression_summary_structured(
        sm0, loadings, init_loading, state.labels, y_red)
    include = dfm.stack_include(state.params_list)
    idx, mean, low, _ = coef_posterior(summary, dfm.coef_prior_var(spec),
                                       include)
    coef = np.zeros(spec.coef_len)
    coef[idx] = mean + scipy.linalg.solve_triangular(
        low.T, rng.standard_normal(idx.size), lower=False)
    _set_coefs(spec, state, coef)
    shifted = kernels.shift_for_coef(sm0, loadings, init_loading, coef)
    state.x = kernels.simulation_smoother_structured(
        shifted, state.labels, y_red, rng)


def _set_coefs(spec, state, coef):
    step = spec.k_r + 1
    for i, params in enumerate(state.params_list):
        params.coef = coef[i * step:(i + 1) * step].copy()
        params.coef[:-1] = np.where(params.include, params.coef[:-1], 0.0)


def _step_break_sizes(spec, state, rng):
    pri = spec.priors
    table = {
        ("level", 0): (pri.level_small_df, pri.level_small_s),
        ("level", 1): (pri.level_large_df, pri.level_large_s),
        ("slope", 0): (pri.slope_small_df, pri.slope_small_s),
        ("slope", 1): (pri.slope_large_df, pri.slope_large_s),
    }
    k = spec.n_components
    for i, params in enumerate(state.params_list):
        for (kind, size_idx), (df, s) in table.items():
            resid = break_residuals(state.x, state.labels,
                                    state.params_list, i, kind, size_idx, k)
            shape, rate = eta_posterior(df, s, resid)
            value = draw_root_inv_gamma(shape, rate, rng)
            if kind == "level":
                params.level_sizes[size_idx] = value
            else:
                params.slope_sizes[size_idx] = value


def _step_rwmh(spec, state, red, y_red, rng, cfg, name):
    """One adaptive Metropolis move of damping/scale/frequency, per
    component, on the transformed scale."""
    pri = spec.priors
    cur_ll = _marginal_loglik(spec, state, red, y_red)
    for i, params in enumerate(state.params_list):
        key = f"{name}_{i}"
        tracker = state.scales[key]
        value = getattr(params, name)
        z = _to_unconstrained(name, value, pri)
        z_prop = z + tracker.scale * rng.standard_normal()
        prop = _from_unconstrained(name, z_prop, pri)
        trial = dfm.ComponentParams(
            damping=params.damping, frequency=params.frequency,
            scale=params.scale, coef=params.coef.copy(),
            include=params.include.copy(),
            level_sizes=params.level_sizes.copy(),
            slope_sizes=params.slope_sizes.copy(),
        )
        setattr(trial, name, prop)
        log_prior_prop = (dfm.log_prior_component(trial, pri)
                          if np.isfinite(prop) else -np.inf)
        trial_ll = -np.inf
        if np.isfinite(log_prior_prop):
            trial_list = list(state.params_list)
            trial_list[i] = trial
            trial_state = ChainState(
                params_list=trial_list, labels=state.labels, x=state.x,
                loading=state.loading, loading_prec=state.loading_prec,
                obs_sd=state.obs_sd, scales=state.scales)
            try:
                trial_ll = _marginal_loglik(spec, trial_state, red, y_red)
            except SingularInnovationError:
                trial_ll = -np.inf  # infeasible proposal, reject
        log_num = trial_ll + log_prior_prop + _log_jacobian(name, prop, pri) \
            if np.isfinite(trial_ll) else -np.inf
        log_den = (cur_ll + dfm.log_prior_component(params, pri)
                   + _log_jacobian(name, value, pri))
        tracker.proposed += 1
        accepted = math.log(rng.random()) < log_num - log_den
        if accepted:
            tracker.accepted += 1
            state.params_list[i] = trial
            cur_ll = trial_ll
        if cfg.adapt:
            tracker.scale = adapt_rwmh(tracker.scale, accepted,
                                       tracker.proposed)


def _step_include_flags(spec, state, red, y_red, rng):
    """Collapsed flag updates, then a coefficient redraw under the new
    flags (a joint draw of flags and coefficients)."""
    if spec.k_r == 0:
        return
    pri = spec.priors
    sm0 = _structured(spec, state, red, with_coef=False)
    loadings, init_loading = dfm.regression_design(spec, state.params_list)
    summary = kernels.regression_summary_structured(
        sm0, loadings, init_loading, state.labels, y_red)
    prior_var = dfm.coef_prior_var(spec)
    if pri.include_prob >= 1.0:
        for params in state.params_list:
            params.include[:] = True
    else:
        for i, params in enumerate(state.params_list):
            for j in range(spec.k_r):
                on = params.include.copy()
                on[j] = True
                off = params.include.copy()
                off[j] = False
                mask_on = _mask_with(spec, state, i, on)
                mask_off = _mask_with(spec, state, i, off)
                odds = include_log_odds(summary, prior_var, mask_on,
                                        mask_off, pri.include_prob)
                params.include[j] = (
                    math.log(rng.random()) < -np.logaddexp(0.0, -odds))
    include = dfm.stack_include(state.params_list)
    idx, mean, low, _ = coef_posterior(summary, prior_var, include)
    coef = np.zeros(spec.coef_len)
    coef[idx] = mean + scipy.linalg.solve_triangular(
        low.T, rng.standard_normal(idx.size), lower=False)
    _set_coefs(spec, state, coef)


def _mask_with(spec, state, component, flags):
    masks = []
    for i, params in enumerate(state.params_list):
        cur = flags if i == component else params.include
        masks.append(cur)
        masks.append(np.array([True]))
    return np.concatenate(masks)


def _step_loading(spec, state, y, rng):
    pri = spec.priors
    k = spec.n_components
    p = y.shape[1]
    f = _factors(spec, state)
    free = loading_free_mask(p, k)
    for i in range(p):
        cols = np.flatnonzero(free[i])
        if cols.size == 0:
            continue
        fixed_cols = np.flatnonzero(~free[i])
        fixed_part = f[:, fixed_cols] @ state.loading[i, fixed_cols]
        mean, low = theta_row_posterior(
            f[:, cols], y[:, i], fixed_part, state.obs_sd[i],
            state.loading_prec[cols])
        draw = mean + scipy.linalg.solve_triangular(
            low.T, rng.standard_normal(cols.size), lower=False)
        state.loading[i, cols] = draw
    for c in range(k):
        rows = np.flatnonzero(free[:, c])
        shape, rate = kappa_posterior(pri.loading_prec_df,
                                      pri.loading_prec_s,
                                      state.loading[rows, c])
        state.loading_prec[c] = rng.gamma(shape) / rate


def _step_obs_noise(spec, state, y, rng):
    pri = spec.priors
    f = _factors(spec, state)
    resid = y - f @ state.loading.T
    ssq = np.einsum("tp,tp->p", resid, resid)
    shape, rate = obs_var_posterior(pri.obs_scale_df, pri.obs_scale_s,
                                    ssq, y.shape[0])
    var = rate / rng.gamma(shape, size=ssq.size)
    state.obs_sd = np.sqrt(var)


def gibbs_sweep(state, y, spec, cfg, rng):
    """One full nine-step sweep, mutating state in place."""
    step = 0
    try:
        step = 1
        red, y_red = _reduced_panel(state, y)
        _step_labels(spec, state, red, y_red, rng)
        step = 2
        _step_joint_state_coef(spec, state, red, y_red, rng)
        step = 3
        _step_break_sizes(spec, state, rng)
        step = 4
        _step_rwmh(spec, state, red, y_red, rng, cfg, "damping")
        step = 5
        _step_rwmh(spec, state, red, y_red, rng, cfg, "scale")
        step = 6
        _step_rwmh(spec, state, red, y_red, rng, cfg, "frequency")
        step = 7
        _step_include_flags(spec, state, red, y_red, rng)
        if cfg.refresh_state_each_step:
            sm0 = _structured(spec, state, red, with_coef=False)
            loadings, init_loading = dfm.regression_design(
                spec, state.params_list)
            shifted = kernels.shift_for_coef(
                sm0, loadings, init_loading,
                dfm.stack_coefs(state.params_list))
            state.x = kernels.simulation_smoother_structured(
                shifted, state.labels, y_red, rng)
        if cfg.theta_mode == "estimate":
            step = 8
            _step_loading(spec, state, y, rng)
        step = 9
        _step_obs_noise(spec, state, y, rng)
    except Exception as exc:
        if isinstance(exc, SweepError):
            raise
        raise SweepError(step, exc) from exc
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# chain driver

@dataclass
class ChainOutput:
    draws: Dict[str, np.ndarray]          # scalar chains, kept iterations
    label_freq: np.ndarray                # (n, S) posterior frequencies
    trend_draws: np.ndarray               # (kept, n, k)
    seasonal_draws: np.ndarray            # (kept, n, k)
    include_freq: np.ndarray              # (k, k_r)
    loading_mean: np.ndarray              # (p, k)
    acceptance: Dict[str, float]
    final_state: Optional[ChainState]
    kept: int

    def summary_rows(self):
        """(name, mean, std, inefficiency) per scalar chain."""
        rows = []
        for name in sorted(self.draws):
            chain = self.draws[name]
            if chain.size == 0:
                continue
            try:
                ineff = inefficiency_factor(chain)
            except (ValueError, ZeroVarianceChainError):
                ineff = float("nan")
            rows.append((name, float(chain.mean()), float(chain.std()),
                         ineff))
        return rows

    def trend_mean(self):
        """Posterior mean trend paths, shape (k, n)."""
        return self.trend_draws.mean(axis=0).T

    def seasonal_mean(self):
        """Posterior mean seasonal paths, shape (k, n)."""
        return self.seasonal_draws.mean(axis=0).T


def _scalar_names(spec, p):
    names = []
    for i in range(spec.n_components):
        tag = f"c{i + 1}"
        names += [f"damping_{tag}", f"frequency_{tag}", f"cycle_scale_{tag}",
                  f"level_small_{tag}", f"level_large_{tag}",
                  f"slope_small_{tag}", f"slope_large_{tag}",
                  f"init_level_{tag}"]
        names += [f"coef_{tag}_{j + 1}" for j in range(spec.k_r)]
    names += [f"obs_noise_sd_s{i + 1}" for i in range(p)]
    names += [f"loading_prec_c{i + 1}" for i in range(spec.n_components)]
    return names


def _record_scalars(spec, state, store, pos):
    for i, params in enumerate(state.params_list):
        tag = f"c{i + 1}"
        store[f"damping_{tag}"][pos] = params.damping
        store[f"frequency_{tag}"][pos] = params.frequency
        store[f"cycle_scale_{tag}"][pos] = params.scale
        store[f"level_small_{tag}"][pos] = params.level_sizes[0]
        store[f"level_large_{tag}"][pos] = params.level_sizes[1]
        store[f"slope_small_{tag}"][pos] = params.slope_sizes[0]
        store[f"slope_large_{tag}"][pos] = params.slope_sizes[1]
        store[f"init_level_{tag}"][pos] = params.coef[-1]
        for j in range(spec.k_r):
            store[f"coef_{tag}_{j + 1}"][pos] = params.coef[j]
        store[f"loading_prec_c{i + 1}"][pos] = state.loading_prec[i]
    for s in range(state.obs_sd.size):
        store[f"obs_noise_sd_s{s + 1}"][pos] = state.obs_sd[s]


def run_chain(y, spec, cfg, loading=None, progress=None):
    """Run one chain; fully reproducible given cfg.seed."""
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    y = np.ascontiguousarray(y, dtype=float)
    n, p = y.shape
    k = spec.n_components
    rng = np.random.default_rng(cfg.seed)
    state = init_state(spec, y, rng, cfg, loading=loading)

    kept = 0 if cfg.iterations == 0 else (cfg.iterations - 1) // cfg.thin + 1
    store = {name: np.empty(kept) for name in _scalar_names(spec, p)}
    label_freq = np.zeros((n, spec.n_labels))
    trend_draws = np.empty((kept, n, k))
    seasonal_draws = np.empty((kept, n, k))
    include_sum = np.zeros((k, spec.k_r))

    level_rows = [dfm.BLOCK * i + dfm.LEVEL for i in range(k)]
    cycle_rows = [dfm.BLOCK * i + dfm.CYCLE for i in range(k)]
    loading_sum = np.zeros((p, k))

    total = cfg.burn_in + cfg.iterations
    pos = 0
    for it in range(total):
        try:
            gibbs_sweep(state, y, spec, cfg, rng)
        except SweepError as exc:
            raise SweepError(exc.step, exc.cause, iteration=it) from exc
        if progress is not None:
            progress(it, total)
        if it < cfg.burn_in:
            continue
        kept_it = it - cfg.burn_in
        label_freq[np.arange(n), state.labels] += 1.0
        for i, params in enumerate(state.params_list):
            include_sum[i] += params.include
        loading_sum += state.loading
        if kept_it % cfg.thin == 0:
            _record_scalars(spec, state, store, pos)
            trend_draws[pos] = state.x[:, level_rows]
            seasonal_draws[pos] = state.x[:, cycle_rows]
            pos += 1
    assert pos == kept

    post = max(cfg.iterations, 1)
    acceptance = {key: tr.rate for key, tr in state.scales.items()}
    return ChainOutput(
        draws=store,
        label_freq=label_freq / (cfg.iterations if cfg.iterations else 1),
        trend_draws=trend_draws,
        seasonal_draws=seasonal_draws,
        include_freq=include_sum / post,
        loading_mean=loading_sum / post,
        acceptance=acceptance,
        final_state=state,
        kept=kept,
    )
