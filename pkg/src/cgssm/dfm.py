"""Hierarchical factor model with occasional level and slope shifts.

Each of k common components carries a damped stochastic cycle, a local
linear trend, and a regression on external covariates. Its 4-row state block
is [shifted_cycle, cycle_aux, level, slope], where shifted_cycle absorbs the
covariate effect so the observation picks the component value as
shifted_cycle + level. Trend rows are deterministic except where the per-time
indicator label injects a break: the label selects which component's level or
slope receives an innovation, and whether its standard deviation is the small
or the large break size.

Indicator support (size 4k + 1): label 0 is the null state; labels
1..2k are level breaks and 2k+1..4k slope breaks, ordered by component and
then by break size within component.

All time indexing is 0-based: the label at t scales the state innovation of
the transition from t to t+1, so a break first shows in the data at t+1.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import betaln, gammaln

from .errors import ConfigError, DimensionError
from .indicators import iid_prior
from .kalman import StateRegression
from .ssm import CgssModel, SystemMatrices

CYCLE, CYCLE_AUX, LEVEL, SLOPE = 0, 1, 2, 3
BLOCK = 4

DEFAULT_FREQ_HI = 4.0 * np.pi / 23.0


@dataclass
class PriorConfig:
    """Hyperparameters of every parameter prior, with packaged defaults.

    Scale-type parameters (cycle scale, observation noise, break sizes) use a
    root-inverse-gamma law: x is distributed so that x^2 is inverse gamma
    with shape df/2 and scale s/2. Damping uses a beta law, the cycle
    frequency a beta law stretched over (freq_lo, freq_hi), regression
    coefficients a normal slab of sd coef_sd with Bernoulli inclusion, and
    the loading-row precision a gamma law with shape prec_df/2, rate
    prec_s/2.
    """

    damping_a: float = 15.0
    damping_b: float = 1.5
    cycle_scale_df: float = 10.0
    cycle_scale_s: float = 0.1
    level_small_df: float = 3.0
    level_small_s: float = 30.0
    level_large_df: float = 3.0
    level_large_s: float = 300.0
    slope_small_df: float = 3.0
    slope_small_s: float = 0.1
    slope_large_df: float = 3.0
    slope_large_s: float = 0.4
    freq_a: float = 2.0
    freq_b: float = 2.0
    freq_lo: float = 0.0
    freq_hi: float = DEFAULT_FREQ_HI
    obs_scale_df: float = 10.0
    obs_scale_s: float = 0.1
    coef_sd: float = 3.0
    include_prob: float = 0.5
    loading_prec_df: float = 10.0
    loading_prec_s: float = 0.01

    def validate(self):
        problems = []
        for name, value in self.__dict__.items():
            if name in ("freq_lo",):
                continue
            if not value > 0.0:
                problems.append(f"prior hyperparameter {name} must be > 0")
        if not self.freq_lo >= 0.0:
            problems.append("freq_lo must be >= 0")
        if not self.freq_hi > self.freq_lo:
            problems.append("freq_hi must exceed freq_lo")
        if not 0.0 < self.include_prob <= 1.0:
            problems.append("include_prob must lie in (0, 1]")
        if problems:
            raise ConfigError(problems)


@dataclass
class ComponentParams:
    """Parameters of one common component."""

    damping: float            # cycle persistence, in (0, 1)
    frequency: float          # cycle angle per step, radians
    scale: float              # innovation sd shared by the whole block
    coef: np.ndarray          # (k_r + 1,): covariate coefs + initial level
    include: np.ndarray       # (k_r,) inclusion flags for the covariate coefs
    level_sizes: np.ndarray   # (2,) small/large level break sd multipliers
    slope_sizes: np.ndarray   # (2,) small/large slope break sd multipliers

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        self.include = np.asarray(self.include, dtype=bool)
        self.level_sizes = np.asarray(self.level_sizes, dtype=float)
        self.slope_sizes = np.asarray(self.slope_sizes, dtype=float)
        if self.coef.size != self.include.size + 1:
            raise DimensionError(
                "coef must hold one entry per covariate plus the initial level"
            )
        # excluded covariates carry an exact zero coefficient
        self.coef[:-1] = np.where(self.include, self.coef[:-1], 0.0)


@dataclass
class DfmSpec:
    """Model-level configuration: components, covariates, break prior."""

    n_components: int
    regressors: np.ndarray                 # (n, k_r) covariate rows per time
    break_prob: float = 0.05
    priors: PriorConfig = field(default_factory=PriorConfig)
    presample_regressor: Optional[np.ndarray] = None  # covariates before t=0
    trend_init_var: float = 1e6

    def __post_init__(self):
        self.regressors = np.asarray(self.regressors, dtype=float)
        if self.regressors.ndim != 2:
            raise DimensionError("regressors must be an (n, k_r) matrix")
        if self.presample_regressor is None:
            self.presample_regressor = np.zeros(self.regressors.shape[1])
        self.presample_regressor = np.asarray(
            self.presample_regressor, dtype=float
        ).reshape(self.regressors.shape[1])
        if not 0.0 < self.break_prob < 1.0:
            raise ConfigError(["break_prob must lie strictly in (0, 1)"])

    @property
    def n(self):
        return self.regressors.shape[0]

    @property
    def k_r(self):
        return self.regressors.shape[1]

    @property
    def m(self):
        return BLOCK * self.n_components

    @property
    def n_labels(self):
        return 4 * self.n_components + 1

    @property
    def coef_len(self):
        return self.n_components * (self.k_r + 1)


def label_fields(label, k):
    """Decode a label into (component, kind, size index) or None for null.

    kind is "level" or "slope"; size index 0 = small, 1 = large.
    """
    if label == 0:
        return None
    idx = label - 1
    if idx < 2 * k:
        return idx // 2, "level", idx % 2
    idx -= 2 * k
    return idx // 2, "slope", idx % 2


def label_of(component, kind, size_idx, k):
    base = 1 if kind == "level" else 1 + 2 * k
    return base + 2 * component + size_idx


def label_name(label, k):
    fields = label_fields(label, k)
    if fields is None:
        return "none"
    comp, kind, size_idx = fields
    return f"{kind}_c{comp + 1}_{'small' if size_idx == 0 else 'large'}"


def indicator_support(k):
    return tuple(label_name(s, k) for s in range(4 * k + 1))


def indicator_prior(spec):
    """Categorical prior: null mass 1 - pi, each break state pi / (4k)."""
    k = spec.n_components
    probs = np.full(4 * k + 1, spec.break_prob / (4 * k))
    probs[0] = 1.0 - spec.break_prob
    return iid_prior(probs)


def component_transition(params):
    """4x4 transition of one component block."""
    c = params.damping * np.cos(params.frequency)
    s = params.damping * np.sin(params.frequency)
    return np.array([
        [c, s, 0.0, 0.0],
        [-s, c, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def transition_matrix(params_list):
    k = len(params_list)
    out = np.zeros((BLOCK * k, BLOCK * k))
    for i, params in enumerate(params_list):
        sl = slice(BLOCK * i, BLOCK * (i + 1))
        out[sl, sl] = component_transition(params)
    return out


def noise_diag_table(params_list):
    """(n_labels, m) table: diagonal of the state noise loading per label."""
    k = len(params_list)
    table = np.zeros((4 * k + 1, BLOCK * k))
    for i, params in enumerate(params_list):
        table[:, BLOCK * i + CYCLE] = params.scale
        table[:, BLOCK * i + CYCLE_AUX] = params.scale
        for size_idx in range(2):
            lab = label_of(i, "level", size_idx, k)
            table[lab, BLOCK * i + LEVEL] = (
                params.scale * params.level_sizes[size_idx]
            )
            lab = label_of(i, "slope", size_idx, k)
            table[lab, BLOCK * i + SLOPE] = (
                params.scale * params.slope_sizes[size_idx]
            )
    return table


def factor_selector(k):
    """(k, m) map from the stacked state to the component values."""
    sel = np.zeros((k, BLOCK * k))
    for i in range(k):
        sel[i, BLOCK * i + CYCLE] = 1.0
        sel[i, BLOCK * i + LEVEL] = 1.0
    return sel


def initial_mean(spec, params_list, coef=None):
    """Prior mean of the first state; covariate effects enter through coef."""
    if coef is None:
        return np.zeros(spec.m)
    _, init_loading = regression_design(spec, params_list)
    return init_loading @ coef


def initial_cov(spec, params_list):
    """Diagonal prior covariance: stationary cycle rows, diffuse trend rows."""
    k = spec.n_components
    diag = np.empty(spec.m)
    for i, params in enumerate(params_list):
        stat = params.scale ** 2 / (1.0 - params.damping ** 2)
        diag[BLOCK * i + CYCLE] = stat
        diag[BLOCK * i + CYCLE_AUX] = stat
        diag[BLOCK * i + LEVEL] = spec.trend_init_var
        diag[BLOCK * i + SLOPE] = spec.trend_init_var
    return np.diag(diag)


def regression_design(spec, params_list):
    """Coefficient loadings of the state offsets and of the initial mean.

    Returns (loadings, init_loading) with loadings[t] mapping the stacked
    coefficient vector to the state offset of the transition t -> t+1, and
    init_loading mapping it to the initial state mean. Coefficients stack
    per component: k_r covariate coefficients then the initial level.
    """
    k = len(params_list)
    n, k_r = spec.regressors.shape
    width = k * (k_r + 1)
    loadings = np.zeros((n, BLOCK * k, width))
    init_loading = np.zeros((BLOCK * k, width))
    w = spec.regressors
    w0 = spec.presample_regressor
    for i, params in enumerate(params_list):
        c = params.damping * np.cos(params.frequency)
        s = params.damping * np.sin(params.frequency)
        cols = slice(i * (k_r + 1), i * (k_r + 1) + k_r)
        init_col = i * (k_r + 1) + k_r
        for t in range(n - 1):
            prev = w[t - 1] if t > 0 else w0
            loadings[t, BLOCK * i + CYCLE, cols] = w[t] - c * prev
            loadings[t, BLOCK * i + CYCLE_AUX, cols] = s * prev
        init_loading[BLOCK * i + CYCLE, cols] = w0
        init_loading[BLOCK * i + LEVEL, init_col] = 1.0
    return loadings, init_loading


def stack_coefs(params_list):
    return np.concatenate([params.coef for params in params_list])


def stack_include(params_list, with_init=True):
    """Inclusion mask over the stacked coefficient vector."""
    parts = []
    for params in params_list:
        parts.append(params.include)
        if with_init:
            parts.append(np.array([True]))
    return np.concatenate(parts)


def build_model(spec, params_list, loading, obs_noise_sd, coef=None):
    """CgssModel for given component parameters, loading, and noise sds.

    With coef given, covariate effects are folded into the state offsets and
    the initial mean (simulation and likelihood evaluation at a known
    coefficient vector); with coef None all offsets are zero and the
    coefficient enters through build_regression instead.
    """
    k = spec.n_components
    if len(params_list) != k:
        raise DimensionError(f"expected {k} component parameter sets")
    loading = np.asarray(loading, dtype=float)
    obs_noise_sd = np.asarray(obs_noise_sd, dtype=float)
    p = loading.shape[0]
    if loading.shape != (p, k):
        raise DimensionError(f"loading must be (p, {k})")
    if obs_noise_sd.shape != (p,):
        raise DimensionError(f"obs_noise_sd must have shape ({p},)")
    n, m = spec.n, spec.m
    obs_loading = loading @ factor_selector(k)
    obs_noise = np.diag(obs_noise_sd)
    obs_offset = np.zeros(p)
    trans = transition_matrix(params_list)
    table = noise_diag_table(params_list)
    gammas = [np.diag(table[lab]) for lab in range(spec.n_labels)]
    if coef is None:
        offsets = np.zeros((n, m))
        init = np.zeros(m)
    else:
        loadings, init_loading = regression_design(spec, params_list)
        offsets = loadings @ coef
        init = init_loading @ coef

    def provider(t, label, omega):
        return SystemMatrices(
            obs_offset=obs_offset,
            obs_loading=obs_loading,
            obs_noise=obs_noise,
            state_offset=offsets[t],
            transition=trans,
            noise_loading=gammas[label],
        )

    return CgssModel(
        n=n, p=p, m=m, r=m, provider=provider,
        init_mean=init, init_cov=initial_cov(spec, params_list),
        validate=False,
    )


def build_regression(spec, params_list, loading, obs_noise_sd):
    """StateRegression treating the stacked coefficient vector as unknown."""
    model = build_model(spec, params_list, loading, obs_noise_sd, coef=None)
    loadings, init_loading = regression_design(spec, params_list)
    return StateRegression(model, loadings, init_loading)


def coef_prior_var(spec):
    """Prior variances of the stacked coefficient vector (all slab)."""
    return np.full(spec.coef_len, spec.priors.coef_sd ** 2)


# ---------------------------------------------------------------------------
# prior densities

def root_inv_gamma_logpdf(x, df, s):
    """Density of x > 0 when x^2 is inverse gamma (shape df/2, scale s/2)."""
    x = float(x)
    if x <= 0.0:
        return -np.inf
    half = 0.5 * df
    return float(
        np.log(2.0) + half * np.log(0.5 * s) - gammaln(half)
        - (df + 1.0) * np.log(x) - 0.5 * s / (x * x)
    )


def root_inv_gamma_mean(df, s):
    """Prior mean of the root-inverse-gamma law; finite for df > 1."""
    return float(
        np.sqrt(0.5 * s) * np.exp(gammaln(0.5 * (df - 1.0)) - gammaln(0.5 * df))
    )


def beta_logpdf(x, a, b):
    x = float(x)
    if not 0.0 < x < 1.0:
        return -np.inf
    return float(
        (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)
    )


def stretched_beta_logpdf(x, a, b, lo, hi):
    """Beta density affinely mapped onto the interval (lo, hi)."""
    x = float(x)
    if not lo < x < hi:
        return -np.inf
    z = (x - lo) / (hi - lo)
    return beta_logpdf(z, a, b) - float(np.log(hi - lo))


def gamma_logpdf(x, shape, rate):
    x = float(x)
    if x <= 0.0:
        return -np.inf
    return float(
        shape * np.log(rate) - gammaln(shape)
        + (shape - 1.0) * np.log(x) - rate * x
    )


def log_prior_component(params, priors):
    """Joint log prior of one component's parameters (flags included)."""
    out = beta_logpdf(params.damping, priors.damping_a, priors.damping_b)
    out += stretched_beta_logpdf(
        params.frequency, priors.freq_a, priors.freq_b,
        priors.freq_lo, priors.freq_hi,
    )
    out += root_inv_gamma_logpdf(
        params.scale, priors.cycle_scale_df, priors.cycle_scale_s
    )
    out += root_inv_gamma_logpdf(
        params.level_sizes[0], priors.level_small_df, priors.level_small_s
    )
    out += root_inv_gamma_logpdf(
        params.level_sizes[1], priors.level_large_df, priors.level_large_s
    )
    out += root_inv_gamma_logpdf(
        params.slope_sizes[0], priors.slope_small_df, priors.slope_small_s
    )
    out += root_inv_gamma_logpdf(
        params.slope_sizes[1], priors.slope_large_df, priors.slope_large_s
    )
    n_in = int(np.sum(params.include))
    n_out = params.include.size - n_in
    if priors.include_prob < 1.0:
        out += n_in * np.log(priors.include_prob)
        out += n_out * np.log1p(-priors.include_prob)
    elif n_out:
        return -np.inf
    sd = priors.coef_sd
    active = np.append(params.coef[:-1][params.include], params.coef[-1])
    out += float(
        -0.5 * active.size * np.log(2.0 * np.pi * sd * sd)
        - 0.5 * active @ active / (sd * sd)
    )
    return float(out)


def log_prior_obs_noise(obs_noise_sd, priors):
    return float(sum(
        root_inv_gamma_logpdf(sd, priors.obs_scale_df, priors.obs_scale_s)
        for sd in np.asarray(obs_noise_sd, dtype=float)
    ))


def log_prior_loading(free_entries_by_col, precisions, priors):
    """Log prior of the free loading entries and their column precisions."""
    out = 0.0
    for free, prec in zip(free_entries_by_col, precisions):
        out += gamma_logpdf(
            prec, 0.5 * priors.loading_prec_df, 0.5 * priors.loading_prec_s
        )
        free = np.asarray(free, dtype=float)
        out += float(
            0.5 * free.size * (np.log(prec) - np.log(2.0 * np.pi))
            - 0.5 * prec * free @ free
        )
    return float(out)


def log_prior_all(params_list, spec, obs_noise_sd=None,
                  loading_free=None, loading_prec=None):
    out = sum(log_prior_component(params, spec.priors)
              for params in params_list)
    if obs_noise_sd is not None:
        out += log_prior_obs_noise(obs_noise_sd, spec.priors)
    if loading_free is not None:
        out += log_prior_loading(loading_free, loading_prec, spec.priors)
    return float(out)


# ---------------------------------------------------------------------------
# prior simulation

def _root_inv_gamma_draw(df, s, rng):
    return float(np.sqrt(0.5 * s / rng.gamma(0.5 * df)))


def draw_prior_params(spec, rng):
    """One draw of every component's parameters from the prior."""
    pri = spec.priors
    out = []
    for _ in range(spec.n_components):
        include = rng.random(spec.k_r) < pri.include_prob
        coef = rng.normal(0.0, pri.coef_sd, spec.k_r + 1)
        coef[:-1] = np.where(include, coef[:-1], 0.0)
        out.append(ComponentParams(
            damping=float(rng.beta(pri.damping_a, pri.damping_b)),
            frequency=float(pri.freq_lo + (pri.freq_hi - pri.freq_lo)
                            * rng.beta(pri.freq_a, pri.freq_b)),
            scale=_root_inv_gamma_draw(pri.cycle_scale_df,
                                       pri.cycle_scale_s, rng),
            coef=coef,
            include=include,
            level_sizes=np.array([
                _root_inv_gamma_draw(pri.level_small_df, pri.level_small_s,
                                     rng),
                _root_inv_gamma_draw(pri.level_large_df, pri.level_large_s,
                                     rng),
            ]),
            slope_sizes=np.array([
                _root_inv_gamma_draw(pri.slope_small_df, pri.slope_small_s,
                                     rng),
                _root_inv_gamma_draw(pri.slope_large_df, pri.slope_large_s,
                                     rng),
            ]),
        ))
    return out


def draw_prior_labels(spec, rng):
    """Independent indicator draws from the categorical prior."""
    k = spec.n_components
    probs = np.full(spec.n_labels, spec.break_prob / (4 * k))
    probs[0] = 1.0 - spec.break_prob
    return rng.choice(spec.n_labels, size=spec.n, p=probs).astype(np.int64)


def draw_prior_obs_noise(p, priors, rng):
    return np.array([
        _root_inv_gamma_draw(priors.obs_scale_df, priors.obs_scale_s, rng)
        for _ in range(p)
    ])
