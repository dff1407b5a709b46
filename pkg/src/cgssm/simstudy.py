"""Synthetic study generator: two common components with planted breaks.

Builds a panel of series driven by two latent components, each a damped
cycle plus local linear trend plus covariate transfer, with deterministic
level and slope shifts planted at known times. Used by the simulation
experiments and the recovery checks: a fitted model should place posterior
break mass near the planted times and track the trend paths.

Break times are quoted as 1-based observation indices: a break at
observation T means the trend first holds its new value at T, so the
corresponding indicator label sits at transition index T - 2 (0-based).
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import dfm
from .errors import DimensionError
from .ssm import IndicatorSequence


@dataclass
class BreakEvent:
    component: int     # 0-based component index
    kind: str          # "level" or "slope"
    time: int          # 1-based observation index where the shift holds
    size: float        # jump added to the level or slope

    @property
    def transition_index(self):
        return self.time - 2


def default_events():
    """Planted shifts: one late level break on the first component, a
    cluster of level breaks plus one slope break on the second."""
    return [
        BreakEvent(component=0, kind="level", time=200, size=4.0),
        BreakEvent(component=1, kind="level", time=50, size=3.0),
        BreakEvent(component=1, kind="level", time=75, size=-2.5),
        BreakEvent(component=1, kind="level", time=100, size=2.0),
        BreakEvent(component=1, kind="level", time=150, size=-3.0),
        BreakEvent(component=1, kind="slope", time=240, size=0.3),
    ]


@dataclass
class StudyTruth:
    params_list: List[dfm.ComponentParams]
    coef: np.ndarray          # stacked coefficient vector
    loading: np.ndarray       # (p, k)
    obs_sd: np.ndarray        # (p,)
    factors: np.ndarray       # (n, k) component values entering the loading
    trend: np.ndarray         # (n, k) level paths
    slope: np.ndarray         # (n, k) slope paths
    seasonal: np.ndarray      # (n, k) cycle + covariate transfer
    labels: IndicatorSequence
    events: List[BreakEvent] = field(default_factory=list)


@dataclass
class StudyData:
    y: np.ndarray             # (n, p) observed panel
    spec: dfm.DfmSpec
    truth: StudyTruth


def _size_bucket(size):
    return 1 if abs(size) >= 1.0 else 0


def make_study(seed=20240101, n_obs=300, n_series=400, n_regressors=3,
               events=None, break_prob=0.05, obs_noise_sd=0.1,
               cycle_scale=0.5):
    """Generate the study panel. Same seed, same bytes.

    cycle_scale = 0 removes all cycle noise, leaving the component paths
    deterministic given the planted breaks.
    """
    rng = np.random.default_rng(seed)
    if events is None:
        # default schedule trimmed to the panel length; explicit events
        # out of range still error
        events = [ev for ev in default_events() if ev.time <= n_obs]
    k = 2
    dampings = (0.8, 0.9)
    freq = 2.0 * np.pi / 23.0
    scale = float(cycle_scale)
    beta = np.array([0.8, 0.9, 0.001])[:n_regressors]
    init_levels = (1.0, -1.0)

    w = rng.normal(size=(n_obs, n_regressors))
    spec = dfm.DfmSpec(n_components=k, regressors=w, break_prob=break_prob)

    params_list = []
    for i in range(k):
        params_list.append(dfm.ComponentParams(
            damping=dampings[i], frequency=freq, scale=scale,
            coef=np.append(beta, init_levels[i]),
            include=np.ones(n_regressors, dtype=bool),
            level_sizes=np.array([4.4, 13.8]),
            slope_sizes=np.array([0.25, 0.5]),
        ))

    # lower-triangular identification: unit diagonal, zeros above
    loading = rng.normal(size=(n_series, k))
    for j in range(k):
        loading[j, j] = 1.0
        loading[j, j + 1:] = 0.0
    obs_sd = np.full(n_series, obs_noise_sd)

    labels = np.zeros(n_obs, dtype=np.int64)
    jumps = {}
    for ev in events:
        if ev.kind not in ("level", "slope"):
            raise DimensionError(f"unknown break kind {ev.kind!r}")
        if not 2 <= ev.time <= n_obs:
            raise DimensionError(
                f"break time {ev.time} outside the observed range")
        tau = ev.transition_index
        labels[tau] = dfm.label_of(ev.component, ev.kind,
                                   _size_bucket(ev.size), k)
        jumps[(ev.component, ev.kind, tau)] = ev.size

    cycle = np.empty((n_obs, k))
    aux = np.empty((n_obs, k))
    level = np.empty((n_obs, k))
    slope = np.empty((n_obs, k))
    for i in range(k):
        stat_sd = scale / np.sqrt(1.0 - dampings[i] ** 2)
        cycle[0, i] = stat_sd * rng.normal()
        aux[0, i] = stat_sd * rng.normal()
        level[0, i] = init_levels[i]
        slope[0, i] = 0.0
    for t in range(n_obs - 1):
        for i in range(k):
            c = dampings[i] * np.cos(freq)
            s = dampings[i] * np.sin(freq)
            cycle[t + 1, i] = (c * cycle[t, i] + s * aux[t, i]
                               + scale * rng.normal())
            aux[t + 1, i] = (-s * cycle[t, i] + c * aux[t, i]
                             + scale * rng.normal())
            level[t + 1, i] = (level[t, i] + slope[t, i]
                               + jumps.get((i, "level", t), 0.0))
            slope[t + 1, i] = slope[t, i] + jumps.get((i, "slope", t), 0.0)

    w0 = spec.presample_regressor
    seasonal = np.empty((n_obs, k))
    for t in range(n_obs):
        prev = w[t - 1] if t > 0 else w0
        seasonal[t] = cycle[t] + prev @ beta
    factors = seasonal + level

    y = factors @ loading.T + obs_sd * rng.normal(size=(n_obs, n_series))

    truth = StudyTruth(
        params_list=params_list,
        coef=dfm.stack_coefs(params_list),
        loading=loading,
        obs_sd=obs_sd,
        factors=factors,
        trend=level,
        slope=slope,
        seasonal=seasonal,
        labels=IndicatorSequence(labels, dfm.indicator_support(k)),
        events=list(events),
    )
    return StudyData(y=y, spec=spec, truth=truth)


# ---------------------------------------------------------------------------
# recovery metrics

def break_probabilities(label_freq, k):
    """Split posterior label frequencies into per-component break curves.

    label_freq is (n, 4k + 1) with rows summing to one. Returns a dict
    (component, kind) -> (n,) probability of that break type at each
    transition index, summed over the two break sizes.
    """
    label_freq = np.asarray(label_freq, dtype=float)
    out = {}
    for i in range(k):
        for kind in ("level", "slope"):
            cols = [dfm.label_of(i, kind, s, k) for s in range(2)]
            out[(i, kind)] = label_freq[:, cols].sum(axis=1)
    return out


def window_mass(prob, event, half_width=2):
    """Posterior mass of the event's break type within +-half_width
    transitions of the planted time."""
    tau = event.transition_index
    lo = max(tau - half_width, 0)
    hi = min(tau + half_width + 1, prob.shape[0])
    return float(prob[lo:hi].sum())


def spurious_mass(prob_by_type, events, half_width=2, threshold=0.5):
    """Times where a break type carries mass >= threshold with no planted
    event of that type within +-half_width. Returns (component, kind, t)."""
    hits = []
    for (comp, kind), prob in prob_by_type.items():
        allowed = np.zeros(prob.shape[0], dtype=bool)
        for ev in events:
            if ev.component == comp and ev.kind == kind:
                tau = ev.transition_index
                lo = max(tau - half_width, 0)
                hi = min(tau + half_width + 1, prob.shape[0])
                allowed[lo:hi] = True
        for t in np.flatnonzero((prob >= threshold) & ~allowed):
            hits.append((comp, kind, int(t)))
    return hits


def trend_rmse(trend_estimate, trend_truth):
    """Root mean squared trend error per component."""
    diff = np.asarray(trend_estimate) - np.asarray(trend_truth)
    return np.sqrt(np.mean(diff ** 2, axis=0))


def smallest_level_break(events):
    sizes = [abs(ev.size) for ev in events if ev.kind == "level"]
    if not sizes:
        raise DimensionError("no level breaks planted")
    return min(sizes)
