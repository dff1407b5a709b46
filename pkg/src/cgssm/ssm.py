"""Conditionally Gaussian state space model with per-time indicator labels.

Model, written with 0-based time t = 0..n-1:

    y[t]   = obs_offset[t] + obs_loading[t] @ x[t] + obs_noise[t] @ e[t]
    x[t+1] = state_offset[t] + transition[t] @ x[t] + noise_loading[t] @ u[t]
    x[0]   ~ N(init_mean, init_cov)

with e[t] ~ N(0, I_p) and u[t] ~ N(0, I_r) independent. Every system matrix
may depend on (t, indicator label at t, parameters omega) through a provider
callable. The matrices bundled at index t are the observation equation at t
together with the transition from t to t+1, so the label at t shows up in the
data only from t+1 onwards when it enters noise_loading.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError
from .linalg import psd_factor


@dataclass
class SystemMatrices:
    """One time slice of the model: observation at t, transition t -> t+1."""

    obs_offset: np.ndarray    # (p,)
    obs_loading: np.ndarray   # (p, m)
    obs_noise: np.ndarray     # (p, p)
    state_offset: np.ndarray  # (m,)
    transition: np.ndarray    # (m, m)
    noise_loading: np.ndarray  # (m, r)


@dataclass
class IndicatorSequence:
    """Per-time mixture labels. Label 0 is always the no-break state."""

    labels: np.ndarray        # (n,) integer labels in [0, size)
    support: tuple            # human-readable meaning of each label

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise DimensionError("indicator labels must be a vector")
        size = len(self.support)
        if size < 1:
            raise DimensionError("indicator support must be non-empty")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= size):
            raise DimensionError(
                f"indicator labels outside [0, {size})"
            )

    @property
    def n(self):
        return self.labels.size

    @property
    def size(self):
        return len(self.support)

    def copy(self):
        return IndicatorSequence(self.labels.copy(), self.support)


def null_indicators(n, support):
    return IndicatorSequence(np.zeros(n, dtype=np.int64), support)


@dataclass
class CgssModel:
    """Dimensions plus a provider mapping (t, label, omega) to matrices.

    The provider must be pure: repeated calls with equal arguments must
    return equal matrices. Lazy evaluation keeps indicator sweeps cheap,
    nothing is materialized up front.
    """

    n: int
    p: int
    m: int
    r: int
    provider: Callable[[int, int, object], SystemMatrices]
    init_mean: np.ndarray
    init_cov: np.ndarray
    validate: bool = field(default=True)

    def __post_init__(self):
        self.init_mean = np.asarray(self.init_mean, dtype=float).reshape(self.m)
        self.init_cov = np.asarray(self.init_cov, dtype=float).reshape(self.m, self.m)

    def mats(self, t, label, omega):
        """Provider call with shape validation against (p, m, r)."""
        out = self.provider(t, label, omega)
        if self.validate:
            checks = (
                ("obs_offset", out.obs_offset, (self.p,)),
                ("obs_loading", out.obs_loading, (self.p, self.m)),
                ("obs_noise", out.obs_noise, (self.p, self.p)),
                ("state_offset", out.state_offset, (self.m,)),
                ("transition", out.transition, (self.m, self.m)),
                ("noise_loading", out.noise_loading, (self.m, self.r)),
            )
            for name, arr, want in checks:
                if np.shape(arr) != want:
                    raise DimensionError(
                        f"provider returned {name} with shape {np.shape(arr)}, "
                        f"expected {want} (t={t}, label={label})"
                    )
        return out


def constant_provider(mats):
    """Wrap a fixed SystemMatrices as a provider ignoring (t, label, omega)."""

    def provider(t, label, omega):
        return mats

    return provider


def simulate(model, indicators, omega, rng):
    """Draw one path (y, x) from the model under the given indicator labels.

    rng is an integer seed or a numpy Generator. Returns arrays of shape
    (n, p) and (n, m).
    """
    rng = np.random.default_rng(rng)
    n, p, m = model.n, model.p, model.m
    if indicators.n != n:
        raise DimensionError(
            f"indicator length {indicators.n} does not match model n={n}"
        )
    x = np.empty((n, m))
    y = np.empty((n, p))
    root0 = psd_factor(model.init_cov)
    x[0] = model.init_mean + root0 @ rng.standard_normal(root0.shape[1])
    for t in range(n):
        mats = model.mats(t, int(indicators.labels[t]), omega)
        y[t] = (
            mats.obs_offset
            + mats.obs_loading @ x[t]
            + mats.obs_noise @ rng.standard_normal(p)
        )
        if t + 1 < n:
            x[t + 1] = (
                mats.state_offset
                + mats.transition @ x[t]
                + mats.noise_loading @ rng.standard_normal(model.r)
            )
    return y, x
