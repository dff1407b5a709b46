"""Component-model assembly checks against direct recursions."""

import numpy as np
import pytest
from scipy import integrate, stats

from cgssm import dfm
from cgssm.errors import ConfigError, DimensionError
from cgssm.kalman import filter_loglik


def make_params(rng, k_r, damping=None, frequency=None):
    return dfm.ComponentParams(
        damping=0.85 if damping is None else damping,
        frequency=0.27 if frequency is None else frequency,
        scale=0.5,
        coef=np.append(rng.normal(size=k_r), rng.normal()),
        include=np.ones(k_r, dtype=bool),
        level_sizes=np.array([4.0, 14.0]),
        slope_sizes=np.array([0.25, 0.5]),
    )


def make_spec(rng, n=30, k=2, k_r=3, presample=None):
    return dfm.DfmSpec(
        n_components=k,
        regressors=rng.normal(size=(n, k_r)),
        break_prob=0.05,
        presample_regressor=presample,
    )


def test_component_transition_entries():
    params = dfm.ComponentParams(
        damping=0.9, frequency=0.3, scale=1.0,
        coef=np.zeros(1), include=np.zeros(0, dtype=bool),
        level_sizes=np.ones(2), slope_sizes=np.ones(2),
    )
    f = dfm.component_transition(params)
    c, s = 0.9 * np.cos(0.3), 0.9 * np.sin(0.3)
    want = np.array([
        [c, s, 0, 0],
        [-s, c, 0, 0],
        [0, 0, 1, 1],
        [0, 0, 0, 1],
    ])
    assert np.allclose(f, want, atol=1e-15)
    # zero frequency reduces the cycle to a plain damped pair
    params.frequency = 0.0
    f0 = dfm.component_transition(params)
    assert np.allclose(f0[:2, :2], np.diag([0.9, 0.9]), atol=1e-15)
    assert np.max(np.abs(np.linalg.eigvals(f0[:2, :2]))) == pytest.approx(0.9)


def test_label_mapping_round_trip():
    k = 2
    assert dfm.label_fields(0, k) is None
    seen = set()
    for label in range(1, 4 * k + 1):
        comp, kind, size_idx = dfm.label_fields(label, k)
        assert dfm.label_of(comp, kind, size_idx, k) == label
        seen.add((comp, kind, size_idx))
    assert len(seen) == 4 * k
    # level labels come first, ordered by component then size
    assert dfm.label_fields(1, k) == (0, "level", 0)
    assert dfm.label_fields(2, k) == (0, "level", 1)
    assert dfm.label_fields(3, k) == (1, "level", 0)
    assert dfm.label_fields(4, k) == (1, "level", 1)
    assert dfm.label_fields(5, k) == (0, "slope", 0)
    assert dfm.label_fields(8, k) == (1, "slope", 1)
    assert dfm.indicator_support(1) == (
        "none", "level_c1_small", "level_c1_large",
        "slope_c1_small", "slope_c1_large",
    )


def test_indicator_prior_masses():
    rng = np.random.default_rng(0)
    spec = make_spec(rng, k=2)
    prior = dfm.indicator_prior(spec)
    assert prior.size == 9
    probs = np.exp([prior.log_prior(3, s, None) for s in range(9)])
    assert probs[0] == pytest.approx(0.95, abs=1e-12)
    assert np.allclose(probs[1:], 0.05 / 8, atol=1e-12)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_noise_diag_table_structure():
    rng = np.random.default_rng(1)
    spec = make_spec(rng, k=2)
    params = [make_params(rng, spec.k_r) for _ in range(2)]
    table = dfm.noise_diag_table(params)
    assert table.shape == (9, 8)
    # cycle rows always carry the component scale, trend rows only on breaks
    for lab in range(9):
        for i in range(2):
            assert table[lab, 4 * i + dfm.CYCLE] == params[i].scale
            assert table[lab, 4 * i + dfm.CYCLE_AUX] == params[i].scale
    assert np.all(table[0, [2, 3, 6, 7]] == 0.0)
    for lab in range(1, 9):
        comp, kind, size_idx = dfm.label_fields(lab, 2)
        row = 4 * comp + (dfm.LEVEL if kind == "level" else dfm.SLOPE)
        sizes = params[comp].level_sizes if kind == "level" \
            else params[comp].slope_sizes
        hot = table[lab, [2, 3, 6, 7]]
        assert np.sum(hot != 0.0) == 1
        assert table[lab, row] == pytest.approx(
            params[comp].scale * sizes[size_idx])


def test_regression_design_entries():
    rng = np.random.default_rng(2)
    w0 = rng.normal(size=3)
    spec = make_spec(rng, n=6, k=2, k_r=3, presample=w0)
    params = [make_params(rng, 3), make_params(rng, 3, damping=0.7,
                                               frequency=0.9)]
    loadings, init_loading = dfm.regression_design(spec, params)
    assert loadings.shape == (6, 8, 8)
    assert init_loading.shape == (8, 8)
    w = spec.regressors
    for i, prm in enumerate(params):
        c = prm.damping * np.cos(prm.frequency)
        s = prm.damping * np.sin(prm.frequency)
        cols = slice(4 * i, 4 * i + 3)
        # first transition looks back at the presample covariates
        assert np.allclose(loadings[0, 4 * i + dfm.CYCLE, cols], w[0] - c * w0)
        assert np.allclose(loadings[0, 4 * i + dfm.CYCLE_AUX, cols], s * w0)
        for t in range(1, 5):
            assert np.allclose(
                loadings[t, 4 * i + dfm.CYCLE, cols], w[t] - c * w[t - 1])
            assert np.allclose(
                loadings[t, 4 * i + dfm.CYCLE_AUX, cols], s * w[t - 1])
        assert np.allclose(init_loading[4 * i + dfm.CYCLE, cols], w0)
        assert init_loading[4 * i + dfm.LEVEL, 4 * i + 3] == 1.0
    # trend rows and the last slot stay clear of covariate effects
    assert np.all(loadings[:, [2, 3, 6, 7], :] == 0.0)
    assert np.all(loadings[5] == 0.0)


def test_model_matches_direct_recursions():
    """Propagating the assembled matrices must reproduce the component
    equations: damped cycle plus local trend plus covariate transfer."""
    rng = np.random.default_rng(7)
    n, k, k_r, p = 25, 2, 3, 5
    w0 = rng.normal(size=k_r)
    spec = make_spec(rng, n=n, k=k, k_r=k_r, presample=w0)
    params = [make_params(rng, k_r),
              make_params(rng, k_r, damping=0.7, frequency=0.9)]
    loading = rng.normal(size=(p, k))
    obs_sd = rng.uniform(0.1, 0.5, size=p)
    coef = dfm.stack_coefs(params)
    model = dfm.build_model(spec, params, loading, obs_sd, coef=coef)

    labels = np.zeros(n, dtype=int)
    labels[5] = dfm.label_of(0, "level", 1, k)
    labels[11] = dfm.label_of(1, "slope", 0, k)
    labels[17] = dfm.label_of(1, "level", 0, k)

    u = rng.normal(size=(n, model.r))
    x = np.empty((n, model.m))
    x0 = np.empty(model.m)
    cycle = np.empty((n, k))
    aux = np.empty((n, k))
    level = np.empty((n, k))
    slope = np.empty((n, k))
    for i, prm in enumerate(params):
        cycle[0, i] = rng.normal()
        aux[0, i] = rng.normal()
        level[0, i] = prm.coef[-1]
        slope[0, i] = 0.3 * rng.normal()
        x0[4 * i + 0] = cycle[0, i] + w0 @ prm.coef[:-1]
        x0[4 * i + 1] = aux[0, i]
        x0[4 * i + 2] = level[0, i]
        x0[4 * i + 3] = slope[0, i]
    x[0] = x0

    w = spec.regressors
    table = dfm.noise_diag_table(params)
    for t in range(n - 1):
        mats = model.mats(t, labels[t], None)
        x[t + 1] = (mats.state_offset + mats.transition @ x[t]
                    + mats.noise_loading @ u[t])
        for i, prm in enumerate(params):
            c = prm.damping * np.cos(prm.frequency)
            s = prm.damping * np.sin(prm.frequency)
            cycle[t + 1, i] = (c * cycle[t, i] + s * aux[t, i]
                               + prm.scale * u[t, 4 * i + 0])
            aux[t + 1, i] = (-s * cycle[t, i] + c * aux[t, i]
                             + prm.scale * u[t, 4 * i + 1])
            level[t + 1, i] = (level[t, i] + slope[t, i]
                               + table[labels[t], 4 * i + 2] * u[t, 4 * i + 2])
            slope[t + 1, i] = (slope[t, i]
                               + table[labels[t], 4 * i + 3] * u[t, 4 * i + 3])

    for t in range(n):
        prev = w[t - 1] if t > 0 else w0
        for i, prm in enumerate(params):
            shift = prev @ prm.coef[:-1]
            assert x[t, 4 * i + 0] == pytest.approx(
                cycle[t, i] + shift, abs=1e-10)
            assert x[t, 4 * i + 1] == pytest.approx(aux[t, i], abs=1e-10)
            assert x[t, 4 * i + 2] == pytest.approx(level[t, i], abs=1e-10)
            assert x[t, 4 * i + 3] == pytest.approx(slope[t, i], abs=1e-10)
        # observation mean stacks cycle + trend + covariate transfer
        mats = model.mats(t, labels[t], None)
        comp_values = np.array([
            cycle[t, i] + level[t, i] + prev @ params[i].coef[:-1]
            for i in range(k)
        ])
        assert np.allclose(mats.obs_loading @ x[t], loading @ comp_values,
                           atol=1e-10)


def test_build_regression_matches_folded_model():
    rng = np.random.default_rng(3)
    n, k, k_r, p = 20, 2, 2, 4
    spec = make_spec(rng, n=n, k=k, k_r=k_r,
                     presample=rng.normal(size=k_r))
    params = [make_params(rng, k_r),
              make_params(rng, k_r, damping=0.6, frequency=0.4)]
    loading = rng.normal(size=(p, k))
    obs_sd = rng.uniform(0.2, 0.6, size=p)
    coef = dfm.stack_coefs(params)

    from cgssm.ssm import null_indicators, simulate
    folded = dfm.build_model(spec, params, loading, obs_sd, coef=coef)
    labels = null_indicators(n, dfm.indicator_support(k))
    labels.labels[8] = 1
    y, _ = simulate(folded, labels, None, rng)

    reg = dfm.build_regression(spec, params, loading, obs_sd)
    assert reg.q == spec.coef_len
    shifted = reg.shifted_model(coef)
    a = filter_loglik(folded, labels, None, y)
    b = filter_loglik(shifted, labels, None, y)
    assert a == pytest.approx(b, abs=1e-9)


def test_initial_cov_entries():
    rng = np.random.default_rng(4)
    spec = make_spec(rng, k=2)
    params = [make_params(rng, spec.k_r),
              make_params(rng, spec.k_r, damping=0.5)]
    cov = dfm.initial_cov(spec, params)
    stat0 = 0.25 / (1 - 0.85 ** 2)
    stat1 = 0.25 / (1 - 0.25)
    assert cov[0, 0] == pytest.approx(stat0)
    assert cov[1, 1] == pytest.approx(stat0)
    assert cov[4, 4] == pytest.approx(stat1)
    assert cov[2, 2] == cov[3, 3] == 1e6
    assert np.allclose(cov, np.diag(np.diag(cov)))


def test_spec_validation():
    rng = np.random.default_rng(5)
    with pytest.raises(ConfigError):
        dfm.DfmSpec(n_components=1, regressors=rng.normal(size=(10, 2)),
                    break_prob=0.0)
    with pytest.raises(DimensionError):
        dfm.DfmSpec(n_components=1, regressors=rng.normal(size=10))
    with pytest.raises(DimensionError):
        dfm.ComponentParams(
            damping=0.9, frequency=0.1, scale=1.0,
            coef=np.zeros(2), include=np.zeros(2, dtype=bool),
            level_sizes=np.ones(2), slope_sizes=np.ones(2),
        )
    bad = dfm.PriorConfig(coef_sd=-1.0)
    with pytest.raises(ConfigError):
        bad.validate()


def test_excluded_coefs_zeroed():
    params = dfm.ComponentParams(
        damping=0.9, frequency=0.1, scale=1.0,
        coef=np.array([1.0, 2.0, 3.0, 4.0]),
        include=np.array([True, False, True]),
        level_sizes=np.ones(2), slope_sizes=np.ones(2),
    )
    assert np.allclose(params.coef, [1.0, 0.0, 3.0, 4.0])
    mask = dfm.stack_include([params])
    assert mask.tolist() == [True, False, True, True]


def test_root_inv_gamma_density():
    df, s = 10.0, 0.1
    pdf = lambda x: np.exp(dfm.root_inv_gamma_logpdf(x, df, s))
    total, _ = integrate.quad(pdf, 0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)
    mean, _ = integrate.quad(lambda x: x * pdf(x), 0, np.inf)
    assert mean == pytest.approx(dfm.root_inv_gamma_mean(df, s), abs=1e-9)
    # squaring a draw must land in the matching inverse gamma law
    ig = stats.invgamma(a=df / 2, scale=s / 2)
    for x in (0.05, 0.1, 0.3):
        assert pdf(x) == pytest.approx(2 * x * ig.pdf(x * x), rel=1e-12)
    assert dfm.root_inv_gamma_logpdf(-0.1, df, s) == -np.inf
    assert dfm.root_inv_gamma_logpdf(0.0, df, s) == -np.inf


def test_packaged_prior_means():
    pri = dfm.PriorConfig()
    pri.validate()
    assert dfm.root_inv_gamma_mean(
        pri.cycle_scale_df, pri.cycle_scale_s) == pytest.approx(0.108, abs=2e-3)
    assert dfm.root_inv_gamma_mean(
        pri.level_small_df, pri.level_small_s) == pytest.approx(4.37, abs=0.01)
    assert dfm.root_inv_gamma_mean(
        pri.level_large_df, pri.level_large_s) == pytest.approx(13.82, abs=0.02)
    assert dfm.root_inv_gamma_mean(
        pri.slope_small_df, pri.slope_small_s) == pytest.approx(0.252, abs=1e-3)
    assert dfm.root_inv_gamma_mean(
        pri.slope_large_df, pri.slope_large_s) == pytest.approx(0.505, abs=1e-3)
    assert pri.damping_a / (pri.damping_a + pri.damping_b) == pytest.approx(
        0.909, abs=1e-3)
    mid = 0.5 * (pri.freq_lo + pri.freq_hi)
    assert mid == pytest.approx(2 * np.pi / 23, abs=1e-12)


def test_stretched_beta_density():
    lo, hi = 0.0, dfm.DEFAULT_FREQ_HI
    pdf = lambda x: np.exp(dfm.stretched_beta_logpdf(x, 2.0, 2.0, lo, hi))
    total, _ = integrate.quad(pdf, lo, hi)
    assert total == pytest.approx(1.0, abs=1e-10)
    mean, _ = integrate.quad(lambda x: x * pdf(x), lo, hi)
    assert mean == pytest.approx(0.5 * (lo + hi), abs=1e-10)
    assert dfm.stretched_beta_logpdf(hi + 0.01, 2, 2, lo, hi) == -np.inf
    assert dfm.stretched_beta_logpdf(lo, 2, 2, lo, hi) == -np.inf


def test_gamma_logpdf_matches_scipy():
    shape, rate = 5.0, 0.005
    ref = stats.gamma(a=shape, scale=1.0 / rate)
    for x in (10.0, 500.0, 2000.0):
        assert dfm.gamma_logpdf(x, shape, rate) == pytest.approx(
            ref.logpdf(x), abs=1e-10)
    assert dfm.gamma_logpdf(0.0, shape, rate) == -np.inf


def test_component_prior_support():
    rng = np.random.default_rng(6)
    pri = dfm.PriorConfig()
    params = make_params(rng, 3)
    base = dfm.log_prior_component(params, pri)
    assert np.isfinite(base)
    for bad in (
        dict(damping=1.0), dict(damping=0.0),
        dict(frequency=pri.freq_hi + 0.01), dict(frequency=-0.1),
        dict(scale=0.0),
    ):
        probe = make_params(rng, 3)
        for name, value in bad.items():
            setattr(probe, name, value)
        assert dfm.log_prior_component(probe, pri) == -np.inf
    # toggling one flag off swaps a slab weight for the exclusion odds
    off = make_params(rng, 3)
    off.include = np.array([True, True, False])
    off.coef = off.coef.copy()
    off.coef[2] = 0.0
    dropped = dfm.ComponentParams(
        damping=off.damping, frequency=off.frequency, scale=off.scale,
        coef=off.coef, include=off.include,
        level_sizes=off.level_sizes, slope_sizes=off.slope_sizes,
    )
    same = make_params(rng, 3)
    same.coef = dropped.coef.copy()
    same.coef[2] = 0.0
    got = dfm.log_prior_component(dropped, pri)
    ref = dfm.log_prior_component(same, pri)
    slab0 = -0.5 * np.log(2 * np.pi * pri.coef_sd ** 2)
    assert got == pytest.approx(ref - slab0, abs=1e-12)


def test_loading_prior():
    pri = dfm.PriorConfig()
    free = [np.array([0.5, -0.2]), np.array([1.0])]
    precs = [100.0, 50.0]
    got = dfm.log_prior_loading(free, precs, pri)
    want = 0.0
    for f, prec in zip(free, precs):
        want += stats.gamma(a=5.0, scale=1 / 0.005).logpdf(prec)
        want += stats.norm(scale=prec ** -0.5).logpdf(f).sum()
    assert got == pytest.approx(want, abs=1e-10)


def test_frequency_reflection_keeps_likelihood():
    # reversing the cycle's rotation direction transposes the cycle block
    # but leaves the law of the observed row unchanged
    from cgssm.kernels import filter_loglik_structured, simulate_structured, \
        structured_from_dfm
    rng = np.random.default_rng(17)
    spec = make_spec(rng, n=25, k=2, k_r=2)
    freq = 0.27
    params = [make_params(rng, 2, frequency=freq) for _ in range(2)]
    mirrored = [
        dfm.ComponentParams(
            damping=par.damping, frequency=2.0 * np.pi - freq,
            scale=par.scale, coef=par.coef.copy(),
            include=par.include.copy(),
            level_sizes=par.level_sizes, slope_sizes=par.slope_sizes)
        for par in params
    ]
    loading = rng.normal(size=(4, 2))
    noise_sd = np.full(4, 0.3)
    sm = structured_from_dfm(spec, params, loading, noise_sd)
    sm_mirror = structured_from_dfm(spec, mirrored, loading, noise_sd)
    labels = np.zeros(25, dtype=np.int64)
    labels[10] = 1
    y, _ = simulate_structured(sm, labels, np.random.default_rng(3))
    got = filter_loglik_structured(sm, labels, y)
    twin = filter_loglik_structured(sm_mirror, labels, y)
    assert got == pytest.approx(twin, abs=1e-8)
