"""Bayesian changepoint detection in conditionally Gaussian state space models."""

from .errors import (
    CgssmError,
    ConfigError,
    DataFormatError,
    DegenerateBasisError,
    DegenerateRegressionError,
    DimensionError,
    ImpossibleStateError,
    NumericalError,
    ReductionRankError,
    SingularInnovationError,
    SweepError,
    ZeroVarianceChainError,
)
from .ssm import (
    CgssModel,
    IndicatorSequence,
    SystemMatrices,
    constant_provider,
    null_indicators,
    simulate,
)
from .kalman import (
    FilterState,
    StateRegression,
    filter_loglik,
    filter_step,
    joint_state_beta_draw,
    run_filter,
    simulation_smoother,
    smoothed_mean,
)
from .indicators import (
    BackwardCache,
    IndicatorPrior,
    backward_pass,
    backward_step,
    future_loglik,
    iid_prior,
    sample_indicators,
)
from .reduction import ObservationReduction, observation_reduction, reduce_model
from .dfm import ComponentParams, DfmSpec, PriorConfig
from .eof import EofBasis, compute_eof
from .mcmc import (
    ChainOutput,
    SamplerConfig,
    adapt_rwmh,
    gibbs_sweep,
    inefficiency_factor,
    run_chain,
)
from .io import (
    FitConfig,
    GridDataset,
    SeriesDataset,
    load_csv,
    load_grid,
    parse_fit_config,
    save_csv,
    save_grid,
)
from .simstudy import BreakEvent, make_study

__version__ = "0.1.0"
