"""Joint calibration and filtering of a four-factor seasonal commodity
futures model: closed-form pricing, Milstein simulation, a Rao-Blackwellised
SIR particle filter, and an adaptive-Metropolis particle MCMC sampler."""

from .model import (
    BCoefficients,
    ContractSpec,
    InvalidParameterError,
    LatentState,
    ModelParams,
    RealParams,
    RiskNeutralParams,
    RiskPremia,
    SeasonalWeights,
    b_coefficients,
    log_futures_curve,
    seasonal_component,
    to_risk_neutral,
)
from .dynamics import (
    DiscretizationConfig,
    LatentPath,
    StepShocks,
    draw_step_shocks,
    euler_step_long_short,
    levy_area_pair,
    milstein_step_vol,
    rho_p,
    simulate_latent_path,
)
from .rbfilter import (
    DegenerateInnovationError,
    FilterCollapseError,
    FilterResult,
    InitialStateSpec,
    LinearGaussianSpec,
    assemble_ssm,
    ess,
    kalman_step,
    rb_sir_filter,
    stratified_resample,
)
from .mcmc import (
    AdaptiveState,
    ChainConfig,
    ChainRecord,
    ChainResult,
    ParameterLayout,
    PriorSpec,
    adaptive_propose,
    log_prior,
    pmcmc_iteration,
    run_chain,
    sample_from_prior,
    update_adaptive,
)
from .analytics import PosteriorSummary, PredictiveCurve, predictive_futures, summarize_chain
from .panel import (
    FuturesPanel,
    PanelFormatError,
    contract_schedule,
    generate_panel,
    parse_panel,
    write_panel,
)
from .config import ConfigError, RunConfig, parse_config, write_config

__version__ = "0.1.0"
