"""Adaptive-Metropolis particle MCMC over the static parameters.

The sampler targets the joint posterior of the static parameter vector and
the latent factor paths. Each iteration proposes a new parameter vector from
a two-component Gaussian random-walk mixture -- an adaptive component scaled
by ``2.38^2/d`` times the running posterior covariance and a fixed safeguard
component scaled by ``0.1^2/d`` -- runs the Rao-Blackwellised SIR filter at
the proposal to obtain an unbiased marginal-likelihood estimate and one
latent trajectory, and accepts with the pseudo-marginal Metropolis ratio.
The stored likelihood estimate of the current state is never recomputed,
which is what keeps the sampler exact despite the noisy likelihood.

Positive variance-like parameters are proposed on the log scale; the
change-of-variables term enters the acceptance ratio through
``ParameterLayout.log_jacobian``. The running proposal covariance is updated
every iteration with the post-decision chain state, via the one-pass
recursion mu' = mu + (x - mu)/(j+1), S' = S + ((x - mu)(x - mu)' - S)/(j+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .dynamics import DiscretizationConfig, LatentPath
from .model import (
    InvalidParameterError,
    ModelParams,
    RealParams,
    RiskPremia,
    SeasonalWeights,
    to_risk_neutral,
)
from .panel import FuturesPanel
from .rbfilter import FilterCollapseError, InitialStateSpec, rb_sir_filter

__all__ = [
    "PriorSpec",
    "ParameterLayout",
    "AdaptiveState",
    "ChainRecord",
    "ChainConfig",
    "ChainResult",
    "log_prior",
    "sample_from_prior",
    "update_adaptive",
    "adaptive_propose",
    "pmcmc_iteration",
    "run_chain",
]

ADAPTIVE_SCALE = 2.38
FIXED_SCALE = 0.1


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the objective prior.

    Uniform interval bounds for the rate/drift/variance blocks (applied to
    the real parameters and, as a support restriction, to the derived
    risk-neutral ones), inverse-gamma (shape, scale) for each observation
    variance, and flat intervals for premia, seasonal weights and
    correlations. ``enforce_variance_floor`` switches the boundary
    non-attainment restriction 2*mu_v >= 1 (under both measures) on or off.
    """

    beta_bounds: tuple = (0.0, 10.0)
    mu_xi_bounds: tuple = (-10.0, 10.0)
    kappa_xi_bounds: tuple = (0.0, 10.0)
    mu_v_bounds: tuple = (0.0, 10.0)
    kappa_v_bounds: tuple = (0.0, 10.0)
    var_chi_bounds: tuple = (0.0, 10.0)
    var_xi_bounds: tuple = (0.0, 10.0)
    var_v_bounds: tuple = (0.0, 10.0)
    obs_var_shape: float = 1e-3
    obs_var_scale: float = 1e-3
    premia_bounds: tuple = (-5.0, 5.0)
    seasonal_bounds: tuple = (-10.0, 10.0)
    rho_bounds: tuple = (-1.0, 1.0)
    enforce_variance_floor: bool = True


_PREMIA_NAMES = ("lam0", "lam1", "lam2", "lam3", "lam6", "lam7")
_OMEGA_NAMES = tuple(f"omega_{m}" for m in range(2, 13))


def _full_names(n_contracts: int) -> list[str]:
    names = ["beta", "mu_xi", "kappa_xi", "mu_v", "kappa_v",
             "sigma2_chi", "sigma2_xi", "sigma2_v"]
    names += [f"obs_var_{i + 1}" for i in range(n_contracts)]
    names += list(_PREMIA_NAMES)
    names += list(_OMEGA_NAMES)
    names += ["rho_xichi", "rho_vtheta"]
    return names


class ParameterLayout:
    """Mapping between ModelParams and the sampled (free, transformed) vector.

    Variance-like components travel on the log scale. A subset of names may
    be declared free; the rest are frozen at the values of ``base``.
    """

    def __init__(self, n_contracts: int, free: list[str] | None = None,
                 base: ModelParams | None = None):
        self.n_contracts = n_contracts
        self.full_names = _full_names(n_contracts)
        log_names = {"sigma2_chi", "sigma2_xi", "sigma2_v"}
        log_names |= {f"obs_var_{i + 1}" for i in range(n_contracts)}
        self._log_mask_full = np.array([n in log_names for n in self.full_names])
        if free is None:
            self.free_idx = np.arange(len(self.full_names))
        else:
            unknown = set(free) - set(self.full_names)
            if unknown:
                raise ValueError(f"unknown parameter names: {sorted(unknown)}")
            self.free_idx = np.array([self.full_names.index(n) for n in free])
        self.names = [self.full_names[i] for i in self.free_idx]
        self.log_mask = self._log_mask_full[self.free_idx]
        self._base_transformed = (
            self._transform(self.to_natural(base)) if base is not None else None
        )
        if free is not None and base is None:
            raise ValueError("a base ModelParams is required when fixing parameters")

    @property
    def dim(self) -> int:
        return len(self.free_idx)

    def to_natural(self, phi: ModelParams) -> np.ndarray:
        r, pr, w = phi.real, phi.premia, phi.seasonal
        obs = np.broadcast_to(r.obs_var, (self.n_contracts,))
        vec = [r.beta, r.mu_xi, r.kappa_xi, r.mu_v, r.kappa_v,
               r.sigma_chi**2, r.sigma_xi**2, r.sigma_v**2]
        vec += list(obs)
        vec += [pr.lam0_star, pr.lam1_star, pr.lam2_star, pr.lam3_star,
                pr.lam6_star, pr.lam7_star]
        vec += list(w.omega)
        vec += [r.rho_xichi, r.rho_vtheta]
        return np.array(vec, dtype=float)

    def from_natural(self, vec: np.ndarray) -> ModelParams:
        n = self.n_contracts
        real = RealParams(
            beta=vec[0], mu_xi=vec[1], kappa_xi=vec[2], mu_v=vec[3], kappa_v=vec[4],
            sigma_chi=math.sqrt(max(vec[5], 0.0)),
            sigma_xi=math.sqrt(max(vec[6], 0.0)),
            sigma_v=math.sqrt(max(vec[7], 0.0)),
            rho_xichi=vec[8 + n + 6 + 11], rho_vtheta=vec[8 + n + 6 + 11 + 1],
            obs_var=vec[8:8 + n].copy(),
        )
        premia = RiskPremia(
            lam0_star=vec[8 + n], lam1_star=vec[8 + n + 1], lam2_star=vec[8 + n + 2],
            lam3_star=vec[8 + n + 3], lam6_star=vec[8 + n + 4], lam7_star=vec[8 + n + 5],
        )
        seasonal = SeasonalWeights(omega=vec[8 + n + 6:8 + n + 6 + 11].copy())
        return ModelParams(real=real, premia=premia, seasonal=seasonal)

    def _transform(self, natural_full: np.ndarray) -> np.ndarray:
        out = natural_full.copy()
        m = self._log_mask_full
        out[m] = np.log(natural_full[m])
        return out

    def pack(self, phi: ModelParams) -> np.ndarray:
        """ModelParams -> free transformed vector."""
        return self._transform(self.to_natural(phi))[self.free_idx]

    def unpack(self, u: np.ndarray) -> ModelParams:
        """Free transformed vector -> ModelParams (fixed entries from base)."""
        if self._base_transformed is not None:
            full = self._base_transformed.copy()
        else:
            full = np.zeros(len(self.full_names))
        full[self.free_idx] = u
        nat = full.copy()
        m = self._log_mask_full
        nat[m] = np.exp(full[m])
        return self.from_natural(nat)

    def log_jacobian(self, u: np.ndarray) -> float:
        """log |d natural / d transformed| of the free coordinates."""
        return float(np.sum(u[self.log_mask]))


def _log_uniform(x: float, bounds: tuple) -> float:
    lo, hi = bounds
    if not (lo <= x <= hi):
        return -np.inf
    return -math.log(hi - lo)


def _log_invgamma(x: float, shape: float, scale: float) -> float:
    if x <= 0.0:
        return -np.inf
    return shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * math.log(x) - scale / x


def log_prior(phi: ModelParams, spec: PriorSpec) -> float:
    """Natural-space log prior density; ``-inf`` when out of support.

    Support includes the interval bounds on the real block, the same bounds
    applied to the derived risk-neutral block (with strictly positive
    reversion rates, which the futures curve requires), correlations inside
    [-1, 1], and optionally 2*mu_v >= 1 under both measures.
    """
    r, pr, w = phi.real, phi.premia, phi.seasonal
    if min(r.sigma_chi, r.sigma_xi, r.sigma_v) <= 0.0:
        return -np.inf
    if abs(r.rho_xichi) > 1.0 or abs(r.rho_vtheta) > 1.0:
        return -np.inf

    total = 0.0
    for value, bounds in (
        (r.beta, spec.beta_bounds),
        (r.mu_xi, spec.mu_xi_bounds),
        (r.kappa_xi, spec.kappa_xi_bounds),
        (r.mu_v, spec.mu_v_bounds),
        (r.kappa_v, spec.kappa_v_bounds),
        (r.sigma_chi**2, spec.var_chi_bounds),
        (r.sigma_xi**2, spec.var_xi_bounds),
        (r.sigma_v**2, spec.var_v_bounds),
        (r.rho_xichi, spec.rho_bounds),
        (r.rho_vtheta, spec.rho_bounds),
    ):
        total += _log_uniform(value, bounds)
    for lam in (pr.lam0_star, pr.lam1_star, pr.lam2_star, pr.lam3_star,
                pr.lam6_star, pr.lam7_star):
        total += _log_uniform(lam, spec.premia_bounds)
    for om in w.omega:
        total += _log_uniform(om, spec.seasonal_bounds)
    for ov in np.atleast_1d(r.obs_var):
        total += _log_invgamma(float(ov), spec.obs_var_shape, spec.obs_var_scale)
    if not np.isfinite(total):
        return -np.inf

    try:
        rn = to_risk_neutral(r, pr)
    except InvalidParameterError:
        return -np.inf
    if rn.beta_star <= 0.0 or rn.kappa_xi_star <= 0.0 or rn.kappa_v_star < 0.0:
        return -np.inf
    for value, bounds in (
        (rn.beta_star, spec.beta_bounds),
        (rn.mu_xi_star, spec.mu_xi_bounds),
        (rn.kappa_xi_star, spec.kappa_xi_bounds),
        (rn.mu_v_star, spec.mu_v_bounds),
        (rn.kappa_v_star, spec.kappa_v_bounds),
    ):
        if not (bounds[0] <= value <= bounds[1]):
            return -np.inf
    if spec.enforce_variance_floor and (2.0 * r.mu_v < 1.0 or 2.0 * rn.mu_v_star < 1.0):
        return -np.inf
    return total


def sample_from_prior(
    spec: PriorSpec,
    layout: ParameterLayout,
    rng: np.random.Generator,
    max_tries: int = 10000,
) -> ModelParams:
    """Draw the free parameters from their priors, rejecting until the
    composed vector (including derived risk-neutral values) is in support."""
    uniform_bounds = {
        "beta": spec.beta_bounds, "mu_xi": spec.mu_xi_bounds,
        "kappa_xi": spec.kappa_xi_bounds, "mu_v": spec.mu_v_bounds,
        "kappa_v": spec.kappa_v_bounds, "sigma2_chi": spec.var_chi_bounds,
        "sigma2_xi": spec.var_xi_bounds, "sigma2_v": spec.var_v_bounds,
        "rho_xichi": spec.rho_bounds, "rho_vtheta": spec.rho_bounds,
    }
    for name in _PREMIA_NAMES:
        uniform_bounds[name] = spec.premia_bounds
    for name in _OMEGA_NAMES:
        uniform_bounds[name] = spec.seasonal_bounds

    for _ in range(max_tries):
        draw = np.empty(layout.dim)
        for i, name in enumerate(layout.names):
            if name.startswith("obs_var"):
                # inverse-gamma via its gamma reciprocal; tiny shapes make the
                # gamma draw underflow to exact zero now and then
                g = 0.0
                while g == 0.0:
                    g = rng.gamma(spec.obs_var_shape)
                draw[i] = spec.obs_var_scale / g
            else:
                lo, hi = uniform_bounds[name]
                draw[i] = rng.uniform(lo, hi)
        u = draw.copy()
        u[layout.log_mask] = np.log(draw[layout.log_mask])
        phi = layout.unpack(u)
        if np.isfinite(log_prior(phi, spec)):
            return phi
    raise RuntimeError("could not draw an in-support parameter vector from the prior")


@dataclass(frozen=True)
class AdaptiveState:
    """Running mean and covariance of the chain states, plus the update count."""

    mean: np.ndarray
    cov: np.ndarray
    count: int = 0

    @staticmethod
    def initial(dim: int) -> "AdaptiveState":
        return AdaptiveState(mean=np.zeros(dim), cov=np.zeros((dim, dim)), count=0)


def update_adaptive(ad: AdaptiveState, sample: np.ndarray) -> AdaptiveState:
    """One step of the online mean/covariance recursion."""
    x = np.asarray(sample, dtype=float)
    step = 1.0 / (ad.count + 1)
    delta = x - ad.mean
    mean = ad.mean + step * delta
    cov = ad.cov + step * (np.outer(delta, delta) - ad.cov)
    return AdaptiveState(mean=mean, cov=0.5 * (cov + cov.T), count=ad.count + 1)


def _propose(current: np.ndarray, ad: AdaptiveState | None, w1: float,
             rng: np.random.Generator):
    """Mixture random-walk draw; returns (proposal, used_adaptive)."""
    d = len(current)
    if ad is not None and rng.uniform() < w1:
        try:
            chol = np.linalg.cholesky((ADAPTIVE_SCALE**2 / d) * ad.cov)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None and np.all(np.isfinite(chol)):
            return current + chol @ rng.standard_normal(d), True
    return current + (FIXED_SCALE / math.sqrt(d)) * rng.standard_normal(d), False


def adaptive_propose(current: np.ndarray, ad: AdaptiveState | None, w1: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Draw a proposal from the adaptive Gaussian mixture random walk.

    With probability ``w1`` (and a factorizable running covariance) the step
    covariance is ``(2.38^2/d) Sigma_j``; otherwise it is the fixed
    ``(0.1^2/d) I``. Both components are symmetric in ``current``, so the
    proposal density cancels from the Metropolis ratio. Pass ``ad=None`` to
    force the fixed component (warm-up behaviour).
    """
    return _propose(current, ad, w1, rng)[0]


@dataclass
class ChainRecord:
    """One Markov chain state: parameters, latent path, cached estimates."""

    phi: ModelParams
    trajectory: LatentPath
    log_lik_hat: float
    log_prior: float
    accepted: bool
    iteration: int = 0


@dataclass
class ChainConfig:
    """Settings of one sampler run."""

    iterations: int = 20000
    burn_in: int = 5000
    n_particles: int = 200
    w1: float = 0.95
    seed: int = 0
    thin: int = 1
    disc: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    ess_fraction: float = 0.8
    adapt_warmup: int | None = None  # accepted samples before the mixture opens; None -> 2d
    init: ModelParams | str = "prior"
    init_state: InitialStateSpec = field(default_factory=InitialStateSpec.default)
    free: list | None = None
    base: ModelParams | None = None
    snapshot_every: int = 0  # 0 disables adaptive-covariance snapshots

    def __post_init__(self):
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if not (0.0 <= self.w1 <= 1.0):
            raise ValueError("w1 must be in [0, 1]")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass
class ChainResult:
    records: list
    acceptance_rate: float
    accept_flags: np.ndarray
    collapse_count: int
    layout: ParameterLayout
    adaptive_snapshots: list
    config: ChainConfig


def _accept_decision(log_post_new: float, log_post_old: float, u: float) -> bool:
    """Metropolis decision; invariant to shifting both log posteriors."""
    if not np.isfinite(log_post_new):
        return False
    return math.log(u) < log_post_new - log_post_old


def pmcmc_iteration(
    state: ChainRecord,
    panel: FuturesPanel,
    prior_spec: PriorSpec,
    layout: ParameterLayout,
    ad: AdaptiveState,
    cfg: ChainConfig,
    rng: np.random.Generator,
    n_accepted: int = 0,
):
    """One pseudo-marginal Metropolis step.

    Out-of-support proposals are rejected without running the filter; a
    collapsed filter counts as a rejection. The adaptive state is always
    updated with the post-decision chain state. Returns
    ``(new_state, new_ad, info)`` where ``info`` flags acceptance and
    filter collapses.
    """
    warmup = cfg.adapt_warmup if cfg.adapt_warmup is not None else 2 * layout.dim
    ad_for_proposal = ad if (n_accepted >= warmup and ad.count > 0) else None
    current_u = layout.pack(state.phi)
    proposal_u = adaptive_propose(current_u, ad_for_proposal, cfg.w1, rng)
    phi_new = layout.unpack(proposal_u)
    lp_new = log_prior(phi_new, prior_spec)
    info = {"accepted": False, "collapsed": False, "filter_run": False}

    new_state = state
    if np.isfinite(lp_new):
        lp_new += layout.log_jacobian(proposal_u)
        info["filter_run"] = True
        filter_seed = int(rng.integers(0, 2**63 - 1))
        try:
            res = rb_sir_filter(
                phi_new, panel, cfg.n_particles, cfg.disc, filter_seed,
                init=cfg.init_state, ess_fraction=cfg.ess_fraction,
            )
        except FilterCollapseError:
            info["collapsed"] = True
            res = None
        if res is not None:
            u = rng.uniform()
            if _accept_decision(res.log_marginal_likelihood + lp_new,
                                state.log_lik_hat + state.log_prior, u):
                new_state = ChainRecord(
                    phi=phi_new,
                    trajectory=res.trajectory,
                    log_lik_hat=res.log_marginal_likelihood,
                    log_prior=lp_new,
                    accepted=True,
                    iteration=state.iteration + 1,
                )
                info["accepted"] = True
    if not info["accepted"]:
        new_state = replace(state, accepted=False, iteration=state.iteration + 1)
    new_ad = update_adaptive(ad, layout.pack(new_state.phi))
    return new_state, new_ad, info


def run_chain(panel: FuturesPanel, prior_spec: PriorSpec, cfg: ChainConfig) -> ChainResult:
    """Run the full sampler; deterministic given ``cfg.seed``.

    The initial state is either drawn from the priors or supplied as a
    ModelParams in ``cfg.init``; its filter run must succeed. Records are
    retained after burn-in, every ``cfg.thin``-th iteration.
    """
    rng = np.random.default_rng(cfg.seed)
    layout = ParameterLayout(panel.n_contracts, free=cfg.free,
                             base=cfg.base if cfg.free is not None else None)

    if isinstance(cfg.init, ModelParams):
        phi0 = cfg.init
    elif cfg.init == "prior":
        phi0 = sample_from_prior(prior_spec, layout, rng)
    else:
        raise ValueError("cfg.init must be a ModelParams or 'prior'")
    lp0 = log_prior(phi0, prior_spec)
    if not np.isfinite(lp0):
        raise InvalidParameterError("initial parameters are outside the prior support")
    lp0 += layout.log_jacobian(layout.pack(phi0))

    res0 = rb_sir_filter(
        phi0, panel, cfg.n_particles, cfg.disc, int(rng.integers(0, 2**63 - 1)),
        init=cfg.init_state, ess_fraction=cfg.ess_fraction,
    )
    state = ChainRecord(
        phi=phi0, trajectory=res0.trajectory,
        log_lik_hat=res0.log_marginal_likelihood, log_prior=lp0,
        accepted=True, iteration=0,
    )
    ad = AdaptiveState.initial(layout.dim)
    ad = update_adaptive(ad, layout.pack(phi0))

    records: list[ChainRecord] = []
    accept_flags = np.zeros(cfg.iterations, dtype=bool)
    snapshots: list[np.ndarray] = []
    collapse_count = 0
    n_accepted = 0
    for j in range(cfg.iterations):
        state, ad, info = pmcmc_iteration(
            state, panel, prior_spec, layout, ad, cfg, rng, n_accepted=n_accepted,
        )
        accept_flags[j] = info["accepted"]
        n_accepted += int(info["accepted"])
        collapse_count += int(info["collapsed"])
        if j >= cfg.burn_in and (j - cfg.burn_in) % cfg.thin == 0:
            records.append(state)
        if cfg.snapshot_every and (j + 1) % cfg.snapshot_every == 0:
            snapshots.append(ad.cov.copy())

    return ChainResult(
        records=records,
        acceptance_rate=float(np.mean(accept_flags)),
        accept_flags=accept_flags,
        collapse_count=collapse_count,
        layout=layout,
        adaptive_snapshots=snapshots,
        config=cfg,
    )
