"""Four-factor commodity spot model: parameter blocks, measure change, seasonality
and the closed-form log futures curve.

The log spot price decomposes as ``ln S_t = chi + xi + theta + f(t)`` where

* ``chi``   -- short-term mean-reverting deviation,
* ``xi``    -- long-term equilibrium factor, itself mean reverting,
* ``theta`` -- log-price component driven by the stochastic variance ``v``,
* ``f(t)``  -- deterministic monthly seasonal offset (January = 0).

Futures prices are exponentially affine in ``(xi, chi, theta)`` with maturity
loadings computed by :func:`b_coefficients`; the variance factor carries no
loading, so the curve is invariant to ``v``.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidParameterError",
    "RealParams",
    "RiskPremia",
    "RiskNeutralParams",
    "SeasonalWeights",
    "LatentState",
    "ContractSpec",
    "BCoefficients",
    "ModelParams",
    "PRICING_LAMBDA4",
    "seasonal_component",
    "to_risk_neutral",
    "b_coefficients",
    "log_futures_curve",
]

# Premium coefficient on the v*dt drift of theta under the pricing measure.
# Fixed at -1/2: this is the unique value for which exp(theta) is a martingale,
# so the variance factor drops out of the futures price entirely.
PRICING_LAMBDA4 = -0.5


class InvalidParameterError(ValueError):
    """Raised when a parameter block violates its admissibility constraints."""


@dataclass(frozen=True)
class RealParams:
    """Physical-measure parameters of the four latent factors.

    Rates and drifts are per day, diffusion coefficients per sqrt(day);
    ``obs_var`` holds one observation-noise variance per contract
    (log-price squared units).
    """

    beta: float
    mu_xi: float
    kappa_xi: float
    mu_v: float
    kappa_v: float
    sigma_chi: float
    sigma_xi: float
    sigma_v: float
    rho_xichi: float = 0.0
    rho_vtheta: float = 0.0
    obs_var: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        object.__setattr__(self, "obs_var", np.atleast_1d(np.asarray(self.obs_var, dtype=float)))

    def validate(self, require_variance_floor: bool = False) -> None:
        """Check admissibility.

        The boundary non-attainment condition ``2*mu_v >= 1`` is optional:
        it is a prior-support restriction, not a requirement for simulating
        or filtering, and the standard synthetic benchmark violates it.
        """
        if min(self.sigma_chi, self.sigma_xi, self.sigma_v) <= 0.0:
            raise InvalidParameterError("diffusion coefficients must be positive")
        if min(self.beta, self.kappa_xi, self.kappa_v) < 0.0:
            raise InvalidParameterError("mean-reversion rates must be nonnegative")
        if abs(self.rho_xichi) > 1.0 or abs(self.rho_vtheta) > 1.0:
            raise InvalidParameterError("correlations must lie in [-1, 1]")
        if require_variance_floor and 2.0 * self.mu_v < 1.0:
            raise InvalidParameterError("variance drift must satisfy 2*mu_v >= 1")
        if np.any(self.obs_var <= 0.0):
            raise InvalidParameterError("observation variances must be positive")


@dataclass(frozen=True)
class RiskPremia:
    """Dimensionless premium coefficients mapping real to pricing dynamics.

    ``lam5_star`` is identically zero and ``lam4_star`` is pinned to
    :data:`PRICING_LAMBDA4`; neither is a free parameter.
    """

    lam0_star: float = 0.0
    lam1_star: float = 0.0
    lam2_star: float = 0.0
    lam3_star: float = 0.0
    lam6_star: float = 0.0
    lam7_star: float = 0.0
    lam4_star: float = PRICING_LAMBDA4
    lam5_star: float = 0.0

    def __post_init__(self):
        if self.lam5_star != 0.0:
            raise InvalidParameterError("lam5_star is fixed at zero")


@dataclass(frozen=True)
class RiskNeutralParams:
    """Pricing-measure parameters, derived from (RealParams, RiskPremia) only."""

    beta_star: float
    mu_xi_star: float
    kappa_xi_star: float
    mu_v_star: float
    kappa_v_star: float
    lambda0: float
    lambda4: float
    sigma_chi: float
    sigma_xi: float
    sigma_v: float
    rho_xichi: float
    rho_vtheta: float


@dataclass(frozen=True)
class SeasonalWeights:
    """Monthly log-price offsets for February..December; January is the zero base."""

    omega: np.ndarray = field(default_factory=lambda: np.zeros(11))

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.shape != (11,):
            raise InvalidParameterError("seasonal weights must be 11 values (Feb..Dec)")
        if not np.all(np.isfinite(w)):
            raise InvalidParameterError("seasonal weights must be finite")
        object.__setattr__(self, "omega", w)

    def for_month(self, month: int) -> float:
        return 0.0 if month == 1 else float(self.omega[month - 2])


@dataclass
class LatentState:
    """Factor values on one day. ``v`` is the instantaneous variance, kept >= 0."""

    chi: float
    xi: float
    theta: float
    v: float

    def log_spot(self, date: dt.date, weights: SeasonalWeights) -> float:
        return self.chi + self.xi + self.theta + seasonal_component(date, weights)


@dataclass(frozen=True)
class ContractSpec:
    """A futures contract identified by its maturity date."""

    maturity_date: dt.date

    def tau(self, date: dt.date) -> int:
        """Time to maturity in calendar days as of ``date``."""
        return (self.maturity_date - date).days


@dataclass(frozen=True)
class BCoefficients:
    """Maturity loadings of the log futures price: b0 + b1*xi + b2*chi + b3*theta."""

    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray


@dataclass(frozen=True)
class ModelParams:
    """The full calibrated parameter set: real block, premia and seasonality."""

    real: RealParams
    premia: RiskPremia = field(default_factory=RiskPremia)
    seasonal: SeasonalWeights = field(default_factory=SeasonalWeights)

    def risk_neutral(self) -> RiskNeutralParams:
        return to_risk_neutral(self.real, self.premia)


def seasonal_component(date: dt.date, weights: SeasonalWeights) -> float:
    """Monthly seasonal log-price offset for ``date`` (zero in January)."""
    return weights.for_month(date.month)


def to_risk_neutral(real: RealParams, premia: RiskPremia) -> RiskNeutralParams:
    """Map physical parameters and premia to the pricing-measure block.

    The affine premium specification scales the level/slope coefficients by
    the matching diffusion coefficient and shifts drifts and reversion rates:

        lambda0 = lam0* sigma_chi,  beta*    = beta    + lam1* sigma_chi
        mu_xi*  = mu_xi - lam2* sigma_xi,    kappa_xi* = kappa_xi + lam3* sigma_xi
        mu_v*   = mu_v  - lam6* sigma_v,     kappa_v*  = kappa_v  + lam7* sigma_v

    Raises
    ------
    InvalidParameterError
        If a derived mean-reversion rate comes out negative.
    """
    lambda0 = premia.lam0_star * real.sigma_chi
    lambda1 = premia.lam1_star * real.sigma_chi
    lambda2 = premia.lam2_star * real.sigma_xi
    lambda3 = premia.lam3_star * real.sigma_xi
    lambda6 = premia.lam6_star * real.sigma_v
    lambda7 = premia.lam7_star * real.sigma_v

    beta_star = real.beta + lambda1
    kappa_xi_star = real.kappa_xi + lambda3
    kappa_v_star = real.kappa_v + lambda7
    if beta_star < 0.0 or kappa_xi_star < 0.0 or kappa_v_star < 0.0:
        raise InvalidParameterError("derived mean-reversion rate is negative")

    return RiskNeutralParams(
        beta_star=beta_star,
        mu_xi_star=real.mu_xi - lambda2,
        kappa_xi_star=kappa_xi_star,
        mu_v_star=real.mu_v - lambda6,
        kappa_v_star=kappa_v_star,
        lambda0=lambda0,
        lambda4=premia.lam4_star,
        sigma_chi=real.sigma_chi,
        sigma_xi=real.sigma_xi,
        sigma_v=real.sigma_v,
        rho_xichi=real.rho_xichi,
        rho_vtheta=real.rho_vtheta,
    )


def b_coefficients(tau, rn: RiskNeutralParams) -> BCoefficients:
    """Maturity loadings of the log futures curve at time-to-maturity ``tau`` (days).

    ``b1 = exp(-kappa_xi* tau)`` and ``b2 = exp(-beta* tau)`` are the factor
    loadings; ``b3 = 1`` for all maturities; ``b0`` collects the drift and
    convexity contributions and satisfies ``b0(0) = 0``:

        b0(tau) =  sigma_xi^2/(4 kappa_xi*) (1 - b1^2)
                 + sigma_chi^2/(4 beta*)    (1 - b2^2)
                 + mu_xi*/kappa_xi*         (1 - b1)
                 - lambda0/beta*            (1 - b2)
                 + rho_xichi sigma_chi sigma_xi/(beta* + kappa_xi*) (1 - b1 b2)

    ``tau`` may be a scalar or an array; loadings broadcast accordingly.

    Raises
    ------
    InvalidParameterError
        If ``kappa_xi*`` or ``beta*`` is not strictly positive, or tau < 0.
    """
    if rn.kappa_xi_star <= 0.0 or rn.beta_star <= 0.0:
        raise InvalidParameterError("b coefficients need kappa_xi* > 0 and beta* > 0")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0):
        raise InvalidParameterError("time to maturity must be nonnegative")

    ks, bs = rn.kappa_xi_star, rn.beta_star
    b1 = np.exp(-ks * tau)
    b2 = np.exp(-bs * tau)
    b0 = (
        rn.sigma_xi**2 / (4.0 * ks) * (1.0 - b1**2)
        + rn.sigma_chi**2 / (4.0 * bs) * (1.0 - b2**2)
        + rn.mu_xi_star / ks * (1.0 - b1)
        - rn.lambda0 / bs * (1.0 - b2)
        + rn.rho_xichi * rn.sigma_chi * rn.sigma_xi / (bs + ks) * (1.0 - b1 * b2)
    )
    return BCoefficients(b0=b0, b1=b1, b2=b2, b3=np.ones_like(b1))


def log_futures_curve(
    rn: RiskNeutralParams,
    weights: SeasonalWeights,
    state: LatentState,
    contracts: list[ContractSpec],
    date: dt.date,
) -> np.ndarray:
    """Noiseless log futures prices for ``contracts`` observed on ``date``.

    Entry n is ``f(T_n) + b0 + b1*xi + b2*chi + theta`` evaluated at that
    contract's time to maturity.
    """
    taus = np.array([c.tau(date) for c in contracts], dtype=float)
    b = b_coefficients(taus, rn)
    f = np.array([seasonal_component(c.maturity_date, weights) for c in contracts])
    return f + b.b0 + b.b1 * state.xi + b.b2 * state.chi + b.b3 * state.theta
