"""Daily discretization of the four latent SDEs and seeded path simulation.

The long/short factors ``(chi, xi)`` use a strong Euler step (their noise is
additive, so Euler already has strong order 1). The volatility pair
``(theta, v)`` uses a strong Milstein step whose mixed Wiener integrals are
sampled by a p-term series truncation (:func:`levy_area_pair`). One step of
the volatility pair, written against independent Wiener components W1
(driving theta) and W2 (the part of v orthogonal to theta), is

    theta' = theta + sqrt(v dt) n1
             + (1/4) s r (dt n1^2 - dt) + (1/2) s q J21
    v'     = v + (mu_v - kappa_v v) dt + s r sqrt(v dt) n1 + s q sqrt(v dt) n2
             + (1/4) s^2 r^2 (dt n1^2 - dt) + (1/2) s^2 r q (J12 + J21)
             + (1/4) s^2 q^2 (dt n2^2 - dt)

with ``s = sigma_v``, ``r = rho_vtheta``, ``q = sqrt(1 - r^2)`` and
``n1, n2`` the standard normal increments of W1, W2. The identification
``zeta_1 = n1, zeta_2 = n2`` ties the series truncation to the same normals
as the diffusion terms. ``v'`` is floored at ``v_floor`` afterwards, since
the scheme does not preserve positivity on its own.

All step functions broadcast over leading axes, so a cloud of paths can be
advanced in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import LatentState, RealParams

__all__ = [
    "DiscretizationConfig",
    "StepShocks",
    "LatentPath",
    "rho_p",
    "draw_step_shocks",
    "levy_area_pair",
    "euler_step_long_short",
    "milstein_step_vol",
    "simulate_latent_path",
]


@dataclass(frozen=True)
class DiscretizationConfig:
    """Step size in days, series truncation order, and the variance floor."""

    dt: float = 1.0
    p: int = 100
    v_floor: float = 0.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.p < 0:
            raise ValueError("truncation order p must be nonnegative")
        if self.v_floor < 0.0:
            raise ValueError("v_floor must be nonnegative")


@dataclass
class StepShocks:
    """Standard-normal draws consumed by one discretization step.

    ``n_theta`` and ``n_v`` double as the leading series normals
    (zeta_1 and zeta_2). Series arrays have shape ``(..., p)``.
    """

    n_chi: np.ndarray
    n_xi: np.ndarray
    n_theta: np.ndarray
    n_v: np.ndarray
    mu1p: np.ndarray
    mu2p: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray

    @property
    def p(self) -> int:
        return self.psi1.shape[-1]


@dataclass
class LatentPath:
    """Day-indexed factor trajectories; index 0 is the initial state."""

    chi: np.ndarray
    xi: np.ndarray
    theta: np.ndarray
    v: np.ndarray

    @property
    def days(self) -> int:
        return len(self.chi) - 1

    def state(self, t: int) -> LatentState:
        return LatentState(
            chi=float(self.chi[t]), xi=float(self.xi[t]),
            theta=float(self.theta[t]), v=float(self.v[t]),
        )

    def log_spot(self, seasonal_offsets: np.ndarray | float = 0.0) -> np.ndarray:
        """chi + xi + theta (+ per-day seasonal offsets) over days 0..T."""
        return self.chi + self.xi + self.theta + seasonal_offsets


def rho_p(p: int) -> float:
    """Residual variance coefficient of the p-term series truncation.

    Equals ``1/12 - (1/(2 pi^2)) * sum_{r=1}^{p} r^{-2}``; decreasing in p
    and -> 0 as p -> infinity.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    if p == 0:
        return 1.0 / 12.0
    r = np.arange(1, p + 1, dtype=float)
    return 1.0 / 12.0 - float(np.sum(1.0 / r**2)) / (2.0 * math.pi**2)


def draw_step_shocks(rng: np.random.Generator, p: int, size=None) -> StepShocks:
    """Draw the full shock block for one step, for ``size`` parallel paths.

    Draw order is fixed for reproducibility: one standard-normal block of
    six rows ``[n_chi, n_xi, n_theta, n_v, mu1p, mu2p]`` (each of length
    ``size``), then one block of four series panels
    ``[psi1(1..p), psi2(1..p), nu1(1..p), nu2(1..p)]``.
    """
    k = 1 if size is None else size
    cols = rng.standard_normal((6, k))
    series = rng.standard_normal((4, k, p)) if p > 0 else np.zeros((4, k, 0))
    if size is None:
        cols, series = cols[:, 0], series[:, 0]
    return StepShocks(
        n_chi=cols[0], n_xi=cols[1], n_theta=cols[2], n_v=cols[3],
        mu1p=cols[4], mu2p=cols[5],
        psi1=series[0], psi2=series[1], nu1=series[2], nu2=series[3],
    )


def levy_area_pair(dt: float, shocks: StepShocks, p: int | None = None):
    """Truncated mixed Stratonovich integrals (J12, J21) over one step.

    Both integrals are evaluated on the same shock set, so the pairwise
    cancellation ``J12 + J21 = dt * zeta1 * zeta2`` holds exactly, term by
    term, in floating point.
    """
    if p is None:
        p = shocks.p
    elif p != shocks.p:
        raise ValueError(f"truncation order {p} does not match shock arrays ({shocks.p})")
    z1, z2 = shocks.n_theta, shocks.n_v
    lead = 0.5 * z1 * z2
    sr = math.sqrt(rho_p(p))
    mix = sr * (shocks.mu1p * z2 - shocks.mu2p * z1)
    if p > 0:
        inv_r = 1.0 / np.arange(1.0, p + 1.0)
        rt2 = math.sqrt(2.0)
        t1 = rt2 * z2 * (shocks.psi1 @ inv_r) + (shocks.psi1 * shocks.nu2) @ inv_r
        t2 = rt2 * z1 * (shocks.psi2 @ inv_r) + (shocks.psi2 * shocks.nu1) @ inv_r
        series = (t1 - t2) / (2.0 * math.pi)
    else:
        series = np.zeros_like(lead)
    j12 = dt * (lead + mix) + dt * series
    j21 = dt * (lead - mix) - dt * series
    return j12, j21


def euler_step_long_short(chi, xi, real: RealParams, cfg: DiscretizationConfig, shocks: StepShocks):
    """One Euler step of the correlated (chi, xi) pair.

    The raw normals are correlated through the lower-triangular factor of
    the 2x2 correlation matrix: z_chi = n_chi,
    z_xi = rho n_chi + sqrt(1-rho^2) n_xi.
    """
    dt = cfg.dt
    rho = real.rho_xichi
    z_chi = shocks.n_chi
    z_xi = rho * shocks.n_chi + math.sqrt(1.0 - rho * rho) * shocks.n_xi
    chi_next = (1.0 - real.beta * dt) * chi + real.sigma_chi * math.sqrt(dt) * z_chi
    xi_next = real.mu_xi * dt + (1.0 - real.kappa_xi * dt) * xi + real.sigma_xi * math.sqrt(dt) * z_xi
    return chi_next, xi_next


def _milstein_update(theta, v, real: RealParams, dt: float, n_theta, n_v, j12, j21):
    """Milstein update formula with externally supplied mixed integrals."""
    s = real.sigma_v
    r = real.rho_vtheta
    q = math.sqrt(1.0 - r * r)
    root_vdt = np.sqrt(np.maximum(v, 0.0) * dt)
    i11 = dt * n_theta**2 - dt
    i22 = dt * n_v**2 - dt
    theta_next = theta + root_vdt * n_theta + 0.25 * s * r * i11 + 0.5 * s * q * j21
    v_next = (
        v
        + (real.mu_v - real.kappa_v * v) * dt
        + s * r * root_vdt * n_theta
        + s * q * root_vdt * n_v
        + 0.25 * s * s * r * r * i11
        + 0.5 * s * s * r * q * j12
        + 0.5 * s * s * r * q * j21
        + 0.25 * s * s * q * q * i22
    )
    return theta_next, v_next


def milstein_step_vol(theta, v, real: RealParams, cfg: DiscretizationConfig, shocks: StepShocks):
    """One strong Milstein step of the volatility pair (theta, v).

    Returns ``(theta', max(v', v_floor))``.
    """
    j12, j21 = levy_area_pair(cfg.dt, shocks)
    theta_next, v_next = _milstein_update(theta, v, real, cfg.dt, shocks.n_theta, shocks.n_v, j12, j21)
    return theta_next, np.maximum(v_next, cfg.v_floor)


def simulate_latent_path(
    real: RealParams,
    init: LatentState,
    days: int,
    cfg: DiscretizationConfig = DiscretizationConfig(),
    seed: int | np.random.Generator = 0,
) -> LatentPath:
    """Simulate the four factors for ``days`` steps from ``init``.

    Deterministic given the seed: one shock block per day, drawn in the
    order documented in :func:`draw_step_shocks`.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chi = np.empty(days + 1)
    xi = np.empty(days + 1)
    theta = np.empty(days + 1)
    v = np.empty(days + 1)
    chi[0], xi[0], theta[0], v[0] = init.chi, init.xi, init.theta, max(init.v, cfg.v_floor)
    for t in range(1, days + 1):
        shocks = draw_step_shocks(rng, cfg.p)
        chi[t], xi[t] = euler_step_long_short(chi[t - 1], xi[t - 1], real, cfg, shocks)
        theta[t], v[t] = milstein_step_vol(theta[t - 1], v[t - 1], real, cfg, shocks)
    return LatentPath(chi=chi, xi=xi, theta=theta, v=v)
