"""Posterior and predictive summaries of a calibration run.

Parameter point estimates are posterior means with equal-tailed central 95%
credible intervals; empirical quantiles interpolate linearly between order
statistics (numpy's default rule), so summaries are bit-reproducible.
The posterior predictive futures distribution integrates parameter and
latent-path uncertainty by propagating each retained record's own terminal
state forward under its real-measure parameters, pricing with its
risk-neutral parameters, and adding observation noise drawn from its own
noise variances.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .dynamics import DiscretizationConfig, simulate_latent_path
from .model import b_coefficients, seasonal_component
from .panel import FuturesPanel

__all__ = ["PosteriorSummary", "PredictiveCurve", "summarize_chain", "predictive_futures"]

_Q_LO, _Q_HI = 2.5, 97.5
_FACTORS = ("chi", "xi", "theta", "v")

REPORTED_PARAMS_DOC = """Reported parameter names: the real block
(beta, mu_xi, kappa_xi, mu_v, kappa_v, sigma_chi, sigma_xi, sigma_v),
per-contract observation variances obs_var_i, premium coefficients
lam0..lam7 (free ones), seasonal weights omega_2..omega_12 and the two
correlations."""


@dataclass
class PosteriorSummary:
    """Posterior means/intervals per parameter, factor bands and log-spot bands."""

    param_stats: dict
    dates: list
    factor_mean: np.ndarray  # (T, 4), order (chi, xi, theta, v)
    factor_lo: np.ndarray
    factor_hi: np.ndarray
    logspot_mean: np.ndarray  # (T,)
    logspot_lo: np.ndarray
    logspot_hi: np.ndarray


@dataclass
class PredictiveCurve:
    """Per-day, per-contract predictive mean and central 95% band of the
    log futures price; NaN where a contract is past maturity."""

    dates: list
    in_sample: np.ndarray  # (D,) bool
    contracts: list
    mean: np.ndarray  # (D, N)
    lo: np.ndarray
    hi: np.ndarray


def _reported_vector(phi) -> tuple[list, np.ndarray]:
    r, pr, w = phi.real, phi.premia, phi.seasonal
    names = ["beta", "mu_xi", "kappa_xi", "mu_v", "kappa_v",
             "sigma_chi", "sigma_xi", "sigma_v"]
    vals = [r.beta, r.mu_xi, r.kappa_xi, r.mu_v, r.kappa_v,
            r.sigma_chi, r.sigma_xi, r.sigma_v]
    obs = np.atleast_1d(r.obs_var)
    names += [f"obs_var_{i + 1}" for i in range(len(obs))]
    vals += list(obs)
    names += ["lam0", "lam1", "lam2", "lam3", "lam6", "lam7"]
    vals += [pr.lam0_star, pr.lam1_star, pr.lam2_star, pr.lam3_star,
             pr.lam6_star, pr.lam7_star]
    names += [f"omega_{m}" for m in range(2, 13)]
    vals += list(w.omega)
    names += ["rho_xichi", "rho_vtheta"]
    vals += [r.rho_xichi, r.rho_vtheta]
    return names, np.array(vals, dtype=float)


def summarize_chain(records: list, dates: list) -> PosteriorSummary:
    """Summaries over retained post-burn-in records.

    ``dates`` are the panel's observation days, matched to trajectory days
    1..T; the per-record log spot on a day is chi + xi + theta plus that
    record's seasonal offset for the date's month.

    Raises
    ------
    ValueError
        On an empty chain.
    """
    if not records:
        raise ValueError("cannot summarize an empty chain")
    names, first = _reported_vector(records[0].phi)
    mat = np.empty((len(records), len(first)))
    mat[0] = first
    for i, rec in enumerate(records[1:], start=1):
        mat[i] = _reported_vector(rec.phi)[1]
    stats = {}
    for j, name in enumerate(names):
        col = mat[:, j]
        lo, hi = np.percentile(col, [_Q_LO, _Q_HI])
        stats[name] = {"mean": float(col.mean()), "q025": float(lo), "q975": float(hi)}

    t_days = len(dates)
    n_rec = len(records)
    traj = np.empty((n_rec, t_days, 4))
    logspot = np.empty((n_rec, t_days))
    for i, rec in enumerate(records):
        p = rec.trajectory
        traj[i, :, 0] = p.chi[1:t_days + 1]
        traj[i, :, 1] = p.xi[1:t_days + 1]
        traj[i, :, 2] = p.theta[1:t_days + 1]
        traj[i, :, 3] = p.v[1:t_days + 1]
        f = np.array([seasonal_component(d, rec.phi.seasonal) for d in dates])
        logspot[i] = traj[i, :, 0] + traj[i, :, 1] + traj[i, :, 2] + f

    f_lo, f_hi = np.percentile(traj, [_Q_LO, _Q_HI], axis=0)
    s_lo, s_hi = np.percentile(logspot, [_Q_LO, _Q_HI], axis=0)
    return PosteriorSummary(
        param_stats=stats,
        dates=list(dates),
        factor_mean=traj.mean(axis=0),
        factor_lo=f_lo,
        factor_hi=f_hi,
        logspot_mean=logspot.mean(axis=0),
        logspot_lo=s_lo,
        logspot_hi=s_hi,
    )


def predictive_futures(
    records: list,
    panel: FuturesPanel,
    horizon_days: int,
    contracts: list | None = None,
    cfg: DiscretizationConfig = DiscretizationConfig(),
    seed: int = 0,
    chunk: int = 512,
) -> PredictiveCurve:
    """Posterior predictive log futures curves, in-sample and forecast.

    For every retained record the in-sample days are priced at the record's
    sampled latent states; the forecast days propagate its terminal state
    forward ``horizon_days`` steps under the record's real-measure dynamics.
    Pricing uses the record's risk-neutral parameters, and a fresh
    observation-noise draw from the record's noise variances is added, so the
    bands are predictive for observed prices, not just curve means.

    Raises
    ------
    ValueError
        On an empty chain or a negative horizon.
    """
    if not records:
        raise ValueError("cannot build a predictive curve from an empty chain")
    if horizon_days < 0:
        raise ValueError("horizon_days must be >= 0")
    contracts = list(panel.contracts if contracts is None else contracts)
    t_days = panel.n_days
    dates = list(panel.dates) + [
        panel.dates[-1] + dt.timedelta(days=j) for j in range(1, horizon_days + 1)
    ]
    d_all = len(dates)
    n = len(contracts)
    in_sample = np.array([True] * t_days + [False] * horizon_days)
    taus = np.array([[c.tau(d) for c in contracts] for d in dates], dtype=float)
    active = taus >= 0.0

    root = np.random.SeedSequence(seed)
    path_seed, noise_seed = root.spawn(2)
    noise_rng = np.random.default_rng(noise_seed)
    path_children = path_seed.spawn(len(records)) if horizon_days > 0 else None

    n_rec = len(records)
    vals = np.full((n_rec, d_all, n), np.nan)
    months = np.array([c.maturity_date.month for c in contracts])
    for start in range(0, n_rec, chunk):
        block = records[start:start + chunk]
        k = len(block)
        chi = np.empty((k, d_all))
        xi = np.empty((k, d_all))
        theta = np.empty((k, d_all))
        logf = np.empty((k, d_all, n))
        for i, rec in enumerate(block):
            p = rec.trajectory
            chi[i, :t_days] = p.chi[1:t_days + 1]
            xi[i, :t_days] = p.xi[1:t_days + 1]
            theta[i, :t_days] = p.theta[1:t_days + 1]
            if horizon_days > 0:
                fwd = simulate_latent_path(
                    rec.phi.real, p.state(t_days), horizon_days, cfg,
                    np.random.default_rng(path_children[start + i]),
                )
                chi[i, t_days:] = fwd.chi[1:]
                xi[i, t_days:] = fwd.xi[1:]
                theta[i, t_days:] = fwd.theta[1:]
            b = b_coefficients(np.where(active, taus, 0.0), rec.phi.risk_neutral())
            f = np.array([rec.phi.seasonal.for_month(m) for m in months])
            logf[i] = f + b.b0 + b.b1 * xi[i][:, None] + b.b2 * chi[i][:, None] + theta[i][:, None]
            sd = np.sqrt(np.broadcast_to(rec.phi.real.obs_var, (n,)))
            logf[i] += noise_rng.standard_normal((d_all, n)) * sd
        logf[:, ~active] = np.nan
        vals[start:start + k] = logf

    flat = vals.reshape(n_rec, d_all * n)
    cols = np.flatnonzero(active.ravel())
    mean = np.full(d_all * n, np.nan)
    lo = np.full(d_all * n, np.nan)
    hi = np.full(d_all * n, np.nan)
    mean[cols] = flat[:, cols].mean(axis=0)
    lo[cols], hi[cols] = np.percentile(flat[:, cols], [_Q_LO, _Q_HI], axis=0)
    return PredictiveCurve(
        dates=dates, in_sample=in_sample, contracts=contracts,
        mean=mean.reshape(d_all, n), lo=lo.reshape(d_all, n), hi=hi.reshape(d_all, n),
    )
