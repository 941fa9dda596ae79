"""Rao-Blackwellised SIR particle filter for the four-factor model.

Conditional on a sampled ``(theta, v)`` trajectory the model is linear
Gaussian in ``(chi, xi)``, so each particle carries exact Kalman moments for
that pair instead of samples. Particles are mutated by drawing ``(theta, v)``
exactly from the Milstein transition (no transition density is ever
evaluated), weighted by the one-step Kalman predictive density of the
observed curve, and resampled by stratified resampling whenever the effective
sample size drops below a fraction of the particle count. The marginal
likelihood estimate accumulates the log of the weighted mean incremental
weight each day, which reduces to the plain product formula when no
resampling triggers.

A single latent trajectory is drawn at the end: a terminal particle is picked
proportionally to the final weights, its ``(theta, v)`` genealogy is traced
through the stored ancestor indices, and ``(chi, xi)`` are drawn by backward
simulation from that genealogy's stored Kalman moments, giving an exact draw
from the conditional smoothing law.

Because the transition and observation matrices do not depend on
``(theta, v)`` (only the observation offset does), the Kalman covariance
recursion is shared by all particles; only the means are per-particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs

# low-overhead triangular solve; scipy's python wrappers dominate the cost of
# the small per-day systems otherwise
_dtrtrs = get_lapack_funcs(("trtrs",), (np.empty(0, dtype=np.float64),))[0]

from .dynamics import (
    DiscretizationConfig,
    LatentPath,
    StepShocks,
    milstein_step_vol,
)
from .model import (
    ModelParams,
    RealParams,
    RiskNeutralParams,
    SeasonalWeights,
    b_coefficients,
    seasonal_component,
)
from .panel import FuturesPanel

__all__ = [
    "DegenerateInnovationError",
    "FilterCollapseError",
    "LinearGaussianSpec",
    "InitialStateSpec",
    "FactorBands",
    "FilterResult",
    "assemble_ssm",
    "kalman_step",
    "ess",
    "stratified_resample",
    "rb_sir_filter",
]

DEFAULT_ESS_FRACTION = 0.8


class DegenerateInnovationError(RuntimeError):
    """Innovation covariance could not be factorized even after regularization."""


class FilterCollapseError(RuntimeError):
    """Every particle weight underflowed on some day."""

    def __init__(self, day: int):
        self.day = day
        super().__init__(f"particle filter collapsed on day index {day}")


@dataclass
class LinearGaussianSpec:
    """One day of the conditionally linear Gaussian state-space model.

    ``x_t = A x_{t-1} + c + w, w ~ N(0, Q)``;
    ``y_t = H x_t + d + e, e ~ N(0, diag(R_diag))``.
    ``d`` may carry a leading particle axis (the theta-dependent offset).
    """

    A: np.ndarray
    c: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    d: np.ndarray
    R_diag: np.ndarray


@dataclass(frozen=True)
class InitialStateSpec:
    """Gaussian law of the initial state (chi, xi, theta, v)."""

    mean: np.ndarray
    cov: np.ndarray

    @staticmethod
    def default() -> "InitialStateSpec":
        return InitialStateSpec(mean=np.zeros(4), cov=np.eye(4))


@dataclass
class FactorBands:
    """Per-day weighted means and central 95% intervals, factor order
    (chi, xi, theta, v)."""

    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class FilterResult:
    log_marginal_likelihood: float
    trajectory: LatentPath
    ess_history: np.ndarray
    resample_days: list
    cloud_summaries: FactorBands | None = None
    log_predictive: np.ndarray | None = None


def _transition_pieces(real: RealParams, dt: float):
    a = np.diag([1.0 - real.beta * dt, 1.0 - real.kappa_xi * dt])
    c = np.array([0.0, real.mu_xi * dt])
    cross = real.rho_xichi * real.sigma_chi * real.sigma_xi
    q = dt * np.array([[real.sigma_chi**2, cross], [cross, real.sigma_xi**2]])
    return a, c, q


def assemble_ssm(
    real: RealParams,
    rn: RiskNeutralParams,
    weights: SeasonalWeights,
    contracts,
    date,
    theta_t,
    dt: float = 1.0,
    obs_var: np.ndarray | None = None,
    taus: np.ndarray | None = None,
) -> LinearGaussianSpec:
    """Concrete matrices for one observation day.

    A = diag(1 - beta dt, 1 - kappa_xi dt); c = (0, mu_xi dt);
    Q = dt * [[s_chi^2, rho s_chi s_xi], [rho s_chi s_xi, s_xi^2]];
    row n of H is (b2(tau_n), b1(tau_n)); d_n = f(T_n) + b0(tau_n) + theta_t.

    ``taus``/``obs_var`` may be passed precomputed for the active contract
    subset; otherwise they are derived from ``contracts`` and ``real``.
    """
    a, c, q = _transition_pieces(real, dt)
    if taus is None:
        taus = np.array([ct.tau(date) for ct in contracts], dtype=float)
    b = b_coefficients(taus, rn)
    h = np.column_stack([b.b2, b.b1])
    f = np.array([seasonal_component(ct.maturity_date, weights) for ct in contracts])
    d = f + b.b0 + np.asarray(theta_t)[..., None]
    if obs_var is None:
        obs_var = np.broadcast_to(real.obs_var, (len(contracts),))
    return LinearGaussianSpec(A=a, c=c, Q=q, H=h, d=d, R_diag=np.asarray(obs_var, dtype=float))


def kalman_step(mean, cov, spec: LinearGaussianSpec, y):
    """One predict/update sweep with the log predictive density of ``y``.

    ``mean`` may be a single state vector or a matrix of per-particle means
    sharing ``cov``; ``spec.d`` broadcasts likewise. The posterior covariance
    uses the Joseph form. Returns ``(mean', cov', log_predictive)`` with
    ``log_predictive`` scalar or per-particle.

    Raises
    ------
    DegenerateInnovationError
        If the innovation covariance cannot be factorized even after adding
        1e-12 to its diagonal.
    """
    mean = np.asarray(mean, dtype=float)
    single = mean.ndim == 1
    means = mean[None, :] if single else mean

    pred_mean = means @ spec.A.T + spec.c
    pred_cov = spec.A @ cov @ spec.A.T + spec.Q
    pred_cov = 0.5 * (pred_cov + pred_cov.T)

    n = spec.H.shape[0]
    if n == 0:
        out_mean = pred_mean[0] if single else pred_mean
        return out_mean, pred_cov, (0.0 if single else np.zeros(means.shape[0]))

    s = spec.H @ pred_cov @ spec.H.T + np.diag(spec.R_diag)
    s = 0.5 * (s + s.T)
    if not np.all(np.isfinite(s)):
        raise DegenerateInnovationError("innovation covariance is not finite")
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(s + 1e-12 * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise DegenerateInnovationError("innovation covariance not factorizable") from exc

    d = np.asarray(spec.d, dtype=float)
    resid = y - pred_mean @ spec.H.T - (d[None, :] if d.ndim == 1 else d)
    alpha, info = _dtrtrs(chol, resid.T, lower=1)
    if info != 0:
        raise DegenerateInnovationError("triangular solve failed")
    quad = np.einsum("ij,ij->j", alpha, alpha)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    log_pred = -0.5 * (n * math.log(2.0 * math.pi) + logdet + quad)

    half, _ = _dtrtrs(chol, spec.H @ pred_cov, lower=1)
    gain = _dtrtrs(chol, half, lower=1, trans=1)[0].T  # (k, n)
    post_mean = pred_mean + resid @ gain.T
    i_kh = np.eye(spec.A.shape[0]) - gain @ spec.H
    post_cov = i_kh @ pred_cov @ i_kh.T + (gain * spec.R_diag) @ gain.T
    post_cov = 0.5 * (post_cov + post_cov.T)

    if single:
        return post_mean[0], post_cov, float(log_pred[0])
    return post_mean, post_cov, log_pred


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w_i^2) of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(np.sum(w * w))


def stratified_resample(weights: np.ndarray, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified ancestor indices: one uniform per stratum [(i-1)/n, i/n)."""
    w = np.asarray(weights, dtype=float)
    u = (np.arange(n_out) + rng.uniform(size=n_out)) / n_out
    cs = np.cumsum(w)
    cs /= cs[-1]
    return np.minimum(np.searchsorted(cs, u, side="right"), len(w) - 1)


def _gauss_factor(cov: np.ndarray) -> np.ndarray:
    """A square root of a PSD matrix, tolerant of zero eigenvalues."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        return vecs * np.sqrt(np.maximum(vals, 0.0))


def _inv_2x2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if not np.isfinite(det) or abs(det) < 1e-300:
        return np.linalg.pinv(m)
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def _weighted_quantiles(values: np.ndarray, weights: np.ndarray, qs) -> np.ndarray:
    order = np.argsort(values)
    v, w = values[order], weights[order]
    cw = np.cumsum(w) - 0.5 * w
    cw /= np.sum(w)
    return np.interp(qs, cw, v)


def _mixture_quantiles(mus: np.ndarray, sd: float, weights: np.ndarray, qs) -> np.ndarray:
    """Quantiles of an equal-variance Gaussian mixture, by CDF bisection."""
    from scipy.stats import norm

    if sd <= 0.0:
        return _weighted_quantiles(mus, weights, qs)
    out = np.empty(len(qs))
    lo0, hi0 = mus.min() - 8.0 * sd, mus.max() + 8.0 * sd
    for i, q in enumerate(qs):
        lo, hi = lo0, hi0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if float(weights @ norm.cdf((mid - mus) / sd)) < q:
                lo = mid
            else:
                hi = mid
        out[i] = 0.5 * (lo + hi)
    return out


def rb_sir_filter(
    phi: ModelParams,
    panel: FuturesPanel,
    n_particles: int,
    cfg: DiscretizationConfig = DiscretizationConfig(),
    seed: int | np.random.Generator = 0,
    init: InitialStateSpec | None = None,
    ess_fraction: float = DEFAULT_ESS_FRACTION,
    store_summaries: bool = False,
    store_log_predictive: bool = False,
) -> FilterResult:
    """Run the filter and return the likelihood estimate plus one sampled path.

    Deterministic given an integer ``seed`` (an SFC64 generator is built from
    it); the stream is consumed in a fixed order: the initial-state block,
    then per day one shock block and, when resampling triggers, its uniforms,
    then the terminal particle choice and the backward-simulation normals.
    ``log_predictive`` rows (when stored) are in each day's pre-resample
    particle order.

    Raises
    ------
    FilterCollapseError
        If every particle weight underflows on some day (the exception
        carries the day index).
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if panel.n_days < 1:
        raise ValueError("panel is empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.SFC64(seed))
    init = init or InitialStateSpec.default()
    real = phi.real
    rn = phi.risk_neutral()
    t_days = panel.n_days
    npart = n_particles

    a_mat, c_vec, q_mat = _transition_pieces(real, cfg.dt)

    # Per-day observation pieces for the active contracts; the maturity
    # loadings for the whole panel are computed in one vectorized call.
    tau_grid = panel.tau_grid
    obs_var_full = np.broadcast_to(real.obs_var, (panel.n_contracts,))
    f_full = np.array(
        [seasonal_component(ct.maturity_date, phi.seasonal) for ct in panel.contracts]
    )
    active_lists = [np.flatnonzero(panel.mask[t]) for t in range(t_days)]
    all_taus = np.concatenate([tau_grid[t, active_lists[t]] for t in range(t_days)])
    b_all = b_coefficients(all_taus.astype(float), rn)
    day_specs = []
    pos = 0
    for t in range(t_days):
        idx = active_lists[t]
        n_t = len(idx)
        sl = slice(pos, pos + n_t)
        pos += n_t
        day_specs.append(
            LinearGaussianSpec(
                A=a_mat, c=c_vec, Q=q_mat,
                H=np.column_stack([b_all.b2[sl], b_all.b1[sl]]),
                d=f_full[idx] + b_all.b0[sl],  # theta offset added per day
                R_diag=obs_var_full[idx],
            )
        )

    # Initial cloud: (theta, v) sampled, (chi, xi) kept as Kalman moments
    # conditioned on the sampled pair.
    mean_a, mean_b = init.mean[:2], init.mean[2:]
    cov_aa, cov_ab, cov_bb = init.cov[:2, :2], init.cov[:2, 2:], init.cov[2:, 2:]
    z0 = rng.standard_normal((npart, 2))
    xb = mean_b + z0 @ _gauss_factor(cov_bb).T
    theta_cur = xb[:, 0].copy()
    v_cur = np.maximum(xb[:, 1], cfg.v_floor)
    if np.any(cov_ab):
        g0 = cov_ab @ np.linalg.pinv(cov_bb)
        kf_mean = mean_a + (xb - mean_b) @ g0.T
        kf_cov = cov_aa - g0 @ cov_ab.T
    else:
        kf_mean = np.tile(mean_a, (npart, 1))
        kf_cov = cov_aa.copy()
    kf_cov = 0.5 * (kf_cov + kf_cov.T)

    theta_store = np.empty((t_days + 1, npart))
    v_store = np.empty((t_days + 1, npart))
    mu_store = np.empty((t_days + 1, npart, 2))
    sig_store = np.empty((t_days + 1, 2, 2))
    anc = np.empty((t_days + 1, npart), dtype=np.int64)
    theta_store[0], v_store[0], mu_store[0], sig_store[0] = theta_cur, v_cur, kf_mean, kf_cov
    anc[0] = np.arange(npart)

    log_w = np.full(npart, -math.log(npart))
    logml = 0.0
    ess_history = np.empty(t_days)
    resample_days: list[int] = []
    logpred_store = np.empty((t_days, npart)) if store_log_predictive else None
    if store_summaries:
        band_mean = np.empty((t_days, 4))
        band_lo = np.empty((t_days, 4))
        band_hi = np.empty((t_days, 4))
    identity_anc = np.arange(npart)

    # Shock buffers are reused across days; refilling consumes the stream in
    # exactly the order draw_step_shocks documents.
    cols_buf = np.empty((6, npart))
    series_buf = np.empty((4, npart, cfg.p))
    shocks = StepShocks(
        n_chi=cols_buf[0], n_xi=cols_buf[1], n_theta=cols_buf[2], n_v=cols_buf[3],
        mu1p=cols_buf[4], mu2p=cols_buf[5],
        psi1=series_buf[0], psi2=series_buf[1], nu1=series_buf[2], nu2=series_buf[3],
    )

    for t in range(t_days):
        rng.standard_normal(out=cols_buf)
        if cfg.p > 0:
            rng.standard_normal(out=series_buf)
        theta_new, v_new = milstein_step_vol(theta_cur, v_cur, real, cfg, shocks)

        spec = day_specs[t]
        if spec.H.shape[0] > 0:
            spec_t = LinearGaussianSpec(
                A=spec.A, c=spec.c, Q=spec.Q, H=spec.H,
                d=spec.d + theta_new[:, None], R_diag=spec.R_diag,
            )
            try:
                kf_mean_new, kf_cov_new, log_pred = kalman_step(
                    kf_mean, kf_cov, spec_t, panel.log_prices[t, active_lists[t]]
                )
            except DegenerateInnovationError:
                raise FilterCollapseError(t)
            log_pred = np.where(np.isfinite(log_pred), log_pred, -np.inf)
        else:
            kf_mean_new, kf_cov_new, _ = kalman_step(kf_mean, kf_cov, spec, np.empty(0))
            log_pred = np.zeros(npart)
        if logpred_store is not None:
            logpred_store[t] = log_pred

        a = log_w + log_pred
        m = np.max(a)
        if not np.isfinite(m):
            raise FilterCollapseError(t)
        step_log = m + math.log(float(np.sum(np.exp(a - m))))
        logml += step_log
        log_w = a - step_log
        w = np.exp(log_w)
        ess_history[t] = 1.0 / float(w @ w)

        if store_summaries:
            qs = (0.025, 0.975)
            for j, vals in ((2, theta_new), (3, v_new)):
                band_mean[t, j] = float(w @ vals)
                band_lo[t, j], band_hi[t, j] = _weighted_quantiles(vals, w, qs)
            for j in (0, 1):
                mus = kf_mean_new[:, j]
                sd = math.sqrt(max(kf_cov_new[j, j], 0.0))
                band_mean[t, j] = float(w @ mus)
                band_lo[t, j], band_hi[t, j] = _mixture_quantiles(mus, sd, w, qs)

        if ess_history[t] < ess_fraction * npart:
            idx = stratified_resample(w, npart, rng)
            anc[t + 1] = idx
            theta_cur = theta_new[idx]
            v_cur = v_new[idx]
            kf_mean = kf_mean_new[idx]
            log_w = np.full(npart, -math.log(npart))
            resample_days.append(t)
        else:
            anc[t + 1] = identity_anc
            theta_cur = theta_new
            v_cur = v_new
            kf_mean = kf_mean_new
        kf_cov = kf_cov_new
        theta_store[t + 1] = theta_cur
        v_store[t + 1] = v_cur
        mu_store[t + 1] = kf_mean
        sig_store[t + 1] = kf_cov

    # One trajectory draw: terminal particle by weight, genealogy traced
    # through the ancestor indices, then backward simulation of (chi, xi).
    w_final = np.exp(log_w)
    w_final /= w_final.sum()
    k = int(rng.choice(npart, p=w_final))
    theta_path = np.empty(t_days + 1)
    v_path = np.empty(t_days + 1)
    mu_path = np.empty((t_days + 1, 2))
    j = k
    for t in range(t_days, -1, -1):
        theta_path[t] = theta_store[t, j]
        v_path[t] = v_store[t, j]
        mu_path[t] = mu_store[t, j]
        j = anc[t, j]

    bs_z = rng.standard_normal((t_days + 1, 2))
    x = np.empty((t_days + 1, 2))
    x[t_days] = mu_path[t_days] + _gauss_factor(sig_store[t_days]) @ bs_z[t_days]
    for t in range(t_days - 1, -1, -1):
        sig_t = sig_store[t]
        pred = a_mat @ sig_t @ a_mat.T + q_mat
        gain = sig_t @ a_mat.T @ _inv_2x2(pred)
        m = mu_path[t] + gain @ (x[t + 1] - (a_mat @ mu_path[t] + c_vec))
        cov_t = sig_t - gain @ pred @ gain.T
        x[t] = m + _gauss_factor(0.5 * (cov_t + cov_t.T)) @ bs_z[t]

    trajectory = LatentPath(chi=x[:, 0].copy(), xi=x[:, 1].copy(), theta=theta_path, v=v_path)
    summaries = (
        FactorBands(mean=band_mean, lo=band_lo, hi=band_hi) if store_summaries else None
    )
    return FilterResult(
        log_marginal_likelihood=logml,
        trajectory=trajectory,
        ess_history=ess_history,
        resample_days=resample_days,
        cloud_summaries=summaries,
        log_predictive=logpred_store,
    )
