"""Run configuration: typed flat key-value files and derived module configs.

The config file format is one ``key = value`` pair per line, ``#`` comments
allowed; keys and their types come from :class:`RunConfig`'s fields. Every
CLI command echoes the exact configuration it ran with into its output
directory (``config_used.cfg``), so runs are reproducible from artifacts.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .dynamics import DiscretizationConfig
from .mcmc import ChainConfig, PriorSpec
from .model import ModelParams, RealParams, RiskPremia, SeasonalWeights
from .rbfilter import InitialStateSpec

__all__ = ["ConfigError", "RunConfig", "parse_config", "write_config",
           "model_params_from_mapping", "model_params_to_mapping"]

ENV_OUT_DIR = "COMMODITY_PMCMC_OUT"


class ConfigError(ValueError):
    """Raised on unknown keys, bad types, or unreadable config files."""


@dataclass
class RunConfig:
    # sampler
    iterations: int = 20000
    burn_in: int = 5000
    n_particles: int = 200
    w1: float = 0.95
    seed: int = 0
    thin: int = 1
    trajectory_thin: int = 10
    init_mode: str = "default"  # "default" (unit-scale point) or "prior"
    # discretization
    dt: float = 1.0
    p_truncation: int = 100
    v_floor: float = 0.0
    ess_fraction: float = 0.8
    # priors
    prior_beta_min: float = 0.0
    prior_beta_max: float = 10.0
    prior_mu_xi_min: float = -10.0
    prior_mu_xi_max: float = 10.0
    prior_kappa_xi_min: float = 0.0
    prior_kappa_xi_max: float = 10.0
    prior_mu_v_min: float = 0.0
    prior_mu_v_max: float = 10.0
    prior_kappa_v_min: float = 0.0
    prior_kappa_v_max: float = 10.0
    prior_var_min: float = 0.0
    prior_var_max: float = 10.0
    prior_obs_var_shape: float = 1e-3
    prior_obs_var_scale: float = 1e-3
    prior_premia_min: float = -5.0
    prior_premia_max: float = 5.0
    prior_seasonal_min: float = -10.0
    prior_seasonal_max: float = 10.0
    enforce_variance_floor: bool = True
    # synthetic panel generation
    sim_days: int = 100
    sim_contracts: int = 10
    sim_first_maturity: int = 29
    sim_spacing: int = 30
    sim_start_date: str = "2015-01-01"
    true_beta: float = 0.2
    true_mu_xi: float = 0.1
    true_kappa_xi: float = 0.4
    true_mu_v: float = 0.2
    true_kappa_v: float = 0.2
    true_sigma_chi: float = 0.5
    true_sigma_xi: float = 0.5
    true_sigma_v: float = 0.5
    true_obs_var: float = 4.0
    true_rho_xichi: float = 0.0
    true_rho_vtheta: float = 0.0
    # prediction
    horizon: int = 5

    def prior_spec(self) -> PriorSpec:
        return PriorSpec(
            beta_bounds=(self.prior_beta_min, self.prior_beta_max),
            mu_xi_bounds=(self.prior_mu_xi_min, self.prior_mu_xi_max),
            kappa_xi_bounds=(self.prior_kappa_xi_min, self.prior_kappa_xi_max),
            mu_v_bounds=(self.prior_mu_v_min, self.prior_mu_v_max),
            kappa_v_bounds=(self.prior_kappa_v_min, self.prior_kappa_v_max),
            var_chi_bounds=(self.prior_var_min, self.prior_var_max),
            var_xi_bounds=(self.prior_var_min, self.prior_var_max),
            var_v_bounds=(self.prior_var_min, self.prior_var_max),
            obs_var_shape=self.prior_obs_var_shape,
            obs_var_scale=self.prior_obs_var_scale,
            premia_bounds=(self.prior_premia_min, self.prior_premia_max),
            seasonal_bounds=(self.prior_seasonal_min, self.prior_seasonal_max),
            enforce_variance_floor=self.enforce_variance_floor,
        )

    def disc(self) -> DiscretizationConfig:
        return DiscretizationConfig(dt=self.dt, p=self.p_truncation, v_floor=self.v_floor)

    def true_params(self, n_contracts: int | None = None) -> ModelParams:
        n = self.sim_contracts if n_contracts is None else n_contracts
        real = RealParams(
            beta=self.true_beta, mu_xi=self.true_mu_xi, kappa_xi=self.true_kappa_xi,
            mu_v=self.true_mu_v, kappa_v=self.true_kappa_v,
            sigma_chi=self.true_sigma_chi, sigma_xi=self.true_sigma_xi,
            sigma_v=self.true_sigma_v,
            rho_xichi=self.true_rho_xichi, rho_vtheta=self.true_rho_vtheta,
            obs_var=np.full(n, self.true_obs_var),
        )
        return ModelParams(real=real)

    def default_init_params(self, n_contracts: int) -> ModelParams:
        """Generic unit-scale starting point, inside the default prior support."""
        real = RealParams(
            beta=1.0, mu_xi=0.0, kappa_xi=1.0, mu_v=1.0, kappa_v=1.0,
            sigma_chi=1.0, sigma_xi=1.0, sigma_v=1.0,
            obs_var=np.ones(n_contracts),
        )
        return ModelParams(real=real)

    def chain_config(self, n_contracts: int) -> ChainConfig:
        init = "prior" if self.init_mode == "prior" else self.default_init_params(n_contracts)
        return ChainConfig(
            iterations=self.iterations, burn_in=self.burn_in,
            n_particles=self.n_particles, w1=self.w1, seed=self.seed,
            thin=self.thin, disc=self.disc(), ess_fraction=self.ess_fraction,
            init=init, init_state=InitialStateSpec.default(),
        )

    def sim_start(self) -> dt.date:
        return dt.date.fromisoformat(self.sim_start_date)


_BOOL_WORDS = {"true": True, "false": False}


def _coerce(key: str, raw: str, typ: type):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError("expected true/false")
            return _BOOL_WORDS[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}")
    raise ConfigError(f"unsupported type for key {key!r}")


def parse_config(path) -> RunConfig:
    """Read a flat key-value config file into a RunConfig.

    Raises
    ------
    ConfigError
        On unknown keys or values that do not parse as the declared type.
    """
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    # dataclass field types may be stringified under postponed annotations
    typemap = {"int": int, "float": float, "str": str, "bool": bool}
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigError(f"line {i}: unknown config key {key!r}")
        typ = types[key]
        if isinstance(typ, str):
            typ = typemap[typ]
        values[key] = _coerce(key, val, typ)
    return RunConfig(**values)


def write_config(cfg: RunConfig, path) -> None:
    """Write the full configuration, keys in field order, floats at 17 digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in dataclasses.fields(RunConfig):
            val = getattr(cfg, f.name)
            if isinstance(val, bool):
                out = "true" if val else "false"
            elif isinstance(val, float):
                out = format(val, ".17g")
            else:
                out = str(val)
            fh.write(f"{f.name} = {out}\n")


def model_params_to_mapping(phi: ModelParams) -> dict:
    """Flat named mapping of a parameter set (inverse of
    :func:`model_params_from_mapping`)."""
    r, pr, w = phi.real, phi.premia, phi.seasonal
    return {
        "beta": r.beta, "mu_xi": r.mu_xi, "kappa_xi": r.kappa_xi,
        "mu_v": r.mu_v, "kappa_v": r.kappa_v,
        "sigma_chi": r.sigma_chi, "sigma_xi": r.sigma_xi, "sigma_v": r.sigma_v,
        "rho_xichi": r.rho_xichi, "rho_vtheta": r.rho_vtheta,
        "obs_var": list(np.atleast_1d(r.obs_var)),
        "lam0": pr.lam0_star, "lam1": pr.lam1_star, "lam2": pr.lam2_star,
        "lam3": pr.lam3_star, "lam6": pr.lam6_star, "lam7": pr.lam7_star,
        "omega": list(w.omega),
    }


def model_params_from_mapping(data: dict, n_contracts: int) -> ModelParams:
    """Build ModelParams from a flat named mapping (e.g. a params JSON).

    ``obs_var`` may be a scalar (broadcast over contracts) or a list; missing
    premia/seasonal entries default to zero.
    """
    try:
        obs = data.get("obs_var", 1.0)
        obs_arr = np.full(n_contracts, float(obs)) if np.isscalar(obs) else np.asarray(obs, dtype=float)
        real = RealParams(
            beta=float(data["beta"]), mu_xi=float(data["mu_xi"]),
            kappa_xi=float(data["kappa_xi"]), mu_v=float(data["mu_v"]),
            kappa_v=float(data["kappa_v"]), sigma_chi=float(data["sigma_chi"]),
            sigma_xi=float(data["sigma_xi"]), sigma_v=float(data["sigma_v"]),
            rho_xichi=float(data.get("rho_xichi", 0.0)),
            rho_vtheta=float(data.get("rho_vtheta", 0.0)),
            obs_var=obs_arr,
        )
        premia = RiskPremia(
            lam0_star=float(data.get("lam0", 0.0)), lam1_star=float(data.get("lam1", 0.0)),
            lam2_star=float(data.get("lam2", 0.0)), lam3_star=float(data.get("lam3", 0.0)),
            lam6_star=float(data.get("lam6", 0.0)), lam7_star=float(data.get("lam7", 0.0)),
        )
        omega = np.asarray(data.get("omega", np.zeros(11)), dtype=float)
        seasonal = SeasonalWeights(omega=omega)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameter mapping: {exc}")
    if len(obs_arr) != n_contracts:
        raise ConfigError(
            f"obs_var has {len(obs_arr)} entries for {n_contracts} contracts"
        )
    return ModelParams(real=real, premia=premia, seasonal=seasonal)
