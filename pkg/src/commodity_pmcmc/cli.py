"""Command-line surface.

Subcommands
-----------
simulate    write a synthetic futures panel plus its ground-truth factor path
calibrate   run the particle MCMC sampler on a panel; writes chain.csv,
            trajectories.csv, summary.json
filter      run the Rao-Blackwellised filter at fixed parameters; writes
            per-day factor bands
predict     posterior predictive log futures curves from a stored chain
summarize   recompute summaries from a stored chain

All commands accept ``--seed``, ``--config <path>`` and ``--out <dir>`` (the
``COMMODITY_PMCMC_OUT`` environment variable supplies the default output
directory) and echo the exact configuration used into the output directory.
Exit codes: 0 success, 1 input error, 2 numerical failure (filter collapse).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys

import numpy as np

from .analytics import predictive_futures, summarize_chain
from .config import (
    ConfigError,
    ENV_OUT_DIR,
    RunConfig,
    model_params_from_mapping,
    parse_config,
    write_config,
)
from .mcmc import ChainRecord, run_chain
from .dynamics import LatentPath
from .model import InvalidParameterError
from .panel import PanelFormatError, contract_schedule, generate_panel, parse_panel, write_panel
from .rbfilter import FilterCollapseError, rb_sir_filter

__all__ = ["main"]

_F = ".17g"

_FACTOR_NAMES = ("chi", "xi", "theta", "v")


def _fmt(x: float) -> str:
    return format(float(x), _F)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _ensure_out(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _ensure_out(args.out)
    contracts = contract_schedule(
        cfg.sim_start(), cfg.sim_first_maturity, cfg.sim_spacing, cfg.sim_contracts
    )
    panel, truth = generate_panel(
        cfg.true_params(), contracts, cfg.sim_days, cfg.disc(), cfg.seed, cfg.sim_start()
    )
    write_panel(panel, os.path.join(out, "panel.csv"))
    with open(os.path.join(out, "truth.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date,chi,xi,theta,v\n")
        for t, date in enumerate(panel.dates):
            vals = (truth.chi[t + 1], truth.xi[t + 1], truth.theta[t + 1], truth.v[t + 1])
            fh.write(date.isoformat() + "," + ",".join(_fmt(v) for v in vals) + "\n")
    write_config(cfg, os.path.join(out, "config_used.cfg"))
    return 0


def _chain_csv_names(result) -> list:
    from .analytics import _reported_vector

    return _reported_vector(result.records[0].phi)[0]


def _cmd_calibrate(args) -> int:
    from .analytics import _reported_vector

    cfg = _load_config(args)
    out = _ensure_out(args.out)
    panel = parse_panel(args.panel)
    result = run_chain(panel, cfg.prior_spec(), cfg.chain_config(panel.n_contracts))

    names = _chain_csv_names(result)
    with open(os.path.join(out, "chain.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration," + ",".join(names) + ",log_lik_hat,log_prior,accepted\n")
        for rec in result.records:
            vec = _reported_vector(rec.phi)[1]
            cells = [str(rec.iteration)] + [_fmt(v) for v in vec]
            cells += [_fmt(rec.log_lik_hat), _fmt(rec.log_prior), str(int(rec.accepted))]
            fh.write(",".join(cells) + "\n")

    with open(os.path.join(out, "trajectories.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,day,chi,xi,theta,v\n")
        for rec in result.records[:: cfg.trajectory_thin]:
            p = rec.trajectory
            for day in range(p.days + 1):
                vals = (p.chi[day], p.xi[day], p.theta[day], p.v[day])
                fh.write(f"{rec.iteration},{day}," + ",".join(_fmt(v) for v in vals) + "\n")

    summary = summarize_chain(result.records, panel.dates)
    _write_summary_outputs(out, summary, extra={
        "acceptance_rate": result.acceptance_rate,
        "filter_collapse_count": result.collapse_count,
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "n_particles": cfg.n_particles,
        "retained_records": len(result.records),
    })
    write_config(cfg, os.path.join(out, "config_used.cfg"))
    return 0


def _write_summary_outputs(out: str, summary, extra: dict) -> None:
    doc = {
        "schema_version": 1,
        "parameters": summary.param_stats,
        "log_spot": {
            "dates": [d.isoformat() for d in summary.dates],
            "mean": [float(x) for x in summary.logspot_mean],
            "lo": [float(x) for x in summary.logspot_lo],
            "hi": [float(x) for x in summary.logspot_hi],
        },
    }
    doc.update(extra)
    _write_json(os.path.join(out, "summary.json"), doc)
    with open(os.path.join(out, "factor_bands.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date,factor,mean,lo,hi\n")
        for t, date in enumerate(summary.dates):
            for j, name in enumerate(_FACTOR_NAMES):
                fh.write(
                    f"{date.isoformat()},{name},"
                    f"{_fmt(summary.factor_mean[t, j])},"
                    f"{_fmt(summary.factor_lo[t, j])},{_fmt(summary.factor_hi[t, j])}\n"
                )


def _cmd_filter(args) -> int:
    cfg = _load_config(args)
    out = _ensure_out(args.out)
    panel = parse_panel(args.panel)
    try:
        with open(args.params, "r", encoding="utf-8") as fh:
            phi = model_params_from_mapping(json.load(fh), panel.n_contracts)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read params file: {exc}")
    res = rb_sir_filter(
        phi, panel, cfg.n_particles, cfg.disc(), cfg.seed,
        ess_fraction=cfg.ess_fraction, store_summaries=True,
    )
    bands = res.cloud_summaries
    with open(os.path.join(out, "factor_bands.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date,factor,mean,lo,hi\n")
        for t, date in enumerate(panel.dates):
            for j, name in enumerate(_FACTOR_NAMES):
                fh.write(
                    f"{date.isoformat()},{name},{_fmt(bands.mean[t, j])},"
                    f"{_fmt(bands.lo[t, j])},{_fmt(bands.hi[t, j])}\n"
                )
    _write_json(os.path.join(out, "filter.json"), {
        "schema_version": 1,
        "log_marginal_likelihood": res.log_marginal_likelihood,
        "min_ess": float(np.min(res.ess_history)),
        "resample_count": len(res.resample_days),
        "n_particles": cfg.n_particles,
    })
    write_config(cfg, os.path.join(out, "config_used.cfg"))
    return 0


def _read_chain_dir(chain_dir: str, n_contracts: int) -> list:
    """Rebuild (phi, trajectory) records from chain.csv + trajectories.csv."""
    chain_path = os.path.join(chain_dir, "chain.csv")
    traj_path = os.path.join(chain_dir, "trajectories.csv")
    try:
        with open(chain_path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {chain_path}: {exc}")
    header = lines[0].split(",")
    rows = {}
    for raw in lines[1:]:
        cells = raw.split(",")
        rows[int(cells[0])] = dict(zip(header[1:], cells[1:]))

    try:
        with open(traj_path, "r", encoding="utf-8") as fh:
            tlines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {traj_path}: {exc}")
    by_iter: dict[int, list] = {}
    for raw in tlines[1:]:
        cells = raw.split(",")
        by_iter.setdefault(int(cells[0]), []).append([float(c) for c in cells[2:]])

    records = []
    for it, days in sorted(by_iter.items()):
        row = rows.get(it)
        if row is None:
            raise ConfigError(f"trajectory iteration {it} missing from chain.csv")
        named = {k: float(v) for k, v in row.items() if k not in ("accepted",)}
        mapping = {
            **{k: named[k] for k in ("beta", "mu_xi", "kappa_xi", "mu_v", "kappa_v",
                                     "sigma_chi", "sigma_xi", "sigma_v",
                                     "rho_xichi", "rho_vtheta")},
            "obs_var": [named[f"obs_var_{i + 1}"] for i in range(n_contracts)],
            **{f"lam{j}": named[f"lam{j}"] for j in (0, 1, 2, 3, 6, 7)},
            "omega": [named[f"omega_{m}"] for m in range(2, 13)],
        }
        phi = model_params_from_mapping(mapping, n_contracts)
        arr = np.array(days)
        traj = LatentPath(chi=arr[:, 0], xi=arr[:, 1], theta=arr[:, 2], v=arr[:, 3])
        records.append(ChainRecord(
            phi=phi, trajectory=traj, log_lik_hat=named["log_lik_hat"],
            log_prior=named["log_prior"], accepted=bool(int(row["accepted"])),
            iteration=it,
        ))
    if not records:
        raise ConfigError("stored chain holds no trajectories")
    return records


def _cmd_predict(args) -> int:
    cfg = _load_config(args)
    out = _ensure_out(args.out)
    panel = parse_panel(args.panel)
    horizon = cfg.horizon if args.horizon is None else args.horizon
    records = _read_chain_dir(args.chain, panel.n_contracts)
    curve = predictive_futures(records, panel, horizon, cfg=cfg.disc(), seed=cfg.seed)
    with open(os.path.join(out, "predictive.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date,contract,in_sample,mean,lo,hi\n")
        for i, date in enumerate(curve.dates):
            for j, contract in enumerate(curve.contracts):
                if not np.isfinite(curve.mean[i, j]):
                    continue
                fh.write(
                    f"{date.isoformat()},{contract.maturity_date.isoformat()},"
                    f"{int(curve.in_sample[i])},{_fmt(curve.mean[i, j])},"
                    f"{_fmt(curve.lo[i, j])},{_fmt(curve.hi[i, j])}\n"
                )
    write_config(cfg, os.path.join(out, "config_used.cfg"))
    return 0


def _cmd_summarize(args) -> int:
    cfg = _load_config(args)
    out = _ensure_out(args.out)
    panel = parse_panel(args.panel)
    records = _read_chain_dir(args.chain, panel.n_contracts)
    summary = summarize_chain(records, panel.dates)
    _write_summary_outputs(out, summary, extra={"retained_records": len(records)})
    write_config(cfg, os.path.join(out, "config_used.cfg"))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commodity-pmcmc",
        description="Calibrate and filter the four-factor seasonal commodity futures model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, panel=False):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", default=os.environ.get(ENV_OUT_DIR, "."),
                       help="output directory")
        if panel:
            p.add_argument("--panel", required=True, help="panel CSV path")

    p_sim = sub.add_parser("simulate", help="generate a synthetic panel")
    common(p_sim)

    p_cal = sub.add_parser("calibrate", help="run the PMCMC sampler")
    common(p_cal, panel=True)

    p_fil = sub.add_parser("filter", help="run the particle filter at fixed parameters")
    common(p_fil, panel=True)
    p_fil.add_argument("--params", required=True, help="JSON file of model parameters")

    p_pre = sub.add_parser("predict", help="posterior predictive futures curves")
    common(p_pre, panel=True)
    p_pre.add_argument("--chain", required=True, help="directory holding chain.csv/trajectories.csv")
    p_pre.add_argument("--horizon", type=int, default=None, help="forecast days past the panel")

    p_sum = sub.add_parser("summarize", help="recompute summaries from a stored chain")
    common(p_sum, panel=True)
    p_sum.add_argument("--chain", required=True, help="directory holding chain.csv/trajectories.csv")

    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "filter": _cmd_filter,
    "predict": _cmd_predict,
    "summarize": _cmd_summarize,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the CLI contract reserves 2 for
        # numerical failures and reports input problems as 1
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, PanelFormatError, InvalidParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FilterCollapseError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
