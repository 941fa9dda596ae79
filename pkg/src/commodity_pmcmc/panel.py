"""Futures panel container, CSV ingestion and synthetic panel generation.

Panel CSV layout: a ``date`` column of ISO-8601 observation days followed by
one column per contract, named by the contract's ISO maturity date. Cells
hold raw futures prices; blanks are missing observations. The parser applies
the natural log and masks blanks. A contract contributes nothing after its
maturity date.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DiscretizationConfig, simulate_latent_path, LatentPath
from .model import ContractSpec, LatentState, ModelParams, log_futures_curve

__all__ = [
    "PanelFormatError",
    "FuturesPanel",
    "contract_schedule",
    "parse_panel",
    "write_panel",
    "generate_panel",
]

_FLOAT_FMT = ".17g"  # full float64 round-trip precision


class PanelFormatError(ValueError):
    """Raised on malformed panel files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass
class FuturesPanel:
    """T observation days by N contracts of log futures prices with a mask.

    ``mask[t, n]`` is True where contract n is observed on day t. Entries on
    or after a contract's maturity are masked automatically.
    """

    dates: list
    contracts: list
    log_prices: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.log_prices = np.asarray(self.log_prices, dtype=float)
        t, n = self.log_prices.shape
        if len(self.dates) != t or len(self.contracts) != n:
            raise PanelFormatError("panel dimensions do not match dates/contracts")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise PanelFormatError("observation dates must be strictly increasing")
        if self.mask is None:
            self.mask = np.isfinite(self.log_prices)
        self.mask = np.asarray(self.mask, dtype=bool) & (self.tau_grid >= 0)

    @property
    def n_days(self) -> int:
        return self.log_prices.shape[0]

    @property
    def n_contracts(self) -> int:
        return self.log_prices.shape[1]

    @property
    def tau_grid(self) -> np.ndarray:
        """Days to maturity per (day, contract); negative past maturity."""
        return np.array(
            [[c.tau(d) for c in self.contracts] for d in self.dates], dtype=int
        )

    def subset_days(self, stop: int) -> "FuturesPanel":
        """The first ``stop`` observation days of the panel."""
        return FuturesPanel(
            dates=self.dates[:stop],
            contracts=self.contracts,
            log_prices=self.log_prices[:stop].copy(),
            mask=self.mask[:stop].copy(),
        )


def contract_schedule(
    start_date: dt.date, first_maturity_days: int, spacing_days: int, n_contracts: int
) -> list[ContractSpec]:
    """Evenly spaced maturities: the k-th contract matures
    ``first_maturity_days + k*spacing_days`` days after ``start_date``."""
    return [
        ContractSpec(maturity_date=start_date + dt.timedelta(days=first_maturity_days + k * spacing_days))
        for k in range(n_contracts)
    ]


def parse_panel(path) -> FuturesPanel:
    """Read a panel CSV (see module docstring for the layout).

    Raises
    ------
    PanelFormatError
        On a malformed header or row (with the line number), a non-positive
        price, or non-monotone dates.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise PanelFormatError(f"cannot read panel file: {exc}")
    if not lines:
        raise PanelFormatError("empty panel file", line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if not header or header[0] != "date":
        raise PanelFormatError("header must start with a 'date' column", line=1)
    try:
        contracts = [ContractSpec(maturity_date=dt.date.fromisoformat(h)) for h in header[1:]]
    except ValueError as exc:
        raise PanelFormatError(f"contract columns must be ISO maturity dates: {exc}", line=1)
    if not contracts:
        raise PanelFormatError("panel needs at least one contract column", line=1)

    dates: list[dt.date] = []
    rows: list[list[float]] = []
    for i, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = [c.strip() for c in raw.split(",")]
        if len(cells) != len(header):
            raise PanelFormatError(
                f"expected {len(header)} cells, found {len(cells)}", line=i
            )
        try:
            date = dt.date.fromisoformat(cells[0])
        except ValueError:
            raise PanelFormatError(f"bad date {cells[0]!r}", line=i)
        if dates and date <= dates[-1]:
            raise PanelFormatError("observation dates must be strictly increasing", line=i)
        row = []
        for j, cell in enumerate(cells[1:]):
            if cell == "":
                row.append(np.nan)
                continue
            try:
                price = float(cell)
            except ValueError:
                raise PanelFormatError(f"bad price {cell!r}", line=i)
            if not np.isfinite(price) or price <= 0.0:
                raise PanelFormatError(f"non-positive price {cell!r}", line=i)
            row.append(np.log(price))
        dates.append(date)
        rows.append(row)
    if not rows:
        raise PanelFormatError("panel has no observation rows", line=2)
    return FuturesPanel(dates=dates, contracts=contracts, log_prices=np.array(rows))


def write_panel(panel: FuturesPanel, path) -> None:
    """Write a panel CSV; masked cells become blanks, prices carry 17 digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date," + ",".join(c.maturity_date.isoformat() for c in panel.contracts) + "\n")
        for t, date in enumerate(panel.dates):
            cells = [date.isoformat()]
            for n in range(panel.n_contracts):
                if panel.mask[t, n]:
                    cells.append(format(np.exp(panel.log_prices[t, n]), _FLOAT_FMT))
                else:
                    cells.append("")
            fh.write(",".join(cells) + "\n")


def generate_panel(
    phi_true: ModelParams,
    contracts: list[ContractSpec],
    n_days: int,
    cfg: DiscretizationConfig = DiscretizationConfig(),
    seed: int | np.random.Generator = 0,
    start_date: dt.date = dt.date(2015, 1, 1),
    init: LatentState | None = None,
) -> tuple[FuturesPanel, LatentPath]:
    """Simulate a synthetic panel and return it with the ground-truth path.

    Observation day t (t = 1..n_days) falls on ``start_date + (t-1)`` days.
    Noiseless log curves come from the closed-form futures price at the
    simulated state; independent Gaussian noise with the per-contract
    variances of ``phi_true.real.obs_var`` is added on top. Draw order:
    the full latent path first, then the noise matrix.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if init is None:
        init = LatentState(chi=0.0, xi=0.0, theta=0.0, v=max(phi_true.real.mu_v, cfg.v_floor))
    path = simulate_latent_path(phi_true.real, init, n_days, cfg, rng)
    rn = phi_true.risk_neutral()

    n = len(contracts)
    obs_var = np.broadcast_to(phi_true.real.obs_var, (n,))
    dates = [start_date + dt.timedelta(days=t) for t in range(n_days)]
    log_prices = np.full((n_days, n), np.nan)
    noise = rng.standard_normal((n_days, n)) * np.sqrt(obs_var)
    for t, date in enumerate(dates):
        taus = np.array([c.tau(date) for c in contracts])
        active = taus >= 0
        if not np.any(active):
            continue
        sub = [c for c, a in zip(contracts, active) if a]
        clean = log_futures_curve(rn, phi_true.seasonal, path.state(t + 1), sub, date)
        log_prices[t, active] = clean + noise[t, active]
    return FuturesPanel(dates=dates, contracts=contracts, log_prices=log_prices), path
