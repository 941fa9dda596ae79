"""Posterior predictive futures curves: in-sample fit and a 5-day forecast.

Each retained chain record contributes its own parameters, sampled latent
path and observation-noise draw, so the bands integrate parameter and state
uncertainty jointly. Held-out days generated from the true model should land
inside the 95% band about 19 times in 20.
"""

import datetime as dt
import time

import numpy as np

from commodity_pmcmc import (
    ChainConfig,
    DiscretizationConfig,
    ModelParams,
    PriorSpec,
    RealParams,
    contract_schedule,
    generate_panel,
    predictive_futures,
    run_chain,
)

start = dt.date(2015, 1, 1)
horizon = 5
true_real = RealParams(
    beta=0.2, mu_xi=0.1, kappa_xi=0.4, mu_v=0.2, kappa_v=0.2,
    sigma_chi=0.5, sigma_xi=0.5, sigma_v=0.5,
    obs_var=np.full(10, 4.0),
)
phi_true = ModelParams(real=true_real)
contracts = contract_schedule(start, 29, 30, 10)
disc = DiscretizationConfig(p=50)

full_panel, truth = generate_panel(phi_true, contracts, 100 + horizon, disc,
                                   seed=9, start_date=start)
panel = full_panel.subset_days(100)

init = ModelParams(real=RealParams(
    beta=1.0, mu_xi=0.0, kappa_xi=1.0, mu_v=1.0, kappa_v=1.0,
    sigma_chi=1.0, sigma_xi=1.0, sigma_v=1.0, obs_var=np.ones(10),
))
cfg = ChainConfig(iterations=2500, burn_in=900, n_particles=100, seed=4,
                  disc=disc, init=init)
t0 = time.monotonic()
result = run_chain(panel, PriorSpec(enforce_variance_floor=False), cfg)
print(f"calibrated in {time.monotonic() - t0:.0f}s, acceptance {result.acceptance_rate:.2f}")

curve = predictive_futures(result.records, panel, horizon, cfg=disc, seed=12)

held_dates = full_panel.dates[100:]
held_idx = {d: i for i, d in enumerate(curve.dates)}
inside = total = 0
for t, date in enumerate(held_dates):
    row = held_idx[date]
    for n in range(full_panel.n_contracts):
        if not full_panel.mask[100 + t, n]:
            continue
        y = full_panel.log_prices[100 + t, n]
        total += 1
        inside += int(curve.lo[row, n] <= y <= curve.hi[row, n])
print(f"held-out coverage: {inside}/{total} log prices inside the 95% band")

print("\nforecast for the nearest live contract:")
alive = int(np.flatnonzero(np.isfinite(curve.mean[-1]))[0])
for row in range(100, 100 + horizon):
    print(f"  {curve.dates[row]}  mean {curve.mean[row, alive]:+.3f}  "
          f"band [{curve.lo[row, alive]:+.3f}, {curve.hi[row, alive]:+.3f}]")
