import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from commodity_pmcmc import ContractSpec, ModelParams, RealParams, contract_schedule, generate_panel


@pytest.fixture
def params_benchmark():
    """The synthetic-study parameter set used throughout the tests."""
    real = RealParams(
        beta=0.2, mu_xi=0.1, kappa_xi=0.4, mu_v=0.2, kappa_v=0.2,
        sigma_chi=0.5, sigma_xi=0.5, sigma_v=0.5,
        obs_var=np.full(10, 4.0),
    )
    return ModelParams(real=real)


@pytest.fixture
def start_date():
    return dt.date(2015, 1, 1)


@pytest.fixture
def small_panel(params_benchmark, start_date):
    """20 days x 5 contracts, 30-day spacing."""
    phi = ModelParams(real=RealParams(
        beta=0.2, mu_xi=0.1, kappa_xi=0.4, mu_v=0.2, kappa_v=0.2,
        sigma_chi=0.5, sigma_xi=0.5, sigma_v=0.5, obs_var=np.full(5, 4.0),
    ))
    contracts = contract_schedule(start_date, 29, 30, 5)
    panel, truth = generate_panel(phi, contracts, 20, seed=11, start_date=start_date)
    return phi, panel, truth
