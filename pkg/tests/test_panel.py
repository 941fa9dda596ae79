import datetime as dt

import numpy as np
import pytest

from commodity_pmcmc import (
    ContractSpec,
    DiscretizationConfig,
    FuturesPanel,
    ModelParams,
    PanelFormatError,
    RealParams,
    contract_schedule,
    generate_panel,
    parse_panel,
    write_panel,
)

START = dt.date(2015, 1, 1)


def _phi(n_contracts, obs_var=4.0, **overrides):
    base = dict(
        beta=0.2, mu_xi=0.1, kappa_xi=0.4, mu_v=0.2, kappa_v=0.2,
        sigma_chi=0.5, sigma_xi=0.5, sigma_v=0.5,
        obs_var=np.full(n_contracts, obs_var),
    )
    base.update(overrides)
    return ModelParams(real=RealParams(**base))


class TestSchedule:
    def test_standard_thirty_day_grid(self):
        contracts = contract_schedule(START, 29, 30, 10)
        taus = [c.tau(START) for c in contracts]
        assert taus == [29 + 30 * k for k in range(10)]
        assert taus[-1] == 299

    def test_real_panel_shape(self):
        # 150 days, 10 contracts, first maturity 21 days, 20-day spacing
        contracts = contract_schedule(START, 21, 20, 10)
        phi = _phi(10)
        panel, _ = generate_panel(phi, contracts, 150, DiscretizationConfig(p=0), seed=2,
                                  start_date=START)
        tau = panel.tau_grid
        assert tau[0].tolist() == [21 + 20 * k for k in range(10)]
        # tau decreases by the day gap between consecutive observations
        np.testing.assert_array_equal(tau[0] - tau[1], np.ones(10, dtype=int))
        assert tau[-1, 0] == 21 - 149
        # matured contracts are masked, never observed past maturity
        assert not panel.mask[tau < 0].any()
        assert panel.mask[tau >= 0].all()


class TestRoundTrip:
    def test_full_precision_round_trip(self, tmp_path):
        contracts = contract_schedule(START, 29, 30, 4)
        phi = _phi(4)
        panel, _ = generate_panel(phi, contracts, 40, DiscretizationConfig(p=5), seed=3,
                                  start_date=START)
        path = tmp_path / "panel.csv"
        write_panel(panel, path)
        back = parse_panel(path)
        assert back.dates == panel.dates
        assert [c.maturity_date for c in back.contracts] == [c.maturity_date for c in panel.contracts]
        np.testing.assert_array_equal(back.mask, panel.mask)
        # 17 significant digits round-trip the written price strings exactly;
        # the log prices then agree to the one-ulp precision of exp/log
        lines = path.read_text().splitlines()
        cells = [row.split(",")[1:] for row in lines[1:]]
        for t in range(panel.n_days):
            for n in range(panel.n_contracts):
                if panel.mask[t, n]:
                    assert float(cells[t][n]) == np.exp(panel.log_prices[t, n])
        a = panel.log_prices[panel.mask]
        b = back.log_prices[back.mask]
        assert np.max(np.abs(a - b)) <= 1e-13

    def test_written_blank_for_masked(self, tmp_path):
        contracts = [ContractSpec(START + dt.timedelta(days=2))]
        panel = FuturesPanel(
            dates=[START, START + dt.timedelta(days=1), START + dt.timedelta(days=2)],
            contracts=contracts,
            log_prices=np.array([[0.1], [np.nan], [0.3]]),
        )
        path = tmp_path / "p.csv"
        write_panel(panel, path)
        lines = path.read_text().splitlines()
        assert lines[2].endswith(",")

    def test_byte_deterministic(self, tmp_path):
        contracts = contract_schedule(START, 29, 30, 3)
        phi = _phi(3)
        p1, _ = generate_panel(phi, contracts, 10, seed=5, start_date=START)
        p2, _ = generate_panel(phi, contracts, 10, seed=5, start_date=START)
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_panel(p1, f1)
        write_panel(p2, f2)
        assert f1.read_bytes() == f2.read_bytes()


class TestParseErrors:
    def _write(self, tmp_path, text):
        f = tmp_path / "x.csv"
        f.write_text(text)
        return f

    def test_log_applied_to_prices(self, tmp_path):
        f = self._write(tmp_path, "date,2015-03-01\n2015-01-01,%.17g\n" % np.exp(2.0))
        panel = parse_panel(f)
        assert panel.log_prices[0, 0] == pytest.approx(2.0)

    def test_missing_cell_masked_day_kept(self, tmp_path):
        f = self._write(
            tmp_path,
            "date,2015-03-01,2015-04-01\n2015-01-01,1.5,\n2015-01-02,1.4,2.0\n",
        )
        panel = parse_panel(f)
        assert panel.n_days == 2
        assert not panel.mask[0, 1]
        assert panel.mask[1, 1]

    def test_malformed_row_reports_line(self, tmp_path):
        f = self._write(tmp_path, "date,2015-03-01\n2015-01-01,1.5\n2015-01-02\n")
        with pytest.raises(PanelFormatError) as err:
            parse_panel(f)
        assert err.value.line == 3

    def test_non_positive_price(self, tmp_path):
        f = self._write(tmp_path, "date,2015-03-01\n2015-01-01,-2.0\n")
        with pytest.raises(PanelFormatError) as err:
            parse_panel(f)
        assert "non-positive" in str(err.value)

    def test_non_monotone_dates(self, tmp_path):
        f = self._write(tmp_path, "date,2015-03-01\n2015-01-05,1.0\n2015-01-04,1.0\n")
        with pytest.raises(PanelFormatError):
            parse_panel(f)

    def test_bad_header(self, tmp_path):
        f = self._write(tmp_path, "time,2015-03-01\n2015-01-01,1.0\n")
        with pytest.raises(PanelFormatError) as err:
            parse_panel(f)
        assert err.value.line == 1

    def test_bad_price_token(self, tmp_path):
        f = self._write(tmp_path, "date,2015-03-01\n2015-01-01,abc\n")
        with pytest.raises(PanelFormatError):
            parse_panel(f)


class TestGenerate:
    def test_zero_noise_matches_curves(self):
        from commodity_pmcmc import log_futures_curve

        contracts = contract_schedule(START, 29, 30, 3)
        phi = _phi(3, obs_var=1e-30)
        panel, truth = generate_panel(phi, contracts, 12, DiscretizationConfig(p=4),
                                      seed=6, start_date=START)
        rn = phi.risk_neutral()
        for t, date in enumerate(panel.dates):
            clean = log_futures_curve(rn, phi.seasonal, truth.state(t + 1), contracts, date)
            np.testing.assert_allclose(panel.log_prices[t], clean, atol=1e-10)

    @pytest.mark.slow
    def test_noise_scale_reproduced(self):
        from commodity_pmcmc import log_futures_curve

        n_days = 10_000
        contracts = [ContractSpec(START + dt.timedelta(days=n_days + 50))]
        phi = _phi(1, obs_var=4.0)
        panel, truth = generate_panel(phi, contracts, n_days, DiscretizationConfig(p=0),
                                      seed=7, start_date=START)
        rn = phi.risk_neutral()
        resid = np.empty(n_days)
        for t, date in enumerate(panel.dates):
            clean = log_futures_curve(rn, phi.seasonal, truth.state(t + 1), contracts, date)
            resid[t] = panel.log_prices[t, 0] - clean[0]
        assert resid.std() == pytest.approx(2.0, rel=0.05)
        assert abs(resid.mean()) <= 4.0 * 2.0 / np.sqrt(n_days)

    def test_truth_path_returned_with_panel(self):
        contracts = contract_schedule(START, 29, 30, 2)
        panel, truth = generate_panel(_phi(2), contracts, 8, seed=8, start_date=START)
        assert truth.days == 8
        assert panel.n_days == 8

    def test_subset_days(self):
        contracts = contract_schedule(START, 29, 30, 2)
        panel, _ = generate_panel(_phi(2), contracts, 8, seed=9, start_date=START)
        sub = panel.subset_days(5)
        assert sub.n_days == 5
        np.testing.assert_array_equal(sub.log_prices, panel.log_prices[:5])
