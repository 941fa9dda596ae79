import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commodity_pmcmc import (
    ContractSpec,
    InvalidParameterError,
    LatentState,
    ModelParams,
    RealParams,
    RiskPremia,
    SeasonalWeights,
    b_coefficients,
    log_futures_curve,
    seasonal_component,
    to_risk_neutral,
)
from oracles import b0_by_quadrature, mc_futures_price


def _real(**overrides):
    base = dict(
        beta=0.2, mu_xi=0.1, kappa_xi=0.4, mu_v=0.2, kappa_v=0.2,
        sigma_chi=0.5, sigma_xi=0.5, sigma_v=0.5,
    )
    base.update(overrides)
    return RealParams(**base)


class TestSeasonal:
    def test_zero_weights_any_date(self):
        w = SeasonalWeights()
        for date in (dt.date(2020, 1, 15), dt.date(2020, 7, 1), dt.date(1999, 12, 31)):
            assert seasonal_component(date, w) == 0.0

    def test_january_is_base_month(self):
        w = SeasonalWeights(omega=np.linspace(-1, 1, 11))
        assert seasonal_component(dt.date(2021, 1, 7), w) == 0.0

    def test_indicator_selects_single_month(self):
        omega = np.zeros(11)
        omega[0] = 0.3  # February
        w = SeasonalWeights(omega=omega)
        assert seasonal_component(dt.date(2020, 2, 10), w) == pytest.approx(0.3)
        assert seasonal_component(dt.date(2020, 3, 10), w) == 0.0

    @given(st.integers(min_value=1, max_value=12))
    def test_month_lookup_matches_weight_vector(self, month):
        omega = np.arange(2.0, 13.0)
        w = SeasonalWeights(omega=omega)
        date = dt.date(2020, month, 3)
        expected = 0.0 if month == 1 else float(month)
        assert seasonal_component(date, w) == expected


class TestRiskNeutralMap:
    def test_zero_premia_is_identity(self):
        r = _real(rho_xichi=0.3, rho_vtheta=-0.2)
        rn = to_risk_neutral(r, RiskPremia())
        assert rn.beta_star == r.beta
        assert rn.mu_xi_star == r.mu_xi
        assert rn.kappa_xi_star == r.kappa_xi
        assert rn.mu_v_star == r.mu_v
        assert rn.kappa_v_star == r.kappa_v
        assert rn.lambda0 == 0.0
        assert (rn.sigma_chi, rn.sigma_xi, rn.sigma_v) == (0.5, 0.5, 0.5)
        assert (rn.rho_xichi, rn.rho_vtheta) == (0.3, -0.2)

    def test_direct_substitution(self):
        rn = to_risk_neutral(_real(), RiskPremia(lam1_star=0.1))
        assert rn.beta_star == pytest.approx(0.2 + 0.1 * 0.5)
        rn = to_risk_neutral(_real(), RiskPremia(lam3_star=0.2))
        assert rn.kappa_xi_star == pytest.approx(0.4 + 0.2 * 0.5)

    def test_premium_scaling_by_diffusions(self):
        rn = to_risk_neutral(_real(), RiskPremia(lam0_star=2.0, lam2_star=1.0, lam6_star=-1.0))
        assert rn.lambda0 == pytest.approx(1.0)
        assert rn.mu_xi_star == pytest.approx(0.1 - 0.5)
        assert rn.mu_v_star == pytest.approx(0.2 + 0.5)

    def test_negative_derived_rate_rejected(self):
        with pytest.raises(InvalidParameterError):
            to_risk_neutral(_real(), RiskPremia(lam1_star=-1.0))  # beta* = -0.3
        with pytest.raises(InvalidParameterError):
            to_risk_neutral(_real(), RiskPremia(lam3_star=-1.0))

    def test_lam5_fixed_zero(self):
        with pytest.raises(InvalidParameterError):
            RiskPremia(lam5_star=0.1)


class TestBCoefficients:
    def setup_method(self):
        self.rn = to_risk_neutral(_real(), RiskPremia())

    def test_tau_zero_boundary(self):
        b = b_coefficients(0.0, self.rn)
        assert b.b0 == 0.0
        assert b.b1 == 1.0
        assert b.b2 == 1.0
        assert b.b3 == 1.0

    def test_long_maturity_loadings_vanish(self):
        b = b_coefficients(1e4, self.rn)
        assert b.b1 < 1e-12
        assert b.b2 < 1e-12
        assert b.b3 == 1.0

    @given(st.floats(min_value=0.0, max_value=200.0), st.floats(min_value=0.01, max_value=50.0))
    @settings(max_examples=50)
    def test_loadings_strictly_decreasing(self, tau, gap):
        b_near = b_coefficients(tau, self.rn)
        b_far = b_coefficients(tau + gap, self.rn)
        assert b_far.b1 < b_near.b1
        assert b_far.b2 < b_near.b2

    def test_b0_matches_ode_quadrature(self):
        for premia in (RiskPremia(), RiskPremia(lam0_star=0.4, lam1_star=0.1, lam2_star=-0.2, lam3_star=0.3)):
            for rho in (0.0, 0.35):
                rn = to_risk_neutral(_real(rho_xichi=rho), premia)
                for tau in (1.0, 30.0, 120.0):
                    expect = b0_by_quadrature(tau, rn)
                    got = float(b_coefficients(tau, rn).b0)
                    assert got == pytest.approx(expect, abs=1e-10)

    def test_invalid_parameters(self):
        rn = to_risk_neutral(_real(beta=0.0), RiskPremia())
        with pytest.raises(InvalidParameterError):
            b_coefficients(10.0, rn)
        with pytest.raises(InvalidParameterError):
            b_coefficients(-1.0, self.rn)

    def test_vectorized_over_tau(self):
        taus = np.array([0.0, 10.0, 20.0])
        b = b_coefficients(taus, self.rn)
        assert b.b0.shape == (3,)
        assert b.b0[0] == 0.0


class TestFuturesCurve:
    def setup_method(self):
        self.rn = to_risk_neutral(_real(), RiskPremia())
        self.w = SeasonalWeights()
        self.date = dt.date(2020, 1, 1)

    def _contracts(self, taus):
        return [ContractSpec(self.date + dt.timedelta(days=int(t))) for t in taus]

    def test_spot_identity_at_maturity(self):
        s = LatentState(chi=0.0, xi=0.0, theta=0.0, v=0.3)
        curve = log_futures_curve(self.rn, self.w, s, self._contracts([0]), self.date)
        assert curve[0] == 0.0  # futures price 1

    def test_affine_superposition(self):
        contracts = self._contracts([0, 15, 45, 200])
        taus = np.array([0.0, 15.0, 45.0, 200.0])
        b = b_coefficients(taus, self.rn)
        s0 = LatentState(chi=0.2, xi=-0.4, theta=0.1, v=0.5)
        base = log_futures_curve(self.rn, self.w, s0, contracts, self.date)
        for dchi, dxi, dtheta in ((0.3, 0.0, 0.0), (0.0, -0.2, 0.0), (0.0, 0.0, 0.7)):
            s1 = LatentState(chi=s0.chi + dchi, xi=s0.xi + dxi, theta=s0.theta + dtheta, v=s0.v)
            shifted = log_futures_curve(self.rn, self.w, s1, contracts, self.date)
            np.testing.assert_allclose(
                shifted - base, b.b2 * dchi + b.b1 * dxi + b.b3 * dtheta, rtol=0, atol=1e-14
            )

    def test_theta_shift_moves_whole_curve(self):
        contracts = self._contracts([3, 60, 299])
        s0 = LatentState(chi=0.1, xi=0.2, theta=0.0, v=0.4)
        s1 = LatentState(chi=0.1, xi=0.2, theta=0.9, v=0.4)
        c0 = log_futures_curve(self.rn, self.w, s0, contracts, self.date)
        c1 = log_futures_curve(self.rn, self.w, s1, contracts, self.date)
        np.testing.assert_allclose(c1 - c0, 0.9, rtol=0, atol=1e-14)

    def test_variance_factor_absent(self):
        contracts = self._contracts([1, 30, 300])
        for v in (0.0, 0.5, 7.3):
            s = LatentState(chi=0.1, xi=0.2, theta=-0.3, v=v)
            curve = log_futures_curve(self.rn, self.w, s, contracts, self.date)
            if v == 0.0:
                base = curve
            else:
                np.testing.assert_array_equal(curve, base)

    def test_seasonal_offset_uses_maturity_month(self):
        omega = np.zeros(11)
        omega[0] = 0.25  # February
        w = SeasonalWeights(omega=omega)
        s = LatentState(chi=0.0, xi=0.0, theta=0.0, v=0.3)
        # maturity end of January vs early February
        contracts = [ContractSpec(dt.date(2020, 1, 31)), ContractSpec(dt.date(2020, 2, 5))]
        curve = log_futures_curve(self.rn, w, s, contracts, self.date)
        b_jan = b_coefficients(30.0, self.rn)
        b_feb = b_coefficients(35.0, self.rn)
        assert curve[0] == pytest.approx(float(b_jan.b0))
        assert curve[1] == pytest.approx(0.25 + float(b_feb.b0))

    @pytest.mark.slow
    def test_small_scale_mc_price_check(self):
        # quick cross-check of the closed form against the simulation oracle,
        # including a correlated-volatility case; the full-scale check lives
        # in the acceptance suite
        state = LatentState(chi=0.3, xi=0.2, theta=0.1, v=1.0)
        for rho_vt in (0.0, 0.4):
            rn = to_risk_neutral(_real(rho_vtheta=rho_vt, mu_v=0.6), RiskPremia())
            tau = 5.0
            closed = math.exp(float(log_futures_curve(
                rn, SeasonalWeights(), state,
                [ContractSpec(dt.date(2020, 1, 1) + dt.timedelta(days=5))], dt.date(2020, 1, 1),
            )[0]))
            est, se = mc_futures_price(rn, state, tau, n_pairs=150_000, dt=0.02, seed=5)
            assert abs(closed - est) <= 4.0 * se
