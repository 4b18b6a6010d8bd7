import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import betaln, gammaln
from scipy.stats import poisson

from varcast.core import InvalidInputError, validate_hyperparams
from varcast.bnp import (
    PoissonPrediction,
    asymptotic_xi,
    asymptotic_xi_r,
    beta_expectation,
    expected_new_rare,
    expected_new_rare_cum,
    expected_new_rare_noisy,
    expected_new_rare_noisy_cum,
    expected_new_variants,
    expected_new_variants_curve,
    expected_new_variants_noisy,
    expected_new_variants_noisy_curve,
    log_rising,
    new_variants_posterior,
)

P_MAIN = validate_hyperparams(20.0, 0.1, 1.0)

st_params = (
    st.tuples(st.floats(0.05, 200.0), st.floats(0.0, 0.9), st.floats(-0.5, 20.0))
    .filter(lambda t: t[1] + t[2] > 1e-3)
    .map(lambda t: validate_hyperparams(*t))
)


class TestLogRising:
    def test_integer_product(self):
        assert log_rising(1.0, 3) == pytest.approx(np.log(6.0), rel=1e-14)

    def test_empty_product(self):
        assert log_rising(2.5, 0) == 0.0

    def test_long_product_against_log_sum(self):
        oracle = sum(np.log(0.5 + i) for i in range(50))
        assert log_rising(0.5, 50) == pytest.approx(oracle, rel=1e-13)

    def test_nonpositive_base_rejected(self):
        with pytest.raises(InvalidInputError):
            log_rising(0.0, 3)
        with pytest.raises(InvalidInputError):
            log_rising(-1.0, 3)


class TestExpectedNewVariants:
    def test_first_sample_rate_is_mass(self):
        for p in (P_MAIN, validate_hyperparams(3.5, 0.7, 0.2)):
            assert expected_new_variants(0, 1, p) == pytest.approx(p.alpha, rel=1e-12)

    def test_zero_followup(self):
        assert expected_new_variants(50, 0, P_MAIN) == 0.0

    def test_closed_form_telescoping(self):
        # independent oracle: the sum of gamma ratios telescopes exactly
        def closed(n, m, p):
            t = lambda x: np.exp(gammaln(p.c + p.sigma + x) - gammaln(p.c + x))
            return (
                p.alpha / p.sigma
                * np.exp(gammaln(p.c + 1) - gammaln(p.c + p.sigma))
                * (t(n + m) - t(n))
            )

        for n, m in [(0, 10), (10, 10), (100, 500), (7, 1234)]:
            for p in (P_MAIN, validate_hyperparams(60, 0.5, 1), validate_hyperparams(2, 0.9, 0)):
                assert expected_new_variants(n, m, p) == pytest.approx(
                    closed(n, m, p), rel=1e-10
                )

    def test_increment_matches_one_step_prediction(self):
        for n, m in [(5, 3), (40, 17), (100, 2)]:
            inc = expected_new_variants(n, m, P_MAIN) - expected_new_variants(n, m - 1, P_MAIN)
            assert inc == pytest.approx(expected_new_variants(n + m - 1, 1, P_MAIN), rel=1e-9)

    def test_curve_matches_scalar(self):
        curve = expected_new_variants_curve(12, 30, P_MAIN)
        for m in (1, 7, 30):
            assert curve[m - 1] == pytest.approx(expected_new_variants(12, m, P_MAIN), rel=1e-12)

    @given(st_params, st.integers(0, 60), st.integers(1, 60))
    def test_monotone_in_m_and_n(self, p, n, m):
        lo = expected_new_variants(n, m, p)
        assert expected_new_variants(n, m + 1, p) > lo
        assert expected_new_variants(n + 1, m, p) <= lo + 1e-12 * lo

    @given(st_params, st.integers(0, 40), st.integers(1, 40), st.floats(1.1, 5.0))
    def test_linear_in_mass(self, p, n, m, scale):
        scaled = validate_hyperparams(p.alpha * scale, p.sigma, p.c)
        assert expected_new_variants(n, m, scaled) == pytest.approx(
            scale * expected_new_variants(n, m, p), rel=1e-12
        )


class TestPoissonPrediction:
    def test_zero_rate(self):
        pred = PoissonPrediction(0.0)
        for q in (0.01, 0.5, 0.99):
            assert pred.quantile(q) == 0

    def test_quantiles_bracket_cdf(self):
        pred = new_variants_posterior(10, 200, P_MAIN)
        for q in (0.025, 0.5, 0.975):
            k = pred.quantile(q)
            assert poisson.cdf(k, pred.mean) >= q
            if k > 0:
                assert poisson.cdf(k - 1, pred.mean) < q

    def test_median_against_cdf_inversion(self):
        rate = expected_new_variants(10, 200, P_MAIN)
        k = 0
        while poisson.cdf(k, rate) < 0.5:
            k += 1
        assert new_variants_posterior(10, 200, P_MAIN).quantile(0.5) == k

    def test_mean_is_definitional(self):
        assert new_variants_posterior(3, 17, P_MAIN).mean == expected_new_variants(3, 17, P_MAIN)

    def test_clt_width_at_large_rate(self):
        pred = PoissonPrediction(2.5e4)
        lo, hi = pred.quantile(0.025), pred.quantile(0.975)
        ratio = (hi - lo) / (2 * 1.96 * np.sqrt(pred.mean))
        assert abs(ratio - 1.0) < 0.05


class TestExpectedNewRare:
    def test_sum_over_r_partitions_total(self):
        for n, m in [(10, 10), (100, 60)]:
            total = sum(expected_new_rare(n, m, r, P_MAIN) for r in range(1, m + 1))
            assert total == pytest.approx(expected_new_variants(n, m, P_MAIN), rel=1e-8)

    def test_single_followup_sample(self):
        assert expected_new_rare(33, 1, 1, P_MAIN) == pytest.approx(
            expected_new_variants(33, 1, P_MAIN), rel=1e-12
        )

    def test_cumulative_endpoints(self):
        n, m = 25, 40
        assert expected_new_rare_cum(n, m, m, P_MAIN) == pytest.approx(
            expected_new_variants(n, m, P_MAIN), rel=1e-10
        )
        assert expected_new_rare_cum(n, m, 1, P_MAIN) == pytest.approx(
            expected_new_rare(n, m, 1, P_MAIN), rel=1e-12
        )

    def test_cumulative_monotone(self):
        n, m = 12, 25
        vals = [expected_new_rare_cum(n, m, r, P_MAIN) for r in range(1, m + 1)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_r_out_of_range(self):
        with pytest.raises(InvalidInputError):
            expected_new_rare(5, 10, 0, P_MAIN)
        with pytest.raises(InvalidInputError):
            expected_new_rare(5, 10, 11, P_MAIN)


class TestAsymptotics:
    def test_xi_closed_form(self):
        assert asymptotic_xi(P_MAIN) == pytest.approx(200.0 / math.gamma(1.1), rel=1e-12)

    def test_xi_1_reduces(self):
        for p in (P_MAIN, validate_hyperparams(7, 0.6, 0.4)):
            expect = p.alpha * math.gamma(p.c + 1) / math.gamma(p.c + p.sigma)
            assert asymptotic_xi_r(p, 1) == pytest.approx(expect, rel=1e-12)

    def test_sigma_zero_rejected(self):
        p0 = validate_hyperparams(5, 0.0, 1.0)
        with pytest.raises(InvalidInputError):
            asymptotic_xi(p0)
        with pytest.raises(InvalidInputError):
            asymptotic_xi_r(p0, 2)

    def test_growth_limit_with_exact_correction(self):
        # U(0,M)/M^sigma approaches xi with a known leading correction
        # proportional to M^-sigma; verify the law rather than a loose bound,
        # which at M = 1e6 is still far from tight for small sigma.
        M = 10**6
        for sigma in (0.1, 0.25, 0.5):
            p = validate_hyperparams(20.0, sigma, 1.0)
            xi = asymptotic_xi(p)
            ratio = expected_new_variants(0, M, p) / M**sigma
            correction = 1.0 - math.gamma(p.c + sigma) / math.gamma(p.c) / M**sigma
            assert ratio == pytest.approx(xi * correction, rel=1e-6)
        # at sigma = 0.5 the correction is already negligible
        p = validate_hyperparams(60.0, 0.5, 1.0)
        assert expected_new_variants(0, M, p) / M**0.5 == pytest.approx(
            asymptotic_xi(p), rel=0.02
        )

    def test_loglog_slope_at_half(self):
        p = validate_hyperparams(60.0, 0.5, 1.0)
        u4 = expected_new_variants(0, 10**4, p)
        u6 = expected_new_variants(0, 10**6, p)
        slope = (np.log(u6) - np.log(u4)) / (np.log(10**6) - np.log(10**4))
        assert abs(slope - 0.5) < 0.01

    def test_rare_rate_limit(self):
        p = validate_hyperparams(60.0, 0.5, 1.0)
        M = 10**6
        for r in (1, 2, 3):
            assert expected_new_rare(0, M, r, p) / M**0.5 == pytest.approx(
                asymptotic_xi_r(p, r), rel=0.02
            )


class TestBetaExpectation:
    def test_trivial_cases(self):
        assert beta_expectation(0.9, 1.1, 0.0, 5, 0.0, 7) == 1.0
        assert beta_expectation(0.9, 1.1, 0.7, 0, 0.3, 0) == 1.0

    def test_closed_form_beta_ratio(self):
        val = beta_expectation(0.9, 1.1, 1.0, 5, 0.0, 0)
        oracle = np.exp(betaln(0.9, 1.1 + 5) - betaln(0.9, 1.1))
        assert val == pytest.approx(oracle, rel=1e-12)

    def test_closed_form_huge_exponent_forces_subdivision(self):
        a, b, e = 0.7, 2.3, 5000
        val = beta_expectation(a, b, 1.0, e, 0.0, 0)
        oracle = np.exp(betaln(a, b + e) - betaln(a, b))
        assert val == pytest.approx(oracle, rel=1e-9)

    def test_argument_symmetry(self):
        v1 = beta_expectation(0.5, 1.5, 0.8, 11, 0.3, 40)
        v2 = beta_expectation(0.5, 1.5, 0.3, 40, 0.8, 11)
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_mpmath_oracle_battery(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        cases = [
            (0.9, 1.1, 0.64, 120, 0.99, 60),
            (0.5, 0.6, 1.0, 35, 0.97, 20),
            (0.75, 4.0, 0.3, 800, 0.9, 400),
            (0.25, 2000.0, 0.64, 50, 0.99, 25),
        ]
        for a, b, phi1, e1, phi2, e2 in cases:
            val = beta_expectation(a, b, phi1, e1, phi2, e2)
            f = lambda t: (
                (1 - mp.mpf(phi1) * t) ** e1
                * (1 - mp.mpf(phi2) * t) ** e2
                * t ** (mp.mpf(a) - 1)
                * (1 - t) ** (mp.mpf(b) - 1)
            )
            split = [
                0, mp.mpf("1e-8"), mp.mpf("1e-4"),
                mp.mpf(1) / (b + e1 + e2 + 4), mp.mpf("0.1"), 1,
            ]
            oracle = float(mp.quad(f, sorted(split)) / mp.beta(a, b))
            assert val == pytest.approx(oracle, rel=5e-9), (a, b, phi1, e1, phi2, e2)

    def test_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            beta_expectation(0.0, 1.0, 0.5, 1, 0.5, 1)
        with pytest.raises(InvalidInputError):
            beta_expectation(1.0, 1.0, 1.5, 1, 0.5, 1)
        with pytest.raises(InvalidInputError):
            beta_expectation(1.0, 1.0, 0.5, -1, 0.5, 1)

    def test_value_in_unit_interval(self):
        val = beta_expectation(0.9, 1.1, 0.6, 100, 0.99, 50)
        assert 0.0 <= val <= 1.0


class TestNoisyPredictions:
    def test_zero_followup_probability(self):
        assert expected_new_variants_noisy(10, 50, P_MAIN, 0.99, 0.0) == 0.0

    def test_reduction_to_perfect_observation(self):
        for n, m in [(10, 10), (100, 500)]:
            noisy = expected_new_variants_noisy(n, m, P_MAIN, 1.0, 1.0)
            assert noisy == pytest.approx(expected_new_variants(n, m, P_MAIN), rel=1e-8)

    def test_rare_reduction_fixes_prefactor(self):
        # the phi = 1 limit must recover the perfect-observation rare rate;
        # this pins the orientation of the rising-factorial prefactor
        for n, m, r in [(10, 10, 1), (10, 10, 4), (100, 500, 2), (100, 500, 250)]:
            noisy = expected_new_rare_noisy(n, m, r, P_MAIN, 1.0, 1.0)
            assert noisy == pytest.approx(expected_new_rare(n, m, r, P_MAIN), rel=1e-8)

    def test_rare_partition_identity(self):
        n, m = 50, 200
        phi_i, phi_f = 0.9913, 0.6413
        total = sum(
            expected_new_rare_noisy(n, m, r, P_MAIN, phi_i, phi_f) for r in range(1, m + 1)
        )
        whole = expected_new_variants_noisy(n, m, P_MAIN, phi_i, phi_f)
        assert total == pytest.approx(whole, rel=1e-6)

    def test_single_sample_consistency(self):
        phi_i, phi_f = 0.95, 0.7
        direct = expected_new_rare_noisy(20, 1, 1, P_MAIN, phi_i, phi_f)
        gamma = expected_new_variants_noisy(20, 1, P_MAIN, phi_i, phi_f)
        assert direct == pytest.approx(gamma, rel=1e-10)
        byhand = P_MAIN.alpha * phi_f * beta_expectation(
            1 - P_MAIN.sigma, P_MAIN.c + P_MAIN.sigma, phi_f, 0, phi_i, 20
        )
        assert direct == pytest.approx(byhand, rel=1e-10)

    def test_monotone_in_phi_follow(self):
        vals = [
            expected_new_variants_noisy(30, 100, P_MAIN, 0.95, pf)
            for pf in (0.2, 0.5, 0.8, 1.0)
        ]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_curve_matches_scalars(self):
        curve = expected_new_variants_noisy_curve(25, 40, P_MAIN, 0.98, 0.6)
        for m in (1, 13, 40):
            assert curve[m - 1] == pytest.approx(
                expected_new_variants_noisy(25, m, P_MAIN, 0.98, 0.6), rel=1e-9
            )

    def test_rare_cum_matches_sum(self):
        n, m, cap = 15, 30, 5
        total = expected_new_rare_noisy_cum(n, m, cap, P_MAIN, 0.9, 0.7)
        by_sum = sum(expected_new_rare_noisy(n, m, r, P_MAIN, 0.9, 0.7) for r in range(1, cap + 1))
        assert total == pytest.approx(by_sum, rel=1e-12)

    def test_all_rates_finite_across_box(self):
        for (al, s, cp) in [(1e7, 0.0, 1e-6), (1e-3, 0.999, 1e4), (1e7, 0.999, 1e-6)]:
            p = validate_hyperparams(al, s, cp - s)
            v = expected_new_variants_noisy(60, 30, p, 0.9913, 0.9913)
            assert np.isfinite(v) and v >= 0
