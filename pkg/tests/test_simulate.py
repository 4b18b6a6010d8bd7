import numpy as np
import pytest
from scipy.special import betaln
from scipy.stats import binom, chi2

from varcast.bnp import asymptotic_xi, expected_new_variants
from varcast.core import InvalidInputError, build_sfs, validate_hyperparams
from varcast.simulate import (
    FrequencyVector,
    draw_beta_bernoulli,
    draw_from_frequencies,
    draw_ibp,
    draw_power_law,
    power_law_thetas,
)

P_MAIN = validate_hyperparams(20.0, 0.1, 1.0)


def matrices_equal(m1, m2):
    return (
        m1.n_samples == m2.n_samples
        and m1.n_variant_columns == m2.n_variant_columns
        and all(np.array_equal(a, b) for a, b in zip(m1.variants, m2.variants))
    )


class TestDrawIbp:
    def test_deterministic_given_seed(self):
        assert matrices_equal(draw_ibp(40, P_MAIN, 123), draw_ibp(40, P_MAIN, 123))
        assert not matrices_equal(draw_ibp(40, P_MAIN, 123), draw_ibp(40, P_MAIN, 124))

    def test_first_sample_count_is_poisson_mass(self):
        n_seeds = 4000
        counts = np.array([len(draw_ibp(1, P_MAIN, 50_000 + s).variants[0]) for s in range(n_seeds)])
        se = np.sqrt(P_MAIN.alpha / n_seeds)
        assert abs(counts.mean() - P_MAIN.alpha) < 3 * se

    def test_distinct_count_tracks_predicted_mean(self):
        reps = 40
        n = 100
        expect = expected_new_variants(0, n, P_MAIN)
        js = np.array([draw_ibp(n, P_MAIN, 9000 + s).distinct_variants() for s in range(reps)])
        se = js.std(ddof=1) / np.sqrt(reps)
        assert abs(js.mean() - expect) < 4 * se

    def test_power_law_scale_at_half(self):
        p = validate_hyperparams(60.0, 0.5, 1.0)
        reps = 10
        n = 2000
        js = np.array([draw_ibp(n, p, 7_700 + s).distinct_variants() for s in range(reps)])
        predicted = expected_new_variants(0, n, p)
        assert abs(js.mean() / predicted - 1) < 0.10
        assert abs(predicted / (asymptotic_xi(p) * n**0.5) - 1) < 0.05

    def test_exchangeability_of_prefix_and_subset(self):
        # the spectrum of the first half should match (in distribution) the
        # spectrum of any fixed half-subset; compare singleton means
        seeds = range(300)
        prefix_singletons, subset_singletons = [], []
        subset = list(range(1, 30, 2)) + [0]  # a fixed non-prefix half
        for s in seeds:
            m = draw_ibp(30, P_MAIN, 100_000 + s)
            prefix_singletons.append(build_sfs(m.take(range(15))).counts.get(1, 0))
            subset_singletons.append(build_sfs(m.take(sorted(subset)[:15])).counts.get(1, 0))
        a = np.array(prefix_singletons, float)
        b = np.array(subset_singletons, float)
        se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
        assert abs(a.mean() - b.mean()) < 4 * se


class TestDrawBetaBernoulli:
    def test_deterministic(self):
        m1 = draw_beta_bernoulli(30, 500, 0.05, 1.0, 7)
        m2 = draw_beta_bernoulli(30, 500, 0.05, 1.0, 7)
        assert matrices_equal(m1, m2)

    def test_distinct_count_closed_form(self):
        K, N, a, b = 3000, 100, 0.05, 1.0
        reps = 8
        expect = K * (1.0 - np.exp(betaln(a, N + b) - betaln(a, b)))
        js = np.array(
            [draw_beta_bernoulli(N, K, a, b, 400 + s).distinct_variants() for s in range(reps)]
        )
        se = js.std(ddof=1) / np.sqrt(reps)
        assert abs(js.mean() - expect) < 4 * se + 1.0

    def test_concentrated_shapes_give_half_occupancy(self):
        m = draw_beta_bernoulli(200, 50, 1e6, 1e6, 3)
        totals = m.column_totals()
        assert np.all(np.abs(totals - 100) < 50)

    def test_k_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            draw_beta_bernoulli(10, 0, 1.0, 1.0, 0)


class TestDrawPowerLaw:
    def test_exponent_zero_is_uniform(self):
        thetas = power_law_thetas(20000, 0.0, 5)
        assert abs(thetas.mean() - 0.5) < 0.01
        assert thetas.min() > 0 and thetas.max() <= 1

    def test_mean_matches_quadrature(self):
        mp = pytest.importorskip("mpmath")
        splits = [mp.mpf("1e-8"), mp.mpf("1e-6"), mp.mpf("1e-3"), mp.mpf("0.1"), 1]
        for xi in (1.05, 1.5, 1.0):
            thetas = power_law_thetas(200_000, xi, 11)
            norm = mp.quad(lambda t: t**-mp.mpf(xi), splits)
            mean = float(mp.quad(lambda t: t ** (1 - mp.mpf(xi)), splits) / norm)
            assert abs(thetas.mean() - mean) < 4 * thetas.std() / np.sqrt(len(thetas))

    def test_exponent_bound(self):
        with pytest.raises(InvalidInputError, match="exponent"):
            draw_power_law(10, 100, 2.0, 0)

    def test_matrix_generation(self):
        m = draw_power_law(50, 1000, 1.05, 9)
        assert m.n_samples == 50
        assert m.n_variant_columns == 1000


class TestDrawFromFrequencies:
    def test_zero_phi_empty(self):
        m = draw_from_frequencies(FrequencyVector((0.5, 0.9)), 20, 0.0, 1)
        assert m.distinct_variants() == 0

    def test_full_phi_unit_thetas(self):
        m = draw_from_frequencies(FrequencyVector((1.0, 1.0, 1.0)), 10, 1.0, 1)
        assert all(len(row) == 3 for row in m.variants)

    def test_phi_out_of_range(self):
        with pytest.raises(InvalidInputError):
            draw_from_frequencies(FrequencyVector((0.5,)), 10, 1.5, 1)

    def test_column_sums_binomial_chi_square(self):
        rng = np.random.default_rng(2)
        thetas = rng.uniform(0.2, 0.8, size=100)
        n, phi = 400, 0.7
        m = draw_from_frequencies(FrequencyVector(tuple(thetas)), n, phi, 77)
        totals = m.column_totals()
        # per-column z-scores against Binomial(n, theta*phi); chi-square GOF
        p = thetas * phi
        z = (totals - n * p) / np.sqrt(n * p * (1 - p))
        stat = float((z**2).sum())
        assert chi2.sf(stat, df=100) > 0.01

    def test_file_round_trip(self, tmp_path):
        fv = FrequencyVector((0.25, 1.0, 0.003))
        path = tmp_path / "f.txt"
        fv.to_file(path)
        assert FrequencyVector.from_file(path).thetas == fv.thetas

    def test_invalid_frequency(self):
        with pytest.raises(InvalidInputError):
            FrequencyVector((0.0, 0.5))
        with pytest.raises(InvalidInputError):
            FrequencyVector((1.5,))
