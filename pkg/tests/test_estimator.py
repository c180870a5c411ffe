"""Closed-form mixing weights against hand values and the brute-force grid oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gac.estimator import (
    EPS_DEN,
    BiasSpec,
    DegenerateMomentsError,
    NoiseMoments,
    biased_objective,
    grid_oracle_mu,
    mse_objective,
    mu_grid,
    optimal_mu,
    optimal_mu_biased,
    optimal_mu_correlated,
)

variances = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
alphas = st.floats(min_value=0.0, max_value=1.0)


def _term_by_term(mu, alpha, dg, ss, sr, c=0.0):
    # independent expansion of the error, written without sharing code with the module
    bias_term = (mu - alpha) * (mu - alpha) * dg
    sft_term = mu * mu * ss
    rl_term = (1.0 - mu) * (1.0 - mu) * sr
    cross = 2.0 * mu * (1.0 - mu) * c
    return bias_term + sft_term + rl_term + cross


class TestObjective:
    def test_zero_noise_at_target(self):
        assert mse_objective(0.5, NoiseMoments(0.0, 0.0, 1.0), 0.5) == 0.0

    def test_only_rl_term_survives(self):
        assert mse_objective(0.0, NoiseMoments(2.0, 3.0, 5.0), 0.0) == 3.0

    def test_hand_expansion(self):
        # 0.16*2 + 0.09*0.5 + 0.49*1.5
        value = mse_objective(0.3, NoiseMoments(0.5, 1.5, 2.0), 0.7)
        assert value == pytest.approx(1.10, abs=1e-12)

    def test_cross_term(self):
        m = NoiseMoments(0.5, 1.5, 2.0, cross_cov=0.4)
        assert mse_objective(0.3, m, 0.7) == pytest.approx(_term_by_term(0.3, 0.7, 2.0, 0.5, 1.5, 0.4))

    def test_vectorized(self):
        m = NoiseMoments(0.5, 1.5, 2.0)
        mus = np.linspace(-1, 2, 7)
        np.testing.assert_allclose(mse_objective(mus, m, 0.7), [_term_by_term(u, 0.7, 2.0, 0.5, 1.5) for u in mus])

    def test_biased_surrogate_reduces_without_bias(self):
        m = NoiseMoments(0.5, 1.5, 2.0, cross_cov=0.1)
        mus = np.linspace(0, 1, 11)
        np.testing.assert_array_equal(biased_objective(mus, m, BiasSpec(), 0.3), mse_objective(mus, m, 0.3))


class TestOptimalMu:
    def test_symmetric_noise(self):
        assert optimal_mu(NoiseMoments(2.0, 2.0, 0.0), 0.5) == 0.5

    def test_inverse_variance_limit(self):
        assert optimal_mu(NoiseMoments(3.0, 1.0, 0.0), 0.5) == 0.25

    def test_grid_derived_value(self):
        m = NoiseMoments(0.5, 1.5, 2.0)
        assert optimal_mu(m, 0.7) == pytest.approx(0.725, abs=1e-12)
        assert abs(grid_oracle_mu(m, 0.7, 1e-4) - 0.725) <= 1e-4

    def test_large_disagreement_limit(self):
        assert abs(optimal_mu(NoiseMoments(1.0, 1.0, 1e12), 0.3) - 0.3) < 1e-6

    def test_zero_denominator_raises(self):
        with pytest.raises(DegenerateMomentsError):
            optimal_mu(NoiseMoments(0.0, 0.0, 0.0), 0.5)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            optimal_mu(NoiseMoments(1.0, 1.0, 1.0), 1.5)

    def test_negative_moment_rejected(self):
        with pytest.raises(ValueError):
            NoiseMoments(-1.0, 1.0, 1.0)

    def test_cross_cov_ignored(self):
        a = optimal_mu(NoiseMoments(0.5, 1.5, 2.0, cross_cov=0.3), 0.7)
        assert a == optimal_mu(NoiseMoments(0.5, 1.5, 2.0), 0.7)


class TestCorrelated:
    def test_symmetric_hand_value(self):
        # (0.5 + 1 - 0.2) / (3 - 0.4)
        mu = optimal_mu_correlated(NoiseMoments(1.0, 1.0, 1.0, cross_cov=0.2), 0.5)
        assert mu == pytest.approx(0.5, abs=1e-15)

    def test_matches_grid_over_extended_objective(self):
        m = NoiseMoments(0.7, 1.9, 0.4, cross_cov=0.5)
        assert abs(optimal_mu_correlated(m, 0.2) - grid_oracle_mu(m, 0.2)) <= 1e-4

    def test_degenerate_denominator_falls_back(self):
        m = NoiseMoments(1.0, 1.0, 1.0, cross_cov=10.0)
        mu, fell_back = optimal_mu_correlated(m, 0.4, return_flag=True)
        assert fell_back
        assert mu == optimal_mu(NoiseMoments(1.0, 1.0, 1.0), 0.4)

    def test_denominator_exactly_at_guard(self):
        m = NoiseMoments(0.5, 0.5, 0.0, cross_cov=0.5)  # denominator 0
        _, fell_back = optimal_mu_correlated(m, 0.5, return_flag=True)
        assert fell_back

    def test_no_flag_on_healthy_input(self):
        _, fell_back = optimal_mu_correlated(NoiseMoments(1.0, 1.0, 1.0, cross_cov=0.1), 0.5, return_flag=True)
        assert not fell_back


class TestBiased:
    def test_hand_value(self):
        m = NoiseMoments(1.0, 1.0, 1.0)
        b = BiasSpec(bias_inner=0.5, bias_norm_sq=1.0)
        assert optimal_mu_biased(m, b, 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_grid_oracle_over_surrogate(self):
        m = NoiseMoments(0.8, 1.3, 2.1, cross_cov=0.2)
        b = BiasSpec(bias_inner=0.3, bias_norm_sq=0.6)
        assert abs(optimal_mu_biased(m, b, 0.35) - grid_oracle_mu(m, 0.35, bias=b)) <= 1e-4

    def test_clamps_to_zero(self):
        b = BiasSpec(bias_inner=-100.0, bias_norm_sq=1.0)
        assert optimal_mu_biased(NoiseMoments(1.0, 1.0, 1.0), b, 0.5) == 0.0

    def test_clamps_to_one(self):
        b = BiasSpec(bias_inner=100.0, bias_norm_sq=0.0)
        assert optimal_mu_biased(NoiseMoments(1.0, 1.0, 1.0), b, 0.5) == 1.0

    def test_isotropic_builder(self):
        b = BiasSpec.isotropic(gamma=0.5, target_norm_sq=4.0, bias_norm_sq=1.0)
        assert b.bias_inner == 2.0 and b.gamma == 0.5

    def test_degenerate_fallback_flagged(self):
        m = NoiseMoments(0.0, 0.0, 0.0)
        b = BiasSpec(bias_inner=0.0, bias_norm_sq=EPS_DEN / 2)
        with pytest.raises(DegenerateMomentsError):
            # the fallback itself has nothing to divide by
            optimal_mu_biased(m, b, 0.5)

    def test_negative_norm_rejected(self):
        with pytest.raises(ValueError):
            BiasSpec(bias_norm_sq=-1.0)


class TestGridOracle:
    def test_symmetry(self):
        assert abs(grid_oracle_mu(NoiseMoments(2.0, 2.0, 0.0), 0.9) - 0.5) <= 1e-4

    def test_inverse_variance(self):
        assert abs(grid_oracle_mu(NoiseMoments(3.0, 1.0, 0.0), 0.1) - 0.25) <= 1e-4

    def test_tie_breaks_low(self):
        # flat objective: every grid point ties
        assert grid_oracle_mu(NoiseMoments(0.0, 0.0, 0.0), 0.5, step=0.1) == 0.0

    def test_grid_covers_endpoints(self):
        g = mu_grid(0.03)
        assert g[0] == 0.0 and g[-1] == 1.0 and np.all(np.diff(g) > 0)

    @pytest.mark.parametrize("step", [0.0, -0.1, 0.5])
    def test_bad_step(self, step):
        with pytest.raises(ValueError):
            mu_grid(step)


class TestProperties:
    def test_random_suite_against_grid(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            ss, sr, dg = 10.0 ** rng.uniform(-3, 3, 3)
            alpha = rng.uniform()
            m = NoiseMoments(ss, sr, dg)
            assert abs(optimal_mu(m, alpha) - grid_oracle_mu(m, alpha)) <= 1e-4 + 1e-9

    @given(variances, variances, variances, alphas)
    @settings(max_examples=200, deadline=None)
    def test_minimizes_over_grid(self, ss, sr, dg, alpha):
        m = NoiseMoments(ss, sr, dg)
        best = mse_objective(optimal_mu(m, alpha), m, alpha)
        grid = mu_grid(1e-2)
        assert np.all(best <= mse_objective(grid, m, alpha) * (1 + 1e-12) + 1e-12)

    @given(variances, variances, variances, alphas, st.floats(min_value=1.0, max_value=10.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_variances(self, ss, sr, dg, alpha, k):
        base = optimal_mu(NoiseMoments(ss, sr, dg), alpha)
        assert optimal_mu(NoiseMoments(ss, sr * k, dg), alpha) >= base - 1e-15
        assert optimal_mu(NoiseMoments(ss * k, sr, dg), alpha) <= base + 1e-15

    @given(variances, variances, variances, alphas)
    @settings(max_examples=200, deadline=None)
    def test_reduction_chain_bit_exact(self, ss, sr, dg, alpha):
        m = NoiseMoments(ss, sr, dg)
        ref = optimal_mu(m, alpha)
        assert optimal_mu_correlated(m, alpha) == ref
        assert optimal_mu_biased(m, BiasSpec(), alpha) == ref

    @given(variances, variances, variances, alphas)
    @settings(max_examples=100, deadline=None)
    def test_stationary_point(self, ss, sr, dg, alpha):
        m = NoiseMoments(ss, sr, dg)
        mu = optimal_mu(m, alpha)
        h = 1e-6 * max(1.0, ss + sr + dg)
        slope = (mse_objective(mu + 1e-6, m, alpha) - mse_objective(mu - 1e-6, m, alpha)) / 2e-6
        assert math.isclose(slope, 0.0, abs_tol=h * 10 + 1e-6 * (ss + sr + dg))
