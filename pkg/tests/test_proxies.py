"""Noise-moment proxies, their smoothing, and the degradation modes."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gac.proxies import (
    DegradationMode,
    EmaEstimates,
    ProxyError,
    RawProxies,
    TokenCoefficients,
    advantage_dispersion,
    apply_degradation,
    disagreement_proxy,
    ema_update,
    estimate_cross_cov,
    pearson_r,
    phi,
    shuffle_stream,
    trimmed_nll_variance,
)

finite = st.floats(min_value=-100, max_value=100, allow_nan=False)


class TestPhi:
    def test_values(self):
        assert phi(0.0) == 0.0
        assert phi(1.0) == 0.0
        assert phi(0.5) == 0.25

    def test_vector(self):
        np.testing.assert_allclose(phi([0.1, 0.9]), [0.09, 0.09])

    @pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
    def test_rejects_non_probability(self, p):
        with pytest.raises(ProxyError):
            phi(p)


class TestDispersion:
    def test_symmetric_pair(self):
        assert advantage_dispersion([-1.0, 1.0]) == 1.0

    def test_population_variance(self):
        assert advantage_dispersion([0.0, 1.0, 2.0, 3.0]) == 1.25

    def test_constant_batch(self):
        assert advantage_dispersion([1.0, 1.0, 1.0]) == 0.0

    def test_empty(self):
        with pytest.raises(ProxyError):
            advantage_dispersion([])

    @given(st.lists(finite, min_size=1, max_size=30), finite, st.floats(min_value=0.1, max_value=10))
    def test_affine(self, xs, shift, scale):
        base = advantage_dispersion(xs)
        moved = advantage_dispersion([scale * x + shift for x in xs])
        assert moved == pytest.approx(scale**2 * base, rel=1e-6, abs=1e-6)


class TestTrimmedVariance:
    def test_hand_value(self):
        # trims 0 and 9, keeps 1..8
        assert trimmed_nll_variance(np.arange(10.0), 0.1) == pytest.approx(5.25)

    def test_no_trim_is_plain_variance(self):
        assert trimmed_nll_variance(np.arange(10.0), 0.0) == pytest.approx(8.25)

    def test_outlier_suppressed(self):
        x = np.r_[np.arange(9.0), 1e6]
        assert trimmed_nll_variance(x, 0.1) == pytest.approx(5.25)
        assert trimmed_nll_variance(x, 0.0) > 1e10

    def test_too_few_survivors(self):
        with pytest.raises(ProxyError):
            trimmed_nll_variance([1.0, 2.0, 3.0], 0.4)

    def test_trim_bounds(self):
        with pytest.raises(ProxyError):
            trimmed_nll_variance(np.arange(10.0), 0.5)


class TestDisagreement:
    def test_identical_streams(self):
        c = TokenCoefficients.from_samples([[1.0, 2.0, 3.0]], [[1.0, 2.0, 3.0]])
        assert disagreement_proxy(c) == pytest.approx(0.0, abs=1e-12)

    def test_opposite_streams(self):
        # z-scores are exact negatives, so each squared gap is 4 z^2 with mean z^2 = 1
        c = TokenCoefficients.from_samples([[1.0, 2.0, 3.0]], [[3.0, 2.0, 1.0]])
        assert disagreement_proxy(c) == pytest.approx(4.0)

    def test_flat_stream_flagged(self):
        c = TokenCoefficients.from_samples([[1.0, 1.0]], [[0.0, 2.0]])
        value, flag = disagreement_proxy(c, return_flag=True)
        assert flag
        assert value == pytest.approx(1.0)

    def test_single_token_guard(self):
        c = TokenCoefficients.from_samples([[2.0]], [[5.0]])
        assert disagreement_proxy(c, return_flag=True) == (0.0, True)

    def test_constant_float_stream_flagged(self):
        c = TokenCoefficients.from_samples([[0.1] * 7], [[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]])
        assert disagreement_proxy(c, return_flag=True)[1]

    def test_padding_ignored(self):
        a = TokenCoefficients.from_samples([[1.0, 2.0], [3.0]], [[2.0, 1.0], [0.5]])
        padded = TokenCoefficients(
            np.array([[1.0, 2.0], [3.0, 99.0]]), np.array([[2.0, 1.0], [0.5, -99.0]]), np.array([[1, 1], [1, 0]])
        )
        assert disagreement_proxy(a) == disagreement_proxy(padded)

    def test_shape_mismatch(self):
        with pytest.raises(ProxyError):
            TokenCoefficients(np.zeros((2, 3)), np.zeros((2, 2)), np.ones((2, 3)))

    def test_empty_sample(self):
        with pytest.raises(ProxyError):
            TokenCoefficients(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))

    def test_ragged_length_mismatch(self):
        with pytest.raises(ProxyError):
            TokenCoefficients.from_samples([[1.0, 2.0]], [[1.0]])

    def test_affine_invariance(self):
        rng = np.random.default_rng(42)
        rl, sft = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        mask = np.ones((4, 6), dtype=bool)
        base = disagreement_proxy(TokenCoefficients(rl, sft, mask))
        moved = disagreement_proxy(TokenCoefficients(3.0 * rl - 2.0, 0.5 * sft + 7.0, mask))
        assert moved == pytest.approx(base, rel=1e-10)

    def test_bounded_by_four(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            c = TokenCoefficients(rng.normal(size=(3, 5)), rng.normal(size=(3, 5)), np.ones((3, 5), dtype=bool))
            assert 0.0 <= disagreement_proxy(c) <= 4.0 + 1e-12


class TestEma:
    def test_first_update_copies(self):
        e = ema_update(EmaEstimates(0.9), (1.0, 2.0, 3.0))
        assert e.values() == RawProxies(1.0, 2.0, 3.0)

    def test_hand_value(self):
        e = ema_update(ema_update(EmaEstimates(0.9), (1.0, 1.0, 1.0)), (2.0, 1.0, 0.0))
        np.testing.assert_allclose(e.values(), [1.1, 1.0, 0.9])

    def test_decay_one_freezes(self):
        e = ema_update(ema_update(EmaEstimates(1.0), (1.0, 1.0, 1.0)), (5.0, 5.0, 5.0))
        assert e.values() == RawProxies(1.0, 1.0, 1.0)

    def test_read_before_update(self):
        with pytest.raises(ProxyError):
            EmaEstimates().values()

    @pytest.mark.parametrize("bad", [(-1.0, 1.0, 1.0), (1.0, float("nan"), 1.0), (1.0, 1.0, float("inf"))])
    def test_rejects_bad_raw(self, bad):
        with pytest.raises(ProxyError):
            ema_update(EmaEstimates(), bad)

    def test_bad_decay(self):
        with pytest.raises(ProxyError):
            EmaEstimates(decay=1.5)

    @given(st.lists(st.tuples(*[st.floats(min_value=0, max_value=1e3)] * 3), min_size=1, max_size=20))
    @settings(max_examples=100)
    def test_stays_in_hull(self, raws):
        e = EmaEstimates(0.7)
        for r in raws:
            e = ema_update(e, r)
        arr = np.asarray(raws)
        v = np.asarray(e.values())
        assert np.all(v >= arr.min(axis=0) - 1e-9) and np.all(v <= arr.max(axis=0) + 1e-9)


class TestDegradation:
    raw = RawProxies(0.3, 0.4, 0.5)

    def test_none_passthrough(self):
        assert apply_degradation(DegradationMode(), self.raw) == self.raw

    def test_constant_sigma_r(self):
        out = apply_degradation(DegradationMode("constant_sigma_r", 1.0), self.raw)
        assert out == RawProxies(0.3, 1.0, 0.5)

    def test_random_is_seeded(self):
        mode = DegradationMode("random_delta_g", seed=3)
        a = apply_degradation(mode, self.raw)
        b = apply_degradation(mode, self.raw)
        assert a == b and 0.0 <= a.delta_g_sq <= 1.0 and a[:2] == self.raw[:2]

    def test_shuffle_needs_coeffs(self):
        with pytest.raises(ProxyError):
            apply_degradation(DegradationMode("shuffled_delta_g"), self.raw)

    def test_shuffle_keeps_multiset(self):
        rng = np.random.default_rng(42)
        c = TokenCoefficients.from_samples([[1.0, 2.0, 3.0], [4.0]], [[0.0, 0.0, 0.0], [0.0]])
        s = shuffle_stream(c, rng)
        assert sorted(s.rl_coeff[s.mask]) == [1.0, 2.0, 3.0, 4.0]
        np.testing.assert_array_equal(s.sft_coeff, c.sft_coeff)

    def test_shuffle_breaks_alignment(self):
        rng = np.random.default_rng(42)
        rises = 0
        for seed in range(20):
            v = np.random.default_rng(seed).normal(size=(4, 6))
            c = TokenCoefficients(v, v.copy(), np.ones((4, 6), dtype=bool))
            assert disagreement_proxy(c) == pytest.approx(0.0, abs=1e-12)
            out = apply_degradation(DegradationMode("shuffled_delta_g"), self.raw, c, rng)
            rises += out.delta_g_sq > 0.1
        assert rises == 20

    def test_unknown_kind(self):
        with pytest.raises(ProxyError):
            DegradationMode("bogus")


class TestCrossCov:
    def test_recovers_covariance(self):
        rng = np.random.default_rng(42)
        z = rng.normal(size=(20000, 2))
        x = z[:, 0]
        y = 0.5 * z[:, 0] + np.sqrt(0.75) * z[:, 1]
        c, cv = estimate_cross_cov(np.c_[x, y], window=200)
        assert c == pytest.approx(0.5, abs=0.03)
        assert np.isfinite(cv)

    def test_self_covariance(self):
        x = np.array([1.0, 4.0, 2.0, 7.0])
        assert estimate_cross_cov(np.c_[x, x])[0] == pytest.approx(np.var(x))
        assert estimate_cross_cov(np.c_[x, -x])[0] == pytest.approx(-np.var(x))

    def test_independent_streams(self):
        rng = np.random.default_rng(42)
        n = 50000
        c, _ = estimate_cross_cov(rng.normal(size=(n, 2)))
        assert abs(c) < 3 / np.sqrt(n)

    def test_short_series_cv_nan(self):
        c, cv = estimate_cross_cov([(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], window=20)
        assert c == pytest.approx(2.0 / 3.0) and np.isnan(cv)

    def test_too_short(self):
        with pytest.raises(ProxyError):
            estimate_cross_cov([(1.0, 2.0)])


class TestPearson:
    def test_hand_value(self):
        assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)

    def test_perfect(self):
        assert pearson_r([1, 2, 3, 4], [3, 5, 7, 9]) == pytest.approx(1.0)
        assert pearson_r([1, 2, 3, 4], [-1, -2, -3, -4]) == pytest.approx(-1.0)

    def test_constant_series(self):
        with pytest.raises(ProxyError):
            pearson_r([1, 1, 1], [1, 2, 3])

    def test_length_checks(self):
        with pytest.raises(ProxyError):
            pearson_r([1, 2], [1, 2])
