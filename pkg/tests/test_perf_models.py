"""Tests for the logistic performance curves and the ITL mixture model."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbatch.errors import DegenerateData
from gridbatch.perf_models import (
    ItlMixture,
    LogisticParams,
    fit_itl_mixture,
    fit_logistic,
    logistic_derivative,
    logistic_eval,
    mixture_mean,
    normalize_to_unit_max,
    sample_itl,
)

# ---------------------------------------------------------------------------
# Oracles.  Written before the implementation was trusted: a brute-force
# central difference for the derivative, and a direct formula evaluation
# (plain math.exp, valid away from overflow) for the curve itself.
# ---------------------------------------------------------------------------


def naive_logistic(params: LogisticParams, x: float) -> float:
    return params.max / (1.0 + math.exp(-params.k * (x - params.x0))) + params.offset


def central_difference(params: LogisticParams, x: float) -> float:
    # 5-point stencil with k-scaled step: truncation and rounding both land
    # far below the 1e-6 relative tolerance used against it.
    h = 1e-3 / params.k
    f = lambda t: logistic_eval(params, t)
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12.0 * h)


PARAMS = LogisticParams(max=100.0, k=1.0, x0=5.0, offset=10.0)


class TestLogisticEval:
    def test_midpoint_value(self):
        assert logistic_eval(PARAMS, 5.0) == pytest.approx(60.0, abs=1e-12)

    def test_lower_asymptote(self):
        assert logistic_eval(PARAMS, -50.0) == pytest.approx(10.0, abs=1e-10)

    def test_upper_asymptote(self):
        assert logistic_eval(PARAMS, 60.0) == pytest.approx(110.0, abs=1e-10)

    def test_matches_naive_formula(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = LogisticParams(
                max=float(rng.uniform(0.1, 1e4)),
                k=float(rng.uniform(0.05, 10.0)),
                x0=float(rng.uniform(-10.0, 10.0)),
                offset=float(rng.uniform(0.0, 1e3)),
            )
            x = float(rng.uniform(-20.0, 20.0))
            assert logistic_eval(p, x) == pytest.approx(naive_logistic(p, x), rel=1e-12)

    def test_no_overflow_far_in_tails(self):
        p = LogisticParams(max=500.0, k=10.0, x0=0.0, offset=2.0)
        # k*(x-x0) = +-500: naive exp overflows, the stable form must not.
        assert logistic_eval(p, -50.0) == pytest.approx(2.0, abs=1e-9)
        assert logistic_eval(p, 50.0) == pytest.approx(502.0, abs=1e-9)

    @given(
        mx=st.floats(1e-3, 1e6),
        k=st.floats(0.05, 20.0),
        x0=st.floats(-10.0, 10.0),
        off=st.floats(0.0, 1e6),
        x=st.floats(-60.0, 60.0),
    )
    def test_bounded_by_asymptotes(self, mx, k, x0, off, x):
        p = LogisticParams(max=mx, k=k, x0=x0, offset=off)
        y = logistic_eval(p, x)
        assert off <= y <= off + mx

    @given(
        mx=st.floats(1e-3, 1e6),
        k=st.floats(0.05, 20.0),
        x0=st.floats(-10.0, 10.0),
        off=st.floats(0.0, 1e6),
        x=st.floats(-30.0, 30.0),
        dx=st.floats(1e-3, 5.0),
    )
    def test_strictly_increasing(self, mx, k, x0, off, x, dx):
        p = LogisticParams(max=mx, k=k, x0=x0, offset=off)
        assert logistic_eval(p, x + dx) >= logistic_eval(p, x)


class TestLogisticDerivative:
    def test_peak_value_at_midpoint(self):
        assert logistic_derivative(PARAMS, 5.0) == pytest.approx(25.0, abs=1e-12)

    def test_matches_central_difference(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = LogisticParams(
                max=float(rng.uniform(1.0, 1e3)),
                k=float(rng.uniform(0.1, 5.0)),
                x0=float(rng.uniform(-5.0, 5.0)),
                offset=float(rng.uniform(0.0, 100.0)),
            )
            x = float(rng.uniform(p.x0 - 4.0 / p.k, p.x0 + 4.0 / p.k))
            fd = central_difference(p, x)
            assert logistic_derivative(p, x) == pytest.approx(fd, rel=1e-6)

    def test_tails_decay(self):
        for p in (PARAMS, LogisticParams(max=3000.0, k=0.4, x0=6.0, offset=50.0)):
            span = 40.0 / p.k
            for x in (p.x0 - span, p.x0 + span):
                assert logistic_derivative(p, x) < 1e-10 * p.max * p.k

    @given(
        mx=st.floats(1e-3, 1e6),
        k=st.floats(0.05, 20.0),
        x0=st.floats(-10.0, 10.0),
        x=st.floats(-60.0, 60.0),
    )
    def test_positive_and_capped(self, mx, k, x0, x):
        p = LogisticParams(max=mx, k=k, x0=x0, offset=0.0)
        d = logistic_derivative(p, x)
        assert 0.0 <= d <= mx * k / 4.0 * (1.0 + 1e-12)


class TestParamValidation:
    def test_rejects_nonpositive_k(self):
        with pytest.raises(ValueError):
            LogisticParams(max=1.0, k=0.0, x0=0.0, offset=0.0)

    def test_rejects_nonpositive_max(self):
        with pytest.raises(ValueError):
            LogisticParams(max=-1.0, k=1.0, x0=0.0, offset=0.0)

    def test_rejects_negative_offset(self):
        with pytest.raises(ValueError):
            LogisticParams(max=1.0, k=1.0, x0=0.0, offset=-0.1)

    def test_round_trips_through_dict(self):
        p = LogisticParams(max=400.0, k=1.2, x0=4.0, offset=80.0)
        assert LogisticParams.from_dict(p.to_dict()) == p


class TestFitLogistic:
    TRUE = LogisticParams(max=400.0, k=1.2, x0=4.0, offset=80.0)
    XS = [3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]

    def test_noiseless_recovery(self):
        pts = [(x, logistic_eval(self.TRUE, x)) for x in self.XS]
        fit = fit_logistic(pts)
        for name in ("max", "k", "x0", "offset"):
            got = getattr(fit.params, name)
            want = getattr(self.TRUE, name)
            assert got == pytest.approx(want, rel=1e-6), name
        assert fit.rmse < 1e-6

    def test_noisy_recovery_monte_carlo(self):
        # Additive noise with sigma = 1% of the y-range, 8 measurement
        # sweeps per batch size (single-sweep designs cannot identify the
        # offset to 5%: its Cramer-Rao bound alone exceeds 20%).
        true = LogisticParams(max=400.0, k=1.5, x0=6.0, offset=80.0)
        ys = {x: logistic_eval(true, x) for x in self.XS}
        sigma = 0.01 * (max(ys.values()) - min(ys.values()))
        rng = np.random.default_rng(42)
        errors = {"max": [], "k": [], "x0": [], "offset": []}
        for _ in range(100):
            pts = [
                (x, ys[x] + sigma * rng.standard_normal())
                for x in self.XS
                for _ in range(8)
            ]
            fit = fit_logistic(pts)
            for name in errors:
                got = getattr(fit.params, name)
                want = getattr(true, name)
                errors[name].append(abs(got - want) / abs(want))
        for name, errs in errors.items():
            assert float(np.percentile(errs, 95)) < 0.05, name

    def test_recovers_varied_shapes(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            true = LogisticParams(
                max=float(rng.uniform(50.0, 5000.0)),
                k=float(rng.uniform(0.4, 2.5)),
                x0=float(rng.uniform(4.0, 8.0)),
                offset=float(rng.uniform(1.0, 200.0)),
            )
            pts = [(x, logistic_eval(true, x)) for x in self.XS]
            fit = fit_logistic(pts)
            for x in np.linspace(3.0, 9.0, 25):
                assert logistic_eval(fit.params, float(x)) == pytest.approx(
                    logistic_eval(true, float(x)), rel=1e-4, abs=1e-6
                )

    def test_rejects_too_few_distinct_x(self):
        pts = [(3.0, 1.0), (3.0, 1.1), (4.0, 2.0), (5.0, 3.0)]
        with pytest.raises(DegenerateData):
            fit_logistic(pts)

    def test_rejects_constant_y(self):
        pts = [(x, 5.0) for x in self.XS]
        with pytest.raises(DegenerateData):
            fit_logistic(pts)


class TestItlMixture:
    TRUE = ItlMixture(weight=0.7, mu1=-3.2, sigma1=0.25, mu2=-2.3, sigma2=0.2)

    def test_em_recovery(self):
        samples = sample_itl(self.TRUE, 10_000, seed=5)
        fit = fit_itl_mixture(samples.tolist(), seed=0)
        assert fit.mu1 <= fit.mu2
        assert abs(fit.weight - self.TRUE.weight) < 0.1
        assert abs(fit.mu1 - self.TRUE.mu1) < 0.1
        assert abs(fit.mu2 - self.TRUE.mu2) < 0.1

    def test_analytic_mean_formula(self):
        mix = self.TRUE
        want = mix.weight * math.exp(mix.mu1 + mix.sigma1**2 / 2) + (
            1 - mix.weight
        ) * math.exp(mix.mu2 + mix.sigma2**2 / 2)
        assert mixture_mean(mix) == pytest.approx(want, rel=1e-12)

    def test_sample_mean_converges_to_analytic(self):
        samples = sample_itl(self.TRUE, 100_000, seed=9)
        assert float(samples.mean()) == pytest.approx(mixture_mean(self.TRUE), rel=0.01)

    def test_sampling_is_deterministic(self):
        a = sample_itl(self.TRUE, 1000, seed=123)
        b = sample_itl(self.TRUE, 1000, seed=123)
        np.testing.assert_array_equal(a, b)
        c = sample_itl(self.TRUE, 1000, seed=124)
        assert not np.array_equal(a, c)

    def test_samples_are_positive(self):
        samples = sample_itl(self.TRUE, 5000, seed=1)
        assert np.all(samples > 0)

    def test_fit_is_deterministic(self):
        samples = sample_itl(self.TRUE, 2000, seed=2).tolist()
        assert fit_itl_mixture(samples, seed=7) == fit_itl_mixture(samples, seed=7)

    def test_rejects_small_sample(self):
        with pytest.raises(DegenerateData):
            fit_itl_mixture([0.05] * 49)

    def test_rejects_nonpositive_samples(self):
        with pytest.raises(DegenerateData):
            fit_itl_mixture([0.05] * 60 + [-0.01])

    def test_constant_samples_collapse_to_single_component(self):
        mix = fit_itl_mixture([0.05] * 100)
        assert mix.weight == 1.0
        assert mix.mu1 == pytest.approx(math.log(0.05))
        assert mix.sigma1 == pytest.approx(1e-6)

    def test_rejects_bad_weight(self):
        with pytest.raises(ValueError):
            ItlMixture(weight=1.5, mu1=0.0, sigma1=1.0, mu2=0.0, sigma2=1.0)

    @settings(max_examples=25, deadline=None)
    @given(
        w=st.floats(0.2, 0.8),
        mu1=st.floats(-4.0, -2.0),
        gap=st.floats(0.8, 2.0),
        seed=st.integers(0, 50),
    )
    def test_sample_mean_tracks_mixture_mean(self, w, mu1, gap, seed):
        mix = ItlMixture(weight=w, mu1=mu1, sigma1=0.2, mu2=mu1 + gap, sigma2=0.2)
        samples = sample_itl(mix, 20_000, seed=seed)
        assert float(samples.mean()) == pytest.approx(mixture_mean(mix), rel=0.05)


class TestNormalizeToUnitMax:
    def test_supremum_becomes_one(self):
        p = normalize_to_unit_max(LogisticParams(max=400.0, k=1.2, x0=4.0, offset=80.0))
        assert p.max + p.offset == pytest.approx(1.0, abs=1e-15)
        assert logistic_eval(p, 1e3) == pytest.approx(1.0, abs=1e-12)

    def test_shape_preserved(self):
        orig = LogisticParams(max=400.0, k=1.2, x0=4.0, offset=80.0)
        p = normalize_to_unit_max(orig)
        assert p.k == orig.k
        assert p.x0 == orig.x0
        for x in np.linspace(2.0, 10.0, 17):
            assert logistic_eval(p, float(x)) == pytest.approx(
                logistic_eval(orig, float(x)) / (orig.max + orig.offset), rel=1e-12
            )
