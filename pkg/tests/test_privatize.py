from __future__ import annotations

import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from private_ate.core import PrivacyBudget, RngStream
from private_ate.errors import DomainError, InvalidBudget
from private_ate.nuisance import LearnerConfig
from private_ate.privatize import (
    augmented_variance,
    dp_confidence_interval,
    estimate_private,
    gaussian_noise,
    normal_quantile,
    privatize_ate,
    privatize_variance,
    split_budget,
)
from private_ate.sensitivity import smooth_scale
from private_ate.synthdata import DATASET1, gen_dataset


class TestNoise:
    def test_moments(self):
        rng = np.random.default_rng(0)
        u = np.array([gaussian_noise(rng) for _ in range(10**6)])
        assert abs(u.mean()) < 0.005
        assert abs(u.var() - 1.0) < 0.01

    def test_reproducible(self):
        a = [gaussian_noise(np.random.default_rng(3)) for _ in range(3)]
        b = [gaussian_noise(np.random.default_rng(3)) for _ in range(3)]
        assert a == b

    def test_standardised_ate_noise(self):
        rng = np.random.default_rng(1)
        z = []
        for _ in range(10_000):
            t, r = privatize_ate(0.3, 2.0, 1000, 0.45, 9e-6, rng)
            z.append((t - 0.3) / r)
        z = np.array(z)
        assert abs(z.std() - 1.0) < 0.05
        assert stats.kstest(z, "norm").pvalue > 0.01


class TestRelease:
    def test_ate_zero_sensitivity(self):
        t, r = privatize_ate(1.234, 0.0, 3000, 0.45, 9e-6, np.random.default_rng(0))
        assert t == 1.234 and r == 0.0

    def test_ate_example(self):
        t, r = privatize_ate(1.0, 1.0, 3000, 0.45, 9e-6, u=1.0)
        assert t == pytest.approx(1.05200, abs=1e-4)

    def test_variance_truncation(self):
        r = smooth_scale(1.0, 3000, 0.05, 1e-6)
        u = -(0.1 + 0.3) / r
        assert privatize_variance(0.1, 1.0, 3000, 0.05, 1e-6, u=u) == 0.0

    def test_variance_zero_sensitivity(self):
        assert privatize_variance(2.0, 0.0, 100, 1.0, 1e-5, np.random.default_rng(0)) == 2.0

    def test_variance_example(self):
        # gamma chosen so the scale is exactly 0.1
        g = 0.1 / smooth_scale(1.0, 500, 1.0, 1e-5)
        assert privatize_variance(2.0, g, 500, 1.0, 1e-5, u=-1.0) == pytest.approx(1.9, abs=1e-12)

    def test_invalid_budget(self):
        with pytest.raises(InvalidBudget):
            privatize_ate(0.0, 1.0, 100, 0.0, 1e-5, u=0.0)
        with pytest.raises(InvalidBudget):
            privatize_variance(1.0, 1.0, 100, 1.0, 1.5, u=0.0)


class TestAugmentedVariance:
    def test_example(self):
        v = augmented_variance(2.0, 1.0, 3000, 0.45, 9e-6)
        assert v == pytest.approx(10.113, abs=1e-3)
        assert 3000 * smooth_scale(1.0, 3000, 0.45, 9e-6) ** 2 == pytest.approx(8.112, abs=2e-3)

    def test_zero_sensitivity(self):
        assert augmented_variance(2.0, 0.0, 3000, 0.45, 9e-6) == 2.0

    @given(s=st.floats(0, 100), g=st.floats(1e-3, 100), n=st.integers(2, 10**6),
           eps=st.floats(1e-2, 10), delta=st.floats(1e-10, 0.5))
    def test_identity(self, s, g, n, eps, delta):
        corr = augmented_variance(0.0, g, n, eps, delta)
        assert corr == pytest.approx(n * smooth_scale(g, n, eps, delta) ** 2, rel=1e-12)
        assert augmented_variance(s, g, n, eps, delta) == s + corr
        assert augmented_variance(s, g, n, eps, delta) > s

    @given(g=st.floats(1e-2, 10), n=st.integers(3, 10**5), eps=st.floats(1e-2, 10), delta=st.floats(1e-10, 0.5))
    def test_correction_decreasing(self, g, n, eps, delta):
        c = augmented_variance(0.0, g, n, eps, delta)
        assert augmented_variance(0.0, g, n, eps * 1.1, delta) < c
        assert augmented_variance(0.0, g, n + 1, eps, delta) < c


class TestQuantile:
    def test_known(self):
        assert normal_quantile(0.5) == 0.0
        assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)
        assert normal_quantile(0.9) == pytest.approx(1.281552, abs=1e-6)

    def test_round_trip(self):
        mpmath.mp.dps = 40
        for q in np.linspace(0.01, 0.99, 99):
            x = normal_quantile(float(q))
            assert abs(float(mpmath.ncdf(x)) - q) < 1e-9

    def test_tails(self):
        for q in (1e-12, 1e-6, 0.001, 0.02, 0.999999):
            assert normal_quantile(q) == pytest.approx(stats.norm.ppf(q), rel=1e-9)

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.2])
    def test_domain(self, q):
        with pytest.raises(DomainError):
            normal_quantile(q)


class TestInterval:
    def test_example(self):
        lo, hi = dp_confidence_interval(1.0, 4.0, 400, 0.05)
        assert lo == pytest.approx(0.8040, abs=1e-4) and hi == pytest.approx(1.1960, abs=1e-4)

    def test_degenerate(self):
        assert dp_confidence_interval(0.7, 0.0, 10, 0.1) == (0.7, 0.7)

    def test_quadruple_n(self):
        a = dp_confidence_interval(0.0, 3.0, 100, 0.1)
        b = dp_confidence_interval(0.0, 3.0, 400, 0.1)
        assert (b[1] - b[0]) == pytest.approx((a[1] - a[0]) / 2, rel=1e-14)

    @pytest.mark.parametrize("args", [(0, -1.0, 10, 0.1), (0, 1.0, 0, 0.1), (0, 1.0, 10, 1.0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            dp_confidence_interval(*args)


def test_split_budget():
    assert split_budget(PrivacyBudget(0.5, 1e-5, 0.9)) == pytest.approx((0.45, 0.9e-5, 0.05, 0.1e-5))


@pytest.fixture(scope="module")
def d1():
    return gen_dataset(DATASET1, 600, RngStream(0).generator(0))[0]


class TestEstimatePrivate:
    def test_report_invariants(self, d1):
        rep = estimate_private(d1, LearnerConfig(), PrivacyBudget(0.5, 1e-5, 0.9), 0.05, RngStream(1))
        assert rep.ci_lo <= rep.tau_dp <= rep.ci_hi
        assert rep.tau_dp - rep.ci_lo == pytest.approx(rep.ci_hi - rep.tau_dp, rel=1e-12)
        assert rep.v_dp > rep.sigma2_dp >= 0
        half = normal_quantile(0.975) * math.sqrt(rep.v_dp / rep.n)
        assert rep.ci_hi - rep.tau_dp == pytest.approx(half, rel=1e-12)
        assert rep.v_dp == pytest.approx(rep.sigma2_dp + rep.n * rep.r_tau ** 2, rel=1e-12)

    def test_deterministic(self, d1):
        b = PrivacyBudget(0.5, 1e-5, 0.9)
        r1 = estimate_private(d1, LearnerConfig(), b, 0.05, RngStream(7))
        r2 = estimate_private(d1, LearnerConfig(), b, 0.05, RngStream(7))
        assert r1.to_json() == r2.to_json()
        doc = json.loads(r1.to_json())
        assert set(doc["not_for_release"]) <= set(doc)

    def test_large_epsilon_matches_standard(self, d1):
        rep = estimate_private(d1, LearnerConfig(), PrivacyBudget(1e6, 1e-5, 0.9), 0.05, RngStream(2))
        assert rep.tau_dp == pytest.approx(rep.tau_hat, abs=1e-4)
        std_half = normal_quantile(0.975) * math.sqrt(rep.sigma2_hat / rep.n)
        assert (rep.ci_hi - rep.ci_lo) / (2 * std_half) == pytest.approx(1.0, rel=1e-3)

    def test_split_uses_half(self, d1):
        rep = estimate_private(d1, LearnerConfig(), PrivacyBudget(1.0, 1e-5), 0.1, RngStream(3), split=True)
        assert rep.n == 300 and rep.split

    def test_other_level_is_post_processing(self, d1):
        rep = estimate_private(d1, LearnerConfig(), PrivacyBudget(1.0, 1e-5), 0.05, RngStream(4))
        lo, hi = rep.interval(0.2)
        assert lo > rep.ci_lo and hi < rep.ci_hi
        assert (lo + hi) / 2 == pytest.approx(rep.tau_dp)
