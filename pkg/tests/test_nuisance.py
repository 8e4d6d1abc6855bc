from __future__ import annotations

import numpy as np
import pytest

from private_ate.core import Dataset, DomainBounds, RngStream
from private_ate.errors import SingleArm
from private_ate.nuisance import (
    KernelConfig,
    LearnerConfig,
    MlpConfig,
    NuisanceModel,
    clipped_propensity,
    fit_kernel_ridge,
    fit_logistic,
    fit_mlp,
    fit_nuisance,
)
from private_ate.synthdata import DATASET1, gen_dataset


def logit_data(n, coef, intercept, seed=0):
    rng = np.random.default_rng(seed)
    p = len(coef)
    x = rng.uniform(-2, 2, size=(n, p))
    prob = 1.0 / (1.0 + np.exp(-(x @ coef + intercept)))
    a = (rng.random(n) < prob).astype(float)
    b = DomainBounds((-2.0,) * p, (2.0,) * p, 0.0, 1.0)
    return Dataset(x, a, rng.random(n), b)


class TestLogistic:
    def test_constant_covariate_half_treated(self):
        b = DomainBounds((0.0,), (1.0,), 0, 1)
        d = Dataset(np.full((10, 1), 0.3), [0, 1] * 5, np.zeros(10), b)
        f = fit_logistic(d)
        assert np.allclose(f(np.linspace(0, 1, 7)[:, None]), 0.5, atol=1e-6)

    def test_recovers_coefficients(self):
        coef = np.array([0.8, -0.5, 0.3])
        f = fit_logistic(logit_data(5000, coef, 0.2))
        assert f.converged
        assert np.all(np.abs(f.coef - coef) < 0.1)
        assert np.array_equal(np.sign(f.coef), np.sign(coef))
        assert abs(f.intercept - 0.2) < 0.1

    def test_separable_is_clipped(self):
        b = DomainBounds((0.0,), (1.0,), 0, 1)
        x = np.linspace(0, 1, 40)[:, None]
        d = Dataset(x, (x[:, 0] > 0.5).astype(float), np.zeros(40), b)
        model = NuisanceModel(fit_logistic(d), lambda x, a: np.zeros(len(x)), 0.05, 0, 1)
        p = model.propensity(x)
        assert p.min() >= 0.05 and p.max() <= 0.95

    def test_single_arm(self):
        b = DomainBounds((0.0,), (1.0,), 0, 1)
        with pytest.raises(SingleArm):
            fit_logistic(Dataset(np.zeros((4, 1)), [1, 1, 1, 1], np.zeros(4), b))


class TestKernelRidge:
    B = DomainBounds((0.0, 0.0), (1.0, 1.0), -10, 10)

    def test_single_point(self):
        d = Dataset([[0.2, 0.3], [0.9, 0.9]], [1, 0], [2.0, 0.0], self.B)
        f = fit_kernel_ridge(d, KernelConfig(alpha=0.1))
        assert f([[0.2, 0.3]], 1)[0] == pytest.approx(2.0 / 1.1, rel=1e-12)

    def test_two_identical_points(self):
        d = Dataset([[0.2, 0.3], [0.2, 0.3], [0.9, 0.9]], [1, 1, 0], [2.0, 2.0, 0.0], self.B)
        f = fit_kernel_ridge(d, KernelConfig(alpha=0.1))
        assert f([[0.2, 0.3]], 1)[0] == pytest.approx(2 * 2.0 / 2.1, rel=1e-12)

    def test_far_query_vanishes_and_clamps(self):
        b = DomainBounds((0.0,), (1.0,), 0.5, 2.0)
        d = Dataset([[0.0], [0.1]], [1, 0], [1.0, 1.0], b)
        f = fit_kernel_ridge(d, KernelConfig(rbf_gamma=1.0))
        assert f([[1e4]], 1)[0] == 0.0
        model = NuisanceModel(lambda x: np.full(len(x), 0.5), f, 0.05, b.y_lo, b.y_hi)
        assert model.outcome([[1e4]], 1)[0] == 0.5

    def test_residual_small(self):
        d, _ = gen_dataset(DATASET1, 800, np.random.default_rng(3))
        f = fit_kernel_ridge(d)
        assert all(arm.residual < 1e-8 for arm in f.arms)


class TestMlp:
    def test_constant_target(self):
        rng = np.random.default_rng(0)
        b = DomainBounds((0.0, 0.0), (1.0, 1.0), 0.0, 5.0)
        d = Dataset(rng.random((500, 2)), rng.integers(0, 2, 500), np.full(500, 3.0), b)
        f = fit_mlp(d, MlpConfig(), np.random.default_rng(1), "outcome")
        q = rng.random((200, 2))
        for a in (0, 1):
            assert np.all(np.abs(f(q, a) - 3.0) < 0.1)

    def test_deterministic(self):
        d, _ = gen_dataset(DATASET1, 300, np.random.default_rng(0))
        cfg = MlpConfig(epochs=20)
        f1 = fit_mlp(d, cfg, np.random.default_rng(5), "propensity")
        f2 = fit_mlp(d, cfg, np.random.default_rng(5), "propensity")
        assert np.array_equal(f1.w1, f2.w1) and np.array_equal(f1.w2, f2.w2) and f1.b2 == f2.b2

    def test_too_few_samples(self):
        d, _ = gen_dataset(DATASET1, 20, np.random.default_rng(0))
        with pytest.raises(ValueError):
            fit_mlp(d, MlpConfig(batch_size=32), np.random.default_rng(0), "outcome")


@pytest.mark.parametrize("kind", ["kernel", "nn"])
def test_model_ranges(kind):
    d, _ = gen_dataset(DATASET1, 400, np.random.default_rng(11))
    learner = LearnerConfig(kind=kind, mlp=MlpConfig(epochs=20))
    model = fit_nuisance(d, learner, RngStream(4).generator(2))
    q = np.random.default_rng(0).random((10_000, 2))
    p = model.propensity(q)
    assert p.min() >= learner.clip and p.max() <= 1 - learner.clip
    for a in (0, 1):
        mu = model.outcome(q, a)
        assert mu.min() >= d.bounds.y_lo and mu.max() <= d.bounds.y_hi
    again = fit_nuisance(d, learner, RngStream(4).generator(2))
    assert np.array_equal(again.propensity(q), p)
    assert np.array_equal(again.outcome(q, 1), model.outcome(q, 1))


@pytest.mark.parametrize("raw,expected", [(0.999, 0.95), (0.5, 0.5), (0.01, 0.05)])
def test_clipped_propensity(raw, expected):
    m = NuisanceModel(lambda x: np.full(len(np.atleast_2d(x)), raw), lambda x, a: 0, 0.05, 0, 1)
    assert clipped_propensity(m, [[0.0]])[0] == pytest.approx(expected)
