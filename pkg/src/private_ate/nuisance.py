"""Nuisance learners: propensity pi(x) = P(A=1 | x) and outcome mu(x, a) = E[Y | x, a].

Two learner families are available:

* ``kernel``: L2-regularised logistic regression for the propensity and RBF
  kernel ridge regression (one model per treatment arm) for the outcome.
* ``nn``: one-hidden-layer tanh perceptrons trained by mini-batch SGD for both.

All fitted evaluators are immutable. :class:`NuisanceModel` clips propensities
to ``[c, 1 - c]`` and clamps outcomes into the outcome bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy import linalg

from .core import Dataset, DomainBounds
from .errors import LinearSolveFailure, NonFiniteLoss, SingleArm

DEFAULT_CLIP = 0.05


@dataclass(frozen=True)
class KernelConfig:
    alpha: float = 0.1
    rbf_gamma: float | None = None  # None -> 1/p

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("ridge strength alpha must be positive")
        if self.rbf_gamma is not None and self.rbf_gamma <= 0:
            raise ValueError("rbf_gamma must be positive")


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 32
    l2: float = 0.1
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden width must be at least 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs and batch_size must be positive")


@dataclass(frozen=True)
class LearnerConfig:
    kind: Literal["kernel", "nn"] = "kernel"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    clip: float = DEFAULT_CLIP
    logistic_l2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("kernel", "nn"):
            raise ValueError(f"unknown learner {self.kind!r}")
        if not 0 < self.clip < 0.5:
            raise ValueError("clip level must lie in (0, 0.5)")


# --------------------------------------------------------------------------- evaluators


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


@dataclass(frozen=True, eq=False)
class LogisticPropensity:
    coef: np.ndarray
    intercept: float
    n_iter: int = 0
    converged: bool = True

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _sigmoid(x @ self.coef + self.intercept)


def _sq_dists(x, z):
    d = (x * x).sum(1)[:, None] + (z * z).sum(1)[None, :] - 2.0 * x @ z.T
    return np.maximum(d, 0.0)


def rbf_kernel(x, z, gamma: float) -> np.ndarray:
    return np.exp(-gamma * _sq_dists(np.atleast_2d(x), np.atleast_2d(z)))


@dataclass(frozen=True, eq=False)
class KernelRidgeRegressor:
    x_train: np.ndarray
    dual_coef: np.ndarray
    gamma: float
    residual: float  # ||(K + alpha I) c - y||_inf at fit time

    def __call__(self, x) -> np.ndarray:
        return rbf_kernel(np.asarray(x, dtype=float), self.x_train, self.gamma) @ self.dual_coef


@dataclass(frozen=True, eq=False)
class MlpNet:
    """tanh hidden layer, linear or sigmoid head; inputs are rescaled by the domain box."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    x_center: np.ndarray
    x_scale: np.ndarray
    head: Literal["linear", "sigmoid"]

    def __call__(self, x) -> np.ndarray:
        z = (np.atleast_2d(np.asarray(x, dtype=float)) - self.x_center) / self.x_scale
        out = np.tanh(z @ self.w1 + self.b1) @ self.w2 + self.b2
        return _sigmoid(out) if self.head == "sigmoid" else out


@dataclass(frozen=True, eq=False)
class ArmOutcome:
    """Outcome regression fitted separately on each treatment arm."""

    arms: tuple[Callable, Callable]

    def __call__(self, x, a: int) -> np.ndarray:
        return self.arms[int(a)](x)


@dataclass(frozen=True, eq=False)
class NuisanceModel:
    propensity_raw: Callable[[np.ndarray], np.ndarray]
    outcome_raw: Callable[[np.ndarray, int], np.ndarray]
    clip: float
    y_lo: float
    y_hi: float
    meta: dict = field(default_factory=dict)

    def propensity(self, x) -> np.ndarray:
        return np.clip(self.propensity_raw(x), self.clip, 1.0 - self.clip)

    def outcome(self, x, a: int) -> np.ndarray:
        return np.clip(self.outcome_raw(x, a), self.y_lo, self.y_hi)


def clipped_propensity(model: NuisanceModel, x) -> np.ndarray:
    return model.propensity(x)


# --------------------------------------------------------------------------- fitting


def _require_both_arms(d: Dataset):
    n1 = int(np.sum(d.a == 1))
    if n1 == 0 or n1 == len(d):
        raise SingleArm(f"all {len(d)} samples have treatment {int(d.a[0])}")


def fit_logistic(d: Dataset, l2: float = 1.0, tol: float = 1e-6, max_iter: int = 5000) -> LogisticPropensity:
    """Full-batch gradient ascent on the ridge-penalised Bernoulli log-likelihood.

    The objective is averaged over samples, ``mean(loglik) - l2 / (2n) * ||coef||^2``
    with an unpenalised intercept; iteration stops once the gradient's max-norm
    drops below ``tol``. The step is ``1 / L`` with ``L`` the Lipschitz constant
    of the gradient, so every step increases the objective.
    """
    _require_both_arms(d)
    n, p = d.x.shape
    xt = np.hstack([d.x, np.ones((n, 1))])
    a = d.a
    pen = np.full(p + 1, l2 / n)
    pen[-1] = 0.0
    lip = 0.25 * np.linalg.eigvalsh(xt.T @ xt / n)[-1] + l2 / n
    step = 1.0 / lip
    w = np.zeros(p + 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = xt.T @ (a - _sigmoid(xt @ w)) / n - pen * w
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        w += step * grad
    return LogisticPropensity(w[:-1].copy(), float(w[-1]), it, converged)


def _fit_krr_arm(x, y, alpha, gamma) -> KernelRidgeRegressor:
    k = rbf_kernel(x, x, gamma)
    k[np.diag_indices_from(k)] += alpha
    try:
        c = linalg.cho_solve(linalg.cho_factor(k, lower=True), y)
    except linalg.LinAlgError as exc:
        raise LinearSolveFailure(str(exc)) from None
    if not np.all(np.isfinite(c)):
        raise LinearSolveFailure("non-finite dual coefficients")
    resid = float(np.max(np.abs(k @ c - y)))
    return KernelRidgeRegressor(x.copy(), c, gamma, resid)


def fit_kernel_ridge(d: Dataset, cfg: KernelConfig = KernelConfig()) -> ArmOutcome:
    """Solve ``(K + alpha I) c = y`` on each arm; prediction is ``k(x, .)^T c``."""
    _require_both_arms(d)
    gamma = cfg.rbf_gamma if cfg.rbf_gamma is not None else 1.0 / d.p
    arms = tuple(
        _fit_krr_arm(d.x[d.a == arm], d.y[d.a == arm], cfg.alpha, gamma) for arm in (0, 1)
    )
    return ArmOutcome(arms)


def _fit_net(x, t, bounds: DomainBounds, cfg: MlpConfig, rng: np.random.Generator, head) -> MlpNet:
    n, p = x.shape
    lo, hi = np.array(bounds.x_lo), np.array(bounds.x_hi)
    center = 0.5 * (lo + hi)
    scale = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
    z = (x - center) / scale
    h = cfg.hidden
    lim1 = np.sqrt(6.0 / (p + h))
    lim2 = np.sqrt(6.0 / (h + 1))
    w1 = rng.uniform(-lim1, lim1, size=(p, h))
    b1 = rng.uniform(-lim1, lim1, size=h)
    w2 = rng.uniform(-lim2, lim2, size=h)
    b2 = float(t.mean()) if head == "linear" else 0.0
    batch = min(cfg.batch_size, n)
    lr, l2 = cfg.learning_rate, cfg.l2
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            zb, tb = z[idx], t[idx]
            m = len(idx)
            hid = np.tanh(zb @ w1 + b1)
            out = hid @ w2 + b2
            if head == "sigmoid":
                # cross-entropy with a sigmoid head has the same output gradient as squared loss
                err = _sigmoid(out) - tb
            else:
                err = out - tb
            g_out = err / m
            g_w2 = hid.T @ g_out + l2 * w2 / m
            g_b2 = g_out.sum()
            g_hid = np.outer(g_out, w2) * (1.0 - hid * hid)
            g_w1 = zb.T @ g_hid + l2 * w1 / m
            g_b1 = g_hid.sum(0)
            w1 -= lr * g_w1
            b1 -= lr * g_b1
            w2 -= lr * g_w2
            b2 -= lr * g_b2
        if not (np.isfinite(b2) and np.all(np.isfinite(w2)) and np.all(np.isfinite(w1))):
            raise NonFiniteLoss("MLP training diverged; lower the learning rate")
    return MlpNet(w1, b1, w2, float(b2), center, scale, head)


def fit_mlp(d: Dataset, cfg: MlpConfig, rng: np.random.Generator,
            target: Literal["propensity", "outcome"]):
    """Train perceptron(s) by mini-batch SGD with an L2 weight penalty.

    ``target="propensity"`` fits one network with a sigmoid head on the
    treatment indicator; ``target="outcome"`` fits one network per arm with a
    linear head on the outcome and returns an :class:`ArmOutcome`.
    """
    if len(d) < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} samples, got {len(d)}")
    _require_both_arms(d)
    if target == "propensity":
        return _fit_net(d.x, d.a.astype(float), d.bounds, cfg, rng, "sigmoid")
    if target == "outcome":
        return ArmOutcome(tuple(
            _fit_net(d.x[d.a == arm], d.y[d.a == arm], d.bounds, cfg, rng, "linear") for arm in (0, 1)
        ))
    raise ValueError(f"unknown target {target!r}")


def fit_nuisance(d: Dataset, learner: LearnerConfig, rng: np.random.Generator) -> NuisanceModel:
    b = d.bounds
    if learner.kind == "kernel":
        prop = fit_logistic(d, l2=learner.logistic_l2)
        outc = fit_kernel_ridge(d, learner.kernel)
        meta = {"learner": "kernel", "ridge_alpha": learner.kernel.alpha,
                "rbf_gamma": outc.arms[0].gamma, "logistic_l2": learner.logistic_l2}
    else:
        prop = fit_mlp(d, learner.mlp, rng, "propensity")
        outc = fit_mlp(d, learner.mlp, rng, "outcome")
        m = learner.mlp
        meta = {"learner": "nn", "hidden": m.hidden, "l2": m.l2, "learning_rate": m.learning_rate,
                "epochs": m.epochs, "batch_size": m.batch_size}
    return NuisanceModel(prop, outc, learner.clip, b.y_lo, b.y_hi, meta)
