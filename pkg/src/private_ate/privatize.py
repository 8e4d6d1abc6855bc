"""Output perturbation of the ATE and its variance, augmented variance and private CI.

The end-to-end entry point is :func:`estimate_private`. It releases two noisy
statistics, the ATE under ``(eps1, delta1)`` and the sandwich variance under
``(eps2, delta2)``; everything downstream (augmented variance, intervals at any
level) is post-processing of those two numbers and public constants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .aipw import ScoreVector, estimate_ate
from .core import Dataset, PrivacyBudget, RngStream, split_dataset, validate_dataset
from .errors import DomainError, InvalidBudget
from .nuisance import LearnerConfig, NuisanceModel, fit_nuisance
from .sensitivity import OptimizerConfig, gamma_sigma, gamma_tau, smooth_scale

SCHEMA_VERSION = 1

# purpose keys for RngStream.generator; each pipeline step draws from its own stream
SPLIT, NUISANCE, SENS_TAU, SENS_SIGMA, NOISE_TAU, NOISE_SIGMA = range(1, 7)


def gaussian_noise(rng: np.random.Generator) -> float:
    return float(rng.standard_normal())


def _check_budget(eps, delta):
    if not (eps > 0 and math.isfinite(eps)):
        raise InvalidBudget(f"epsilon must be positive and finite, got {eps}")
    if not 0 < delta < 1:
        raise InvalidBudget(f"delta must lie in (0, 1), got {delta}")


def privatize_ate(tau_hat: float, gamma_tau: float, n: int, eps: float, delta: float,
                  rng: np.random.Generator | None = None, u: float | None = None) -> tuple[float, float]:
    """Return ``(tau_dp, r_tau)``. ``u`` overrides the standard-normal draw."""
    _check_budget(eps, delta)
    r = smooth_scale(gamma_tau, n, eps, delta)
    if u is None:
        u = gaussian_noise(rng)
    return tau_hat + r * u, r


def privatize_variance(sigma2_hat: float, gamma_sigma: float, n: int, eps: float, delta: float,
                       rng: np.random.Generator | None = None, u: float | None = None) -> float:
    """Truncated Gaussian release ``max(0, sigma2_hat + r_sigma * U)``."""
    if sigma2_hat < 0:
        raise ValueError("variance estimate must be non-negative")
    _check_budget(eps, delta)
    r = smooth_scale(gamma_sigma, n, eps, delta)
    if u is None:
        u = gaussian_noise(rng)
    return max(0.0, sigma2_hat + r * u)


def augmented_variance(sigma2_dp: float, gamma_tau: float, n: int, eps1: float, delta1: float) -> float:
    """``sigma2_dp + gamma_tau^2 * 50 ln(n) ln(2/delta1) / (n eps1^2)``."""
    _check_budget(eps1, delta1)
    if n < 2:
        raise InvalidBudget(f"need n >= 2, got {n}")
    return sigma2_dp + gamma_tau ** 2 * 50.0 * math.log(n) / (n * eps1 ** 2) * math.log(2.0 / delta1)


# Rational approximation to the inverse normal CDF (P. J. Acklam), |rel err| < 1.15e-9,
# followed by one Newton step on the CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(q: float) -> float:
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q}")
    p = min(q, 1.0 - q)
    if p < _P_LOW:
        t = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]) / \
            ((((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0)
    else:
        s = p - 0.5
        r = s * s
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    # x approximates the lower-tail quantile (x <= 0)
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    x -= (normal_cdf(x) - p) / pdf
    return -x if q > 0.5 else x


def _check_interval_args(v, n, alpha):
    if not v >= 0:
        raise DomainError(f"variance must be non-negative, got {v}")
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def dp_confidence_interval(tau_dp: float, v_dp: float, n: int, alpha: float) -> tuple[float, float]:
    _check_interval_args(v_dp, n, alpha)
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(v_dp / n)
    return tau_dp - half, tau_dp + half


def split_budget(budget: PrivacyBudget) -> tuple[float, float, float, float]:
    return budget.eps1, budget.delta1, budget.eps2, budget.delta2


@dataclass(frozen=True, eq=False)
class DpAteReport:
    tau_dp: float
    sigma2_dp: float
    v_dp: float
    ci_lo: float
    ci_hi: float
    alpha: float
    budget: PrivacyBudget
    r_tau: float
    r_sigma: float
    gamma_tau: float
    gamma_sigma: float
    n: int
    seed: int
    # internal diagnostics; not differentially private
    tau_hat: float = float("nan")
    sigma2_hat: float = float("nan")
    argmax_tau: dict = field(default_factory=dict)
    argmax_sigma: dict = field(default_factory=dict)
    learner: dict = field(default_factory=dict)
    split: bool = False
    config_digest: str = ""

    def interval(self, alpha: float) -> tuple[float, float]:
        """Private CI at another level; post-processing of the same release."""
        return dp_confidence_interval(self.tau_dp, self.v_dp, self.n, alpha)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tau_dp": self.tau_dp,
            "sigma2_dp": self.sigma2_dp,
            "v_dp": self.v_dp,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "alpha": self.alpha,
            "budget": self.budget.to_dict(),
            "scales": {"r_tau": self.r_tau, "r_sigma": self.r_sigma},
            "sensitivities": {"gamma_tau": self.gamma_tau, "gamma_sigma": self.gamma_sigma},
            "n": self.n,
            "seed": self.seed,
            "split": self.split,
            "learner": self.learner,
            "config_digest": self.config_digest,
            "diagnostics": {
                "tau_hat": self.tau_hat,
                "sigma2_hat": self.sigma2_hat,
                "argmax_tau": self.argmax_tau,
                "argmax_sigma": self.argmax_sigma,
            },
            "not_for_release": ["scales", "sensitivities", "diagnostics"],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


@dataclass(frozen=True, eq=False)
class PipelineFit:
    """Everything :func:`estimate_private` computed, for baselines that reuse the fit."""

    report: DpAteReport
    model: NuisanceModel
    scores: ScoreVector
    eval_data: Dataset


def run_pipeline(d: Dataset, learner: LearnerConfig, budget: PrivacyBudget, alpha: float,
                 rng: RngStream, optimizer: OptimizerConfig = OptimizerConfig(),
                 split: bool = False, config_digest: str = "") -> PipelineFit:
    validate_dataset(d)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if split:
        d_fit, d_eval = split_dataset(d, 0.5, rng.generator(SPLIT))
    else:
        d_fit = d_eval = d
    model = fit_nuisance(d_fit, learner, rng.generator(NUISANCE))
    sv = estimate_ate(model, d_eval)
    n = sv.n
    t = gamma_tau(model, sv, d.bounds, optimizer, rng.generator(SENS_TAU), d_eval)
    s = gamma_sigma(model, sv, d.bounds, optimizer, rng.generator(SENS_SIGMA), d_eval)
    eps1, delta1, eps2, delta2 = split_budget(budget)
    tau_dp, r_tau = privatize_ate(sv.tau_hat, t.value, n, eps1, delta1, rng.generator(NOISE_TAU))
    sigma2_dp = privatize_variance(sv.sigma2_hat, s.value, n, eps2, delta2, rng.generator(NOISE_SIGMA))
    r_sigma = smooth_scale(s.value, n, eps2, delta2)
    v_dp = augmented_variance(sigma2_dp, t.value, n, eps1, delta1)
    lo, hi = dp_confidence_interval(tau_dp, v_dp, n, alpha)
    report = DpAteReport(
        tau_dp=tau_dp, sigma2_dp=sigma2_dp, v_dp=v_dp, ci_lo=lo, ci_hi=hi, alpha=alpha,
        budget=budget, r_tau=r_tau, r_sigma=r_sigma, gamma_tau=t.value, gamma_sigma=s.value,
        n=n, seed=rng.seed, tau_hat=sv.tau_hat, sigma2_hat=sv.sigma2_hat,
        argmax_tau=t.argmax, argmax_sigma=s.argmax, learner=dict(model.meta), split=split,
        config_digest=config_digest,
    )
    return PipelineFit(report, model, sv, d_eval)


def estimate_private(d: Dataset, learner: LearnerConfig, budget: PrivacyBudget, alpha: float,
                     rng: RngStream, optimizer: OptimizerConfig = OptimizerConfig(),
                     split: bool = False, config_digest: str = "") -> DpAteReport:
    """Fit nuisances, privatise the AIPW estimate and its variance, and build the CI.

    With ``split=True`` the nuisances are fitted on one half of ``d`` and the
    scores are averaged over the other half; ``n`` is then the size of that half.
    """
    return run_pipeline(d, learner, budget, alpha, rng, optimizer, split, config_digest).report
