"""AIPW score, ATE point estimate, influence functions and sandwich variance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .nuisance import NuisanceModel


def gamma_from_parts(a, y, pi, mu1, mu0):
    """Two-term AIPW score from precomputed nuisance values (broadcasts)."""
    a = np.asarray(a, dtype=float)
    ipw = (a / pi - (1.0 - a) / (1.0 - pi)) * y
    return ipw - ((1.0 - pi) * mu1 + pi * mu0) / (pi * (1.0 - pi)) * (a - pi)


def canonical_from_parts(a, y, pi, mu1, mu0):
    """Four-term textbook form; algebraically equal to :func:`gamma_from_parts`."""
    a = np.asarray(a, dtype=float)
    return mu1 - mu0 + a * (y - mu1) / pi - (1.0 - a) * (y - mu0) / (1.0 - pi)


def _parts(model: NuisanceModel, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return model.propensity(x), model.outcome(x, 1), model.outcome(x, 0)


def score_gamma(model: NuisanceModel, x, a, y):
    """Score for one sample (``x`` of shape ``(p,)``) or a batch (``(m, p)``)."""
    pi, mu1, mu0 = _parts(model, x)
    out = gamma_from_parts(a, y, pi, mu1, mu0)
    return float(out[0]) if np.ndim(x) == 1 else out


def score_canonical(model: NuisanceModel, x, a, y):
    pi, mu1, mu0 = _parts(model, x)
    out = canonical_from_parts(a, y, pi, mu1, mu0)
    return float(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True, eq=False)
class ScoreVector:
    gamma: np.ndarray
    tau_hat: float
    sigma2_hat: float

    @classmethod
    def from_scores(cls, gamma) -> "ScoreVector":
        g = np.array(gamma, dtype=float)
        g.setflags(write=False)
        tau = float(np.mean(g))
        return cls(g, tau, float(np.mean((g - tau) ** 2)))

    @property
    def n(self) -> int:
        return self.gamma.shape[0]


def estimate_ate(model: NuisanceModel, d: Dataset) -> ScoreVector:
    return ScoreVector.from_scores(score_gamma(model, d.x, d.a, d.y))


def influence_ate(sv: ScoreVector, i=None):
    """``gamma_i - tau_hat``; all samples when ``i`` is None."""
    if i is None:
        return sv.gamma - sv.tau_hat
    return float(sv.gamma[i] - sv.tau_hat)


def sandwich_variance(sv: ScoreVector) -> float:
    return float(np.mean((sv.gamma - sv.tau_hat) ** 2))


def influence_variance(sv: ScoreVector, model: NuisanceModel, x, a, y):
    g = score_gamma(model, x, a, y)
    return (g - sv.tau_hat) ** 2 - sv.sigma2_hat
