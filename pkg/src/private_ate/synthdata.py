"""Synthetic benchmarks with a known average treatment effect.

Observational design::

    X ~ U[0, 1]^p
    pi(x) = clip((x'beta + 1) / 2, 0.1, 0.9)     # P(x'beta >= eta), eta ~ U[-1, 1], clipped
    A ~ Bernoulli(pi(X))
    Y = tau * A + X'gamma + e,  e ~ U[-1, 1]

``beta`` and ``gamma`` share one random support of size ``s``, with
``beta_j ~ U[0, 0.3]`` and ``gamma_j ~ U[0, 1]`` on it. The RCT design uses one
covariate and assigns treatment with probability 0.5 independently of X.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, DomainBounds, write_csv


@dataclass(frozen=True)
class GeneratorSpec:
    p: int
    s: int
    tau_true: float = 1.0
    clip: tuple[float, float] = (0.1, 0.9)
    randomized: bool = False  # constant propensity 0.5 (RCT)

    def __post_init__(self):
        if not 1 <= self.s <= self.p:
            raise ValueError(f"support size must satisfy 1 <= s <= p, got s={self.s}, p={self.p}")
        lo, hi = self.clip
        if not 0 < lo <= hi < 1:
            raise ValueError("propensity clip range must lie inside (0, 1)")


DATASET1 = GeneratorSpec(p=2, s=2)
DATASET2 = GeneratorSpec(p=24, s=6)
RCT = GeneratorSpec(p=1, s=1, randomized=True)
PRESETS = {"dataset1": DATASET1, "dataset2": DATASET2, "rct": RCT}


@dataclass(frozen=True, eq=False)
class TruthRecord:
    spec: GeneratorSpec
    beta: np.ndarray
    gamma: np.ndarray
    support: np.ndarray
    bounds: DomainBounds

    @property
    def tau_true(self) -> float:
        return self.spec.tau_true

    def propensity(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.spec.randomized:
            return np.full(x.shape[0], 0.5)
        lo, hi = self.spec.clip
        return np.clip((x @ self.beta + 1.0) / 2.0, lo, hi)

    def to_dict(self) -> dict:
        return {
            "tau_true": self.tau_true,
            "p": self.spec.p,
            "s": self.spec.s,
            "randomized": self.spec.randomized,
            "propensity_clip": list(self.spec.clip),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "support": self.support.tolist(),
            "bounds": self.bounds.to_dict(),
        }


def draw_truth(spec: GeneratorSpec, rng: np.random.Generator) -> TruthRecord:
    support = np.sort(rng.choice(spec.p, size=spec.s, replace=False))
    beta = np.zeros(spec.p)
    gamma = np.zeros(spec.p)
    beta[support] = rng.uniform(0.0, 0.3, size=spec.s)
    gamma[support] = rng.uniform(0.0, 1.0, size=spec.s)
    if spec.randomized:
        beta[:] = 0.0
    tau = spec.tau_true
    # X'gamma ranges over [0, sum(gamma)] on the unit cube, noise over [-1, 1]
    y_lo = min(0.0, tau) - 1.0
    y_hi = max(0.0, tau) + float(gamma.sum()) + 1.0
    return TruthRecord(spec, beta, gamma, support, DomainBounds.unit_cube(spec.p, y_lo, y_hi))


def gen_dataset(spec: GeneratorSpec, n: int, rng: np.random.Generator) -> tuple[Dataset, TruthRecord]:
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    truth = draw_truth(spec, rng)
    x = rng.random((n, spec.p))
    a = (rng.random(n) < truth.propensity(x)).astype(float)
    noise = rng.uniform(-1.0, 1.0, size=n)
    y = spec.tau_true * a + x @ truth.gamma + noise
    return Dataset(x, a, y, truth.bounds), truth


def gen_rct(n: int, rng: np.random.Generator) -> tuple[Dataset, TruthRecord]:
    return gen_dataset(RCT, n, rng)


def potential_outcomes(truth: TruthRecord, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(Y(0), Y(1))`` pairs with independent noise for each arm."""
    x = rng.random((n, truth.spec.p))
    base = x @ truth.gamma
    y0 = base + rng.uniform(-1.0, 1.0, size=n)
    y1 = truth.tau_true + base + rng.uniform(-1.0, 1.0, size=n)
    return y0, y1


def export(d: Dataset, truth: TruthRecord, path) -> tuple[Path, Path]:
    """Write ``path`` as CSV and ``path`` + ``.truth.json`` as the sidecar truth record."""
    path = Path(path)
    write_csv(d, path)
    sidecar = path.with_name(path.name + ".truth.json")
    sidecar.write_text(json.dumps(truth.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path, sidecar
