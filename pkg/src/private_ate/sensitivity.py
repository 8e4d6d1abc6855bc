"""Gross-error sensitivities of the ATE and its variance, and the noise scale they imply.

A sensitivity is the supremum of ``|IF(z)|`` over the data domain
``z = (a, x, y)``. The binary treatment is enumerated; the continuous block
``(x, y)`` is searched by multistart L-BFGS-B with central finite-difference
gradients. Every training point is also evaluated, and the best one per arm is
used as an extra start, so the result never falls below the largest observed
``|IF(z_i)|``. On low-dimensional boxes the vertices are enumerated as well and
the best vertex becomes another start; the score is affine in ``y`` so maxima
sit on the ``y`` faces and often in corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .aipw import ScoreVector, score_gamma
from .core import Dataset, DomainBounds
from .errors import InvalidBudget, NonFiniteObjective
from .nuisance import NuisanceModel

# f(a, Z) -> values, with Z of shape (m, p + 1) holding rows (x_1..x_p, y)
Objective = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OptimizerConfig:
    starts: int = 10
    max_iter: int = 200
    fd_rel_step: float = 1e-5
    vertex_limit: int = 4096  # enumerate box vertices when there are at most this many

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("need at least one random start")
        if self.max_iter < 1 or self.fd_rel_step <= 0:
            raise ValueError("max_iter and fd_rel_step must be positive")


@dataclass(frozen=True)
class StartTrace:
    a: int
    start: int  # -1 marks the training-sample start, -2 the best box vertex
    start_value: float
    best_value: float


@dataclass(frozen=True, eq=False)
class MaxResult:
    value: float
    a: int
    point: np.ndarray  # (x_1..x_p, y)
    trace: tuple[StartTrace, ...] = ()

    @property
    def argmax(self) -> dict:
        return {"a": self.a, "x": [float(v) for v in self.point[:-1]], "y": float(self.point[-1])}


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    gamma_tau: float
    gamma_sigma: float
    tau: MaxResult
    sigma: MaxResult

    def to_dict(self) -> dict:
        return {
            "gamma_tau": self.gamma_tau,
            "gamma_sigma": self.gamma_sigma,
            "argmax_tau": self.tau.argmax,
            "argmax_sigma": self.sigma.argmax,
        }


def _checked(f: Objective, a: int, z: np.ndarray) -> np.ndarray:
    v = np.asarray(f(a, z), dtype=float)
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise NonFiniteObjective((a, z[bad].tolist()))
    return v


def _ascend(f: Objective, a: int, z0: np.ndarray, lo, hi, free, h, max_iter) -> tuple[float, np.ndarray]:
    """Maximise ``|f(a, .)|`` from ``z0`` over the box; the sign is fixed at the start."""
    v0 = float(_checked(f, a, z0[None, :])[0])
    sign = 1.0 if v0 >= 0 else -1.0
    if not free.size:
        return abs(v0), z0
    k = free.size
    base = z0.copy()

    def neg_obj(u):
        z = base.copy()
        z[free] = u
        pts = np.repeat(z[None, :], 2 * k + 1, axis=0)
        up = np.minimum(u + h, hi[free])
        dn = np.maximum(u - h, lo[free])
        rows = np.arange(k)
        pts[1 + rows, free] = up
        pts[1 + k + rows, free] = dn
        vals = sign * _checked(f, a, pts)
        grad = (vals[1:k + 1] - vals[k + 1:]) / (up - dn)
        return -vals[0], -grad

    res = minimize(neg_obj, z0[free], jac=True, method="L-BFGS-B",
                   bounds=list(zip(lo[free], hi[free])), options={"maxiter": max_iter})
    z = base.copy()
    z[free] = np.clip(res.x, lo[free], hi[free])
    v = abs(float(_checked(f, a, z[None, :])[0]))
    if v < abs(v0):
        return abs(v0), z0
    return v, z


def _vertices(lo: np.ndarray, hi: np.ndarray, free: np.ndarray) -> np.ndarray:
    k = free.size
    bits = (np.arange(2 ** k)[:, None] >> np.arange(k)[None, :]) & 1
    v = np.repeat(lo[None, :], 2 ** k, axis=0)
    v[:, free] = np.where(bits == 1, hi[free], lo[free])
    return v


def _best_row(f: Objective, a: int, pts: np.ndarray) -> np.ndarray:
    vals = np.abs(_checked(f, a, pts))
    return pts[int(np.argmax(vals))].copy()


def maximize_abs_over_domain(f: Objective, bounds: DomainBounds, cfg: OptimizerConfig,
                             rng: np.random.Generator,
                             seeds: dict[int, np.ndarray] | None = None) -> MaxResult:
    """Multistart search for ``sup |f(a, x, y)|`` over ``a in {0, 1}`` and the bounds box.

    ``seeds`` maps each arm to points (rows ``(x, y)``) that must be dominated;
    all of them are evaluated and the best one becomes an extra start. Ties
    keep the earliest candidate (arm 0 before arm 1, then seed start, vertex
    start, random starts in index order).
    """
    lo, hi = bounds.lower, bounds.upper
    width = hi - lo
    free = np.flatnonzero(width > 0)
    h = cfg.fd_rel_step * width[free]
    corners = _vertices(lo, hi, free) if 2 ** free.size <= cfg.vertex_limit else None
    best: tuple[float, int, np.ndarray] | None = None
    trace = []

    def offer(v, a, z):
        nonlocal best
        if best is None or v > best[0]:
            best = (v, a, z)

    for a in (0, 1):
        starts = []
        if seeds is not None and a in seeds and len(seeds[a]):
            starts.append((-1, _best_row(f, a, np.asarray(seeds[a], dtype=float))))
        if corners is not None:
            starts.append((-2, _best_row(f, a, corners)))
        u = rng.random((cfg.starts, lo.size))
        random_starts = lo + u * width
        starts += [(s, random_starts[s]) for s in range(cfg.starts)]
        for idx, z0 in starts:
            v0 = abs(float(_checked(f, a, z0[None, :])[0]))
            v, z = _ascend(f, a, z0, lo, hi, free, h, cfg.max_iter)
            trace.append(StartTrace(a, idx, v0, v))
            offer(v, a, z)
    value, a, z = best
    return MaxResult(value, a, z, tuple(trace))


def _split(z: np.ndarray, p: int):
    return z[:, :p], z[:, p]


def _training_seeds(d: Dataset) -> dict[int, np.ndarray]:
    z = np.column_stack([d.x, d.y])
    return {a: z[d.a == a] for a in (0, 1)}


def tau_objective(model: NuisanceModel, sv: ScoreVector, p: int) -> Objective:
    def f(a, z):
        x, y = _split(z, p)
        return score_gamma(model, x, np.full(len(y), a), y) - sv.tau_hat
    return f


def sigma_objective(model: NuisanceModel, sv: ScoreVector, p: int) -> Objective:
    def f(a, z):
        x, y = _split(z, p)
        return (score_gamma(model, x, np.full(len(y), a), y) - sv.tau_hat) ** 2 - sv.sigma2_hat
    return f


def gamma_tau(model: NuisanceModel, sv: ScoreVector, bounds: DomainBounds, cfg: OptimizerConfig,
              rng: np.random.Generator, train: Dataset | None = None) -> MaxResult:
    """``sup_z |Gamma(z) - tau_hat|``."""
    seeds = _training_seeds(train) if train is not None else None
    return maximize_abs_over_domain(tau_objective(model, sv, bounds.p), bounds, cfg, rng, seeds)


def gamma_sigma(model: NuisanceModel, sv: ScoreVector, bounds: DomainBounds, cfg: OptimizerConfig,
                rng: np.random.Generator, train: Dataset | None = None) -> MaxResult:
    """``sup_z |(Gamma(z) - tau_hat)^2 - sigma2_hat|``."""
    seeds = _training_seeds(train) if train is not None else None
    return maximize_abs_over_domain(sigma_objective(model, sv, bounds.p), bounds, cfg, rng, seeds)


def sensitivities(model: NuisanceModel, sv: ScoreVector, d: Dataset, cfg: OptimizerConfig,
                  rng: np.random.Generator) -> SensitivityReport:
    t = gamma_tau(model, sv, d.bounds, cfg, rng, d)
    s = gamma_sigma(model, sv, d.bounds, cfg, rng, d)
    return SensitivityReport(t.value, s.value, t, s)


def smooth_scale(gamma: float, n: int, eps: float, delta: float) -> float:
    """Noise standard deviation ``gamma * 5 sqrt(2 ln n ln(2/delta)) / (eps n)``."""
    if n < 2:
        raise InvalidBudget(f"need n >= 2, got {n}")
    if not eps > 0:
        raise InvalidBudget(f"epsilon must be positive, got {eps}")
    if not 0 < delta < 1:
        raise InvalidBudget(f"delta must lie in (0, 1), got {delta}")
    if gamma < 0:
        raise ValueError("sensitivity must be non-negative")
    return gamma * 5.0 * math.sqrt(2.0 * math.log(n) * math.log(2.0 / delta)) / (eps * n)
