"""Baseline intervals, Monte-Carlo coverage experiments, sweeps and utility curves.

Every run ``i`` of an experiment uses ``RngStream(seed + i)``: the dataset, the
nuisance fit, the sensitivity search and each noise draw come from separate
purpose streams of that run, so results do not depend on execution order or on
which other methods were requested.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .aipw import ScoreVector
from .core import Dataset, PrivacyBudget, RngStream
from .errors import DomainError, SingleArm
from .nuisance import LearnerConfig
from .privatize import PipelineFit, normal_quantile, run_pipeline
from .sensitivity import OptimizerConfig, smooth_scale
from .synthdata import DATASET1, GeneratorSpec, gen_dataset

METHODS = ("standard", "naive", "valid_naive", "privATE", "diff_means", "bootstrap")
DEFAULT_METHODS = ("standard", "naive", "privATE")
NOTES = {"diff_means": "approximate baseline"}

# purpose keys (the pipeline itself uses 1..6)
DATA, DIFF_MEANS, BOOTSTRAP = 0, 7, 8


def _z_interval(center: float, var: float, n: int, alpha: float) -> tuple[float, float]:
    if not var >= 0:
        raise DomainError(f"variance must be non-negative, got {var}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(var / n)
    return center - half, center + half


def standard_ci(sv: ScoreVector, n: int, alpha: float) -> tuple[float, float]:
    """Non-private Wald interval from the AIPW estimate and its sandwich variance."""
    return _z_interval(sv.tau_hat, sv.sigma2_hat, n, alpha)


def naive_ci(tau_dp: float, sigma2_hat: float, n: int, alpha: float) -> tuple[float, float]:
    """Private center, non-private and unaugmented variance. Undercovers by design."""
    return _z_interval(tau_dp, sigma2_hat, n, alpha)


def valid_naive_ci(tau_dp: float, sigma2_hat: float, gamma_tau: float, n: int,
                   eps1: float, delta1: float, alpha: float) -> tuple[float, float]:
    r = smooth_scale(gamma_tau, n, eps1, delta1)
    return _z_interval(tau_dp, sigma2_hat + n * r * r, n, alpha)


def gaussian_mechanism_sigma(sensitivity: float, eps: float, delta: float) -> float:
    """Classical calibration ``sqrt(2 ln(1.25/delta)) / eps * sensitivity``."""
    return math.sqrt(2.0 * math.log(1.25 / delta)) / eps * sensitivity


def diff_means_release(d: Dataset, budget: PrivacyBudget, rng: np.random.Generator) -> tuple[float, float]:
    """Noisy difference of arm means and the variance of that difference.

    Each arm mean of the clipped outcome gets Gaussian noise calibrated to
    sensitivity ``(y_hi - y_lo) / n_arm`` under ``(eps/2, delta/2)``. The
    variance adds both noise variances to the usual two-sample variance; the
    per-arm empirical variances are used as is.
    """
    b = d.bounds
    y = np.clip(d.y, b.y_lo, b.y_hi)
    center, var = 0.0, 0.0
    for arm, sign in ((1, 1.0), (0, -1.0)):
        ya = y[d.a == arm]
        m = ya.size
        if m < 2:
            raise SingleArm(f"arm {arm} has {m} samples; need at least 2")
        sigma = gaussian_mechanism_sigma((b.y_hi - b.y_lo) / m, budget.epsilon / 2.0, budget.delta / 2.0)
        center += sign * (ya.mean() + sigma * rng.standard_normal())
        var += ya.var(ddof=1) / m + sigma * sigma
    return center, var


def dp_diff_means_ci(d: Dataset, budget: PrivacyBudget, alpha: float,
                     rng: np.random.Generator) -> tuple[float, float]:
    """Private difference-of-means interval for randomized data (approximate baseline)."""
    center, var = diff_means_release(d, budget, rng)
    # var is already the variance of the difference, hence n=1
    return _z_interval(center, var, 1, alpha)


def bootstrap_replicates(fit: PipelineFit, budget: PrivacyBudget, B: int, rng: RngStream) -> np.ndarray:
    """Private AIPW replicates on ``B`` nonparametric resamples of the scores.

    Resamples reuse the fitted nuisances and the full-sample sensitivity. Each
    replicate release is charged ``(eps2/B, delta2/B)`` under sequential
    composition; the center keeps the ``(eps1, delta1)`` release.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    g = fit.scores.gamma
    n = g.size
    gen = rng.generator(BOOTSTRAP)
    r = smooth_scale(fit.report.gamma_tau, n, budget.eps2 / B, budget.delta2 / B)
    reps = np.empty(B)
    for b in range(B):
        idx = gen.integers(0, n, size=n)
        reps[b] = g[idx].mean() + r * gen.standard_normal()
    return reps


def percentile_interval(reps: np.ndarray, center: float, alpha: float) -> tuple[float, float]:
    lo, hi = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    shift = center - reps.mean()
    return float(lo + shift), float(hi + shift)


def bootstrap_ci(d: Dataset, learner: LearnerConfig, budget: PrivacyBudget, alpha: float, B: int,
                 rng: RngStream, optimizer: OptimizerConfig = OptimizerConfig(),
                 fit: PipelineFit | None = None) -> tuple[float, float]:
    """Percentile bootstrap of private replicates, re-centered at the private ATE.

    ``fit`` lets callers pass an existing pipeline result for ``d``.
    """
    if fit is None:
        fit = run_pipeline(d, learner, budget, alpha, rng, optimizer)
    return percentile_interval(bootstrap_replicates(fit, budget, B, rng), fit.report.tau_dp, alpha)


# --------------------------------------------------------------------------- experiments


@dataclass(frozen=True)
class ExperimentConfig:
    spec: GeneratorSpec = DATASET1
    n: int = 3000
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    budget: PrivacyBudget = field(default_factory=lambda: PrivacyBudget(0.5, 1e-5, 0.9))
    alphas: tuple[float, ...] = (0.2, 0.1, 0.05)
    runs: int = 500
    seed: int = 0
    methods: tuple[str, ...] = DEFAULT_METHODS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    split: bool = False
    bootstrap_b: int = 100
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not self.alphas or not all(0 < a < 1 for a in self.alphas):
            raise ValueError("alphas must be a non-empty list of values in (0, 1)")


@dataclass(frozen=True)
class RunRecord:
    index: int
    seed: int
    tau_true: float
    tau_hat: float
    sigma2_hat: float
    tau_dp: float
    sigma2_dp: float
    v_dp: float
    gamma_tau: float
    gamma_sigma: float
    intervals: dict  # (method, alpha) -> (lo, hi)


@dataclass(frozen=True)
class CoverageResult:
    method: str
    level: float
    runs: int
    hits: int
    coverage: float
    se: float
    mean_width: float
    median_width: float
    note: str = ""

    @classmethod
    def from_intervals(cls, method: str, alpha: float, intervals: Sequence[tuple[float, float]],
                       truths: Sequence[float]) -> "CoverageResult":
        runs = len(intervals)
        if runs == 0:
            raise ValueError("coverage needs at least one run")
        hits = sum(1 for (lo, hi), t in zip(intervals, truths) if lo <= t <= hi)
        cov = hits / runs
        widths = np.array([hi - lo for lo, hi in intervals])
        return cls(method, 1.0 - alpha, runs, hits, cov, math.sqrt(cov * (1.0 - cov) / runs),
                   float(widths.mean()), float(np.median(widths)), NOTES.get(method, ""))


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple[RunRecord, ...]
    results: tuple[CoverageResult, ...]

    def result(self, method: str, alpha: float) -> CoverageResult:
        for r in self.results:
            if r.method == method and math.isclose(r.level, 1.0 - alpha):
                return r
        raise KeyError((method, alpha))

    def widths(self, method: str, alpha: float) -> np.ndarray:
        return np.array([hi - lo for lo, hi in (rec.intervals[(method, alpha)] for rec in self.records)])


def run_once(cfg: ExperimentConfig, index: int) -> RunRecord:
    rng = RngStream(cfg.seed + index)
    d, truth = gen_dataset(cfg.spec, cfg.n, rng.generator(DATA))
    fit = run_pipeline(d, cfg.learner, cfg.budget, cfg.alphas[0], rng, cfg.optimizer, cfg.split)
    rep, sv = fit.report, fit.scores
    n = sv.n
    b = cfg.budget
    dm = diff_means_release(d, b, rng.generator(DIFF_MEANS)) if "diff_means" in cfg.methods else None
    reps = bootstrap_replicates(fit, b, cfg.bootstrap_b, rng) if "bootstrap" in cfg.methods else None
    intervals = {}
    for alpha in cfg.alphas:
        for method in cfg.methods:
            if method == "standard":
                ci = standard_ci(sv, n, alpha)
            elif method == "naive":
                ci = naive_ci(rep.tau_dp, sv.sigma2_hat, n, alpha)
            elif method == "valid_naive":
                ci = valid_naive_ci(rep.tau_dp, sv.sigma2_hat, rep.gamma_tau, n, b.eps1, b.delta1, alpha)
            elif method == "privATE":
                ci = rep.interval(alpha)
            elif method == "diff_means":
                ci = _z_interval(dm[0], dm[1], 1, alpha)
            else:
                ci = percentile_interval(reps, rep.tau_dp, alpha)
            intervals[(method, alpha)] = ci
    return RunRecord(index, cfg.seed + index, truth.tau_true, sv.tau_hat, sv.sigma2_hat, rep.tau_dp,
                     rep.sigma2_dp, rep.v_dp, rep.gamma_tau, rep.gamma_sigma, intervals)


def coverage_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Repeat the full pipeline ``cfg.runs`` times on fresh data and count CI hits.

    A failing run raises; runs are never silently dropped.
    """
    if cfg.runs < 1:
        raise ValueError("runs must be at least 1")
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(run_once, [cfg] * cfg.runs, range(cfg.runs)))
    else:
        records = [run_once(cfg, i) for i in range(cfg.runs)]
    truths = [r.tau_true for r in records]
    results = tuple(
        CoverageResult.from_intervals(m, alpha, [r.intervals[(m, alpha)] for r in records], truths)
        for alpha in cfg.alphas for m in cfg.methods
    )
    return ExperimentResult(cfg, tuple(records), results)


@dataclass(frozen=True)
class SweepPoint:
    axis: str
    value: float
    method: str
    level: float
    runs: int
    coverage: float
    se: float
    mean_width: float
    median_width: float
    note: str = ""


def sweep(axis: str, grid: Iterable[float], base: ExperimentConfig) -> list[SweepPoint]:
    """Rerun :func:`coverage_experiment` at each grid point (same seeds at every point)."""
    grid = list(grid)
    if axis not in ("epsilon", "n"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not grid:
        raise ValueError("sweep grid is empty")
    out = []
    for value in grid:
        if axis == "epsilon":
            cfg = replace(base, budget=replace(base.budget, epsilon=float(value)))
        else:
            cfg = replace(base, n=int(value))
        res = coverage_experiment(cfg)
        out += [SweepPoint(axis, value, r.method, r.level, r.runs, r.coverage, r.se, r.mean_width,
                           r.median_width, r.note) for r in res.results]
    return out


@dataclass(frozen=True)
class UtilityPoint:
    epsilon: float
    weight: float
    method: str
    width: float
    privacy_score: float
    width_score: float
    utility: float


def utility_curve(points: Sequence[SweepPoint], weights: Iterable[float],
                  level: float | None = None) -> list[UtilityPoint]:
    """Weighted privacy/width utility over an epsilon sweep.

    ``utility = w * (1 - eps / eps_max) + (1 - w) * (1 - width / width_max)``
    with both maxima taken over the whole sweep (all methods), using median widths.
    """
    weights = list(weights)
    if any(not 0 <= w <= 1 for w in weights):
        raise ValueError("utility weights must lie in [0, 1]")
    pts = [p for p in points if p.axis == "epsilon"]
    if level is not None:
        pts = [p for p in pts if math.isclose(p.level, level)]
    if not pts:
        raise ValueError("utility needs epsilon-sweep points")
    levels = {p.level for p in pts}
    if len(levels) > 1:
        raise ValueError("points span several confidence levels; pass level=")
    eps_max = max(p.value for p in pts)
    width_max = max(p.median_width for p in pts)
    out = []
    for w in weights:
        for p in pts:
            ps = 1.0 - p.value / eps_max
            ws = 1.0 - p.median_width / width_max if width_max > 0 else 1.0
            out.append(UtilityPoint(p.value, w, p.method, p.median_width, ps, ws, w * ps + (1.0 - w) * ws))
    return out


# --------------------------------------------------------------------------- serialisation


SCHEMA_VERSION = 1


def to_csv(rows: Sequence) -> str:
    """Dataclass rows to CSV text; the first column is the output schema version."""
    buf = io.StringIO()
    if not rows:
        return ""
    names = list(asdict(rows[0]).keys())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", *names])
    for r in rows:
        w.writerow([SCHEMA_VERSION, *(_fmt(v) for v in asdict(r).values())])
    return buf.getvalue()


def to_json(rows: Sequence, **meta) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, **meta, "rows": [asdict(r) for r in rows]}, indent=2)


def _fmt(v):
    return repr(v) if isinstance(v, float) else v
