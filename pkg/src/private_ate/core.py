"""Data model: samples, datasets, domain bounds, privacy budgets and RNG streams.

A :class:`Dataset` stores its observations column-wise as read-only numpy arrays
(``x`` with shape ``(n, p)``, ``a`` and ``y`` with shape ``(n,)``). Bounds are
always supplied from outside and never estimated from the data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptyDataset,
    InvalidBudget,
    NonBinaryTreatment,
    OutOfBounds,
    ParseError,
    SchemaError,
)

ROLES = ("treatment", "outcome", "covariate")


@dataclass(frozen=True)
class Sample:
    x: tuple[float, ...]
    a: float
    y: float


@dataclass(frozen=True)
class DomainBounds:
    """Closed box for covariates and outcome."""

    x_lo: tuple[float, ...]
    x_hi: tuple[float, ...]
    y_lo: float
    y_hi: float

    def __post_init__(self):
        object.__setattr__(self, "x_lo", tuple(float(v) for v in self.x_lo))
        object.__setattr__(self, "x_hi", tuple(float(v) for v in self.x_hi))
        object.__setattr__(self, "y_lo", float(self.y_lo))
        object.__setattr__(self, "y_hi", float(self.y_hi))
        if len(self.x_lo) != len(self.x_hi) or not self.x_lo:
            raise ValueError("x_lo and x_hi must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(self.x_lo, self.x_hi)):
            raise ValueError("x_lo must not exceed x_hi")
        # equal endpoints allowed: a singleton outcome domain is a valid (if trivial) box
        if self.y_lo > self.y_hi:
            raise ValueError("y_lo must not exceed y_hi")

    @property
    def p(self) -> int:
        return len(self.x_lo)

    @property
    def lower(self) -> np.ndarray:
        """Lower corner of the joint (x, y) box."""
        return np.array(self.x_lo + (self.y_lo,))

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.x_hi + (self.y_hi,))

    @classmethod
    def unit_cube(cls, p: int, y_lo: float, y_hi: float) -> "DomainBounds":
        return cls((0.0,) * p, (1.0,) * p, y_lo, y_hi)

    def to_dict(self) -> dict:
        return {"x_lo": list(self.x_lo), "x_hi": list(self.x_hi), "y_lo": self.y_lo, "y_hi": self.y_hi}


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    bounds: DomainBounds

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "a", _frozen(np.ravel(self.a)))
        object.__setattr__(self, "y", _frozen(np.ravel(self.y)))
        n = self.x.shape[0]
        if self.a.shape != (n,) or self.y.shape != (n,):
            raise ValueError("x, a and y must have the same number of rows")
        if self.x.shape[1] != self.bounds.p:
            raise ValueError(f"covariate dimension {self.x.shape[1]} does not match bounds ({self.bounds.p})")

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], bounds: DomainBounds) -> "Dataset":
        if not samples:
            raise EmptyDataset("dataset has no samples")
        x = np.array([s.x for s in samples], dtype=float)
        return cls(x, [s.a for s in samples], [s.y for s in samples], bounds)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return list(iter(self))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield Sample(tuple(self.x[i]), float(self.a[i]), float(self.y[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.a[idx], self.y[idx], self.bounds)

    def arm(self, a: int) -> "Dataset":
        return self.subset(np.flatnonzero(self.a == a))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.bounds == other.bounds
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


@dataclass(frozen=True)
class PrivacyBudget:
    """Total (epsilon, delta) and the share given to the ATE release.

    The larger share is computed by multiplication and the smaller one by
    subtraction. The larger share is at least half the total, so the
    subtraction is exact (Sterbenz) and the parts add back to the total with no
    rounding loss.
    """

    epsilon: float
    delta: float
    ate_fraction: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidBudget(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidBudget(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.ate_fraction < 1:
            raise InvalidBudget(f"ate_fraction must lie in (0, 1), got {self.ate_fraction}")

    def _parts(self, total: float) -> tuple[float, float]:
        f = self.ate_fraction
        if f >= 0.5:
            first = f * total
            return first, total - first
        second = (1.0 - f) * total
        return total - second, second

    @property
    def eps1(self) -> float:
        return self._parts(self.epsilon)[0]

    @property
    def eps2(self) -> float:
        return self._parts(self.epsilon)[1]

    @property
    def delta1(self) -> float:
        return self._parts(self.delta)[0]

    @property
    def delta2(self) -> float:
        return self._parts(self.delta)[1]

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "ate_fraction": self.ate_fraction,
            "eps1": self.eps1,
            "delta1": self.delta1,
            "eps2": self.eps2,
            "delta2": self.delta2,
        }


@dataclass(frozen=True)
class RngStream:
    """Reproducible source of randomness keyed by ``(seed, stream)``.

    ``generator(*purpose)`` returns a fresh PCG64 generator for a named purpose,
    so the draws used for one step never depend on how many numbers an earlier
    step consumed.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream < 2**64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self, *purpose: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *purpose))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


def validate_dataset(d: Dataset) -> Dataset:
    """Return ``d`` unchanged if it is non-empty, binary-treated and inside its bounds."""
    if len(d) == 0:
        raise EmptyDataset("dataset has no samples")
    b = d.bounds
    bad_a = np.flatnonzero((d.a != 0) & (d.a != 1))
    xlo, xhi = np.array(b.x_lo), np.array(b.x_hi)
    # NaN fails both comparisons and is reported as out of bounds
    bad_x = ~((d.x >= xlo) & (d.x <= xhi))
    bad_y = ~((d.y >= b.y_lo) & (d.y <= b.y_hi))
    bad_rows = np.flatnonzero(bad_x.any(axis=1) | bad_y)
    first_a = bad_a[0] if bad_a.size else len(d)
    first_row = bad_rows[0] if bad_rows.size else len(d)
    if first_a <= first_row and bad_a.size:
        raise NonBinaryTreatment(int(first_a), float(d.a[first_a]))
    if bad_rows.size:
        i = int(first_row)
        cols = np.flatnonzero(bad_x[i])
        if cols.size:
            raise OutOfBounds(i, f"x[{cols[0]}]", float(d.x[i, cols[0]]))
        raise OutOfBounds(i, "y", float(d.y[i]))
    return d


def split_dataset(d: Dataset, fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Uniformly shuffled disjoint split; the first part gets ``round_half_up(fraction * n)`` rows."""
    if not 0 < fraction < 1:
        raise DegenerateSplit(f"fraction must lie in (0, 1), got {fraction}")
    n = len(d)
    k = math.floor(fraction * n + 0.5)
    if k < 1 or k > n - 1:
        raise DegenerateSplit(f"split of n={n} at fraction {fraction} leaves an empty part")
    perm = rng.permutation(n)
    return d.subset(np.sort(perm[:k])), d.subset(np.sort(perm[k:]))


def _check_schema(schema: Mapping[str, str]) -> tuple[str, str, list[str]]:
    for col, role in schema.items():
        if role not in ROLES:
            raise SchemaError(col, f"unknown role {role!r}")
    treat = [c for c, r in schema.items() if r == "treatment"]
    outc = [c for c, r in schema.items() if r == "outcome"]
    cov = [c for c, r in schema.items() if r == "covariate"]
    if len(treat) != 1:
        raise SchemaError("treatment", "schema must name exactly one treatment column")
    if len(outc) != 1:
        raise SchemaError("outcome", "schema must name exactly one outcome column")
    if not cov:
        raise SchemaError("covariate", "schema must name at least one covariate column")
    return treat[0], outc[0], cov


def load_csv(path, schema: Mapping[str, str], bounds: DomainBounds) -> tuple[Dataset, int]:
    """Read a comma-separated file with a header row.

    ``schema`` maps column names to ``"treatment"``, ``"outcome"`` or
    ``"covariate"``; columns not named are ignored. Rows with an empty cell in a
    mapped column are dropped. Returns the validated dataset and the number of
    dropped rows.
    """
    treat, outc, cov = _check_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "missing header row") from None
        header = [h.strip() for h in header]
        cols = {}
        for name in [treat, outc, *cov]:
            if name not in header:
                raise SchemaError(name, "column not found in header")
            cols[name] = header.index(name)
        if len(cov) != bounds.p:
            raise SchemaError("covariate", f"{len(cov)} covariate columns but bounds have dimension {bounds.p}")

        xs, As, ys = [], [], []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, found {len(row)}")
            cells = {name: row[j].strip() for name, j in cols.items()}
            if any(v == "" for v in cells.values()):
                dropped += 1
                continue
            try:
                vals = {name: float(v) for name, v in cells.items()}
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            xs.append([vals[c] for c in cov])
            As.append(vals[treat])
            ys.append(vals[outc])
    if not xs:
        raise EmptyDataset(f"{path}: no complete rows")
    d = Dataset(np.array(xs), As, ys, bounds)
    return validate_dataset(d), dropped


def write_csv(d: Dataset, path, covariate_names: Sequence[str] | None = None,
              treatment: str = "a", outcome: str = "y") -> dict[str, str]:
    """Write ``d`` in the format read by :func:`load_csv`; returns the matching schema."""
    names = list(covariate_names) if covariate_names else [f"x{j + 1}" for j in range(d.p)]
    if len(names) != d.p:
        raise SchemaError("covariate", "wrong number of covariate names")
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, treatment, outcome])
        for i in range(len(d)):
            w.writerow([*(repr(float(v)) for v in d.x[i]), int(d.a[i]), repr(float(d.y[i]))])
    schema = {name: "covariate" for name in names}
    schema[treatment] = "treatment"
    schema[outcome] = "outcome"
    return schema
