from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from private_ate.core import (
    Dataset,
    DomainBounds,
    PrivacyBudget,
    RngStream,
    Sample,
    load_csv,
    split_dataset,
    validate_dataset,
    write_csv,
)
from private_ate.errors import (
    DegenerateSplit,
    EmptyDataset,
    InvalidBudget,
    NonBinaryTreatment,
    OutOfBounds,
    ParseError,
    SchemaError,
)

BOUNDS = DomainBounds((0.0, 0.0), (1.0, 1.0), -5.0, 5.0)


def make(n, seed=0, bounds=BOUNDS):
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((n, bounds.p)), rng.integers(0, 2, n), rng.uniform(-5, 5, n), bounds)


class TestValidate:
    def test_identity(self):
        d = Dataset.from_samples([Sample((0.1, 0.2), 0, 1.0), Sample((0.9, 0.3), 1, -2.0)], BOUNDS)
        assert validate_dataset(d) is d

    def test_outcome_out_of_bounds(self):
        d = Dataset.from_samples([Sample((0.1, 0.2), 0, 1.0), Sample((0.5, 0.5), 1, 7.0)], BOUNDS)
        with pytest.raises(OutOfBounds) as exc:
            validate_dataset(d)
        assert exc.value.index == 1 and exc.value.coordinate == "y"

    def test_covariate_out_of_bounds(self):
        d = Dataset.from_samples([Sample((0.1, 1.2), 0, 1.0)], BOUNDS)
        with pytest.raises(OutOfBounds) as exc:
            validate_dataset(d)
        assert exc.value.coordinate == "x[1]"

    def test_non_binary(self):
        d = Dataset.from_samples([Sample((0.1, 0.2), 0.5, 1.0)], BOUNDS)
        with pytest.raises(NonBinaryTreatment):
            validate_dataset(d)

    def test_nan_outcome_rejected(self):
        d = Dataset(np.zeros((1, 2)), [1], [np.nan], BOUNDS)
        with pytest.raises(OutOfBounds):
            validate_dataset(d)

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            Dataset.from_samples([], BOUNDS)
        with pytest.raises(EmptyDataset):
            validate_dataset(Dataset(np.zeros((0, 2)), [], [], BOUNDS))

    def test_idempotent(self):
        d = make(50)
        assert validate_dataset(validate_dataset(d)) == validate_dataset(d)

    def test_immutable(self):
        d = make(5)
        with pytest.raises(ValueError):
            d.y[0] = 1.0


class TestSplit:
    def test_halving(self):
        a, b = split_dataset(make(10), 0.5, np.random.default_rng(0))
        assert (len(a), len(b)) == (5, 5)

    def test_ties_round_up(self):
        a, b = split_dataset(make(3), 0.5, np.random.default_rng(0))
        assert (len(a), len(b)) == (2, 1)

    def test_single_sample(self):
        with pytest.raises(DegenerateSplit):
            split_dataset(make(1), 0.5, np.random.default_rng(0))

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(2, 60), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**32))
    def test_partition(self, n, frac, seed):
        d = make(n, seed=1)
        try:
            a, b = split_dataset(d, frac, np.random.default_rng(seed))
        except DegenerateSplit:
            assert round(frac * n + 1e-12) in (0, n) or int(frac * n + 0.5) in (0, n)
            return
        rows = {tuple(r) for r in np.column_stack([d.x, d.a, d.y])}
        pa = [tuple(r) for r in np.column_stack([a.x, a.a, a.y])]
        pb = [tuple(r) for r in np.column_stack([b.x, b.a, b.y])]
        assert len(pa) + len(pb) == n
        assert set(pa) | set(pb) == rows and not set(pa) & set(pb)
        a2, b2 = split_dataset(d, frac, np.random.default_rng(seed))
        assert a == a2 and b == b2


class TestBudget:
    @pytest.mark.parametrize("frac,expected", [(0.9, (0.45, 0.05)), (0.5, (0.25, 0.25))])
    def test_split(self, frac, expected):
        b = PrivacyBudget(0.5, 1e-5, frac)
        assert b.eps1 == pytest.approx(expected[0], abs=1e-15)
        assert b.eps2 == pytest.approx(expected[1], abs=1e-15)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction(self, frac):
        with pytest.raises(InvalidBudget):
            PrivacyBudget(0.5, 1e-5, frac)

    @pytest.mark.parametrize("eps,delta", [(0.0, 1e-5), (-1.0, 1e-5), (1.0, 0.0), (1.0, 1.0)])
    def test_bad_totals(self, eps, delta):
        with pytest.raises(InvalidBudget):
            PrivacyBudget(eps, delta)

    @given(eps=st.floats(1e-3, 1e3), delta=st.floats(1e-12, 0.5), frac=st.floats(0.01, 0.99))
    def test_parts_sum_to_total(self, eps, delta, frac):
        b = PrivacyBudget(eps, delta, frac)
        assert b.eps1 + b.eps2 == eps
        assert b.delta1 + b.delta2 == delta
        assert b.eps2 > 0 and b.delta2 > 0


class TestRng:
    def test_reproducible(self):
        a = RngStream(7, 3).generator(1).random(5)
        b = RngStream(7, 3).generator(1).random(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(7, 3).generator(1).random(5), RngStream(7, 4).generator(1).random(5))
        assert not np.array_equal(RngStream(7, 3).generator(1).random(5), RngStream(7, 3).generator(2).random(5))

    def test_range(self):
        RngStream(2**64 - 1, 2**64 - 1)
        with pytest.raises(ValueError):
            RngStream(-1)


class TestCsv:
    def write(self, tmp_path, text):
        p = tmp_path / "data.csv"
        p.write_text(text, encoding="utf-8")
        return p

    SCHEMA = {"age": "covariate", "hr": "covariate", "treat": "treatment", "died": "outcome"}
    B = DomainBounds((0, 0), (120, 300), 0, 1)

    def test_three_rows(self, tmp_path):
        p = self.write(tmp_path, "age,hr,treat,died\n50,80,1,0\n60,90,0,1\n70,100,1,1\n")
        d, dropped = load_csv(p, self.SCHEMA, self.B)
        assert len(d) == 3 and dropped == 0
        assert d.x.tolist() == [[50, 80], [60, 90], [70, 100]]
        assert d.a.tolist() == [1, 0, 1]

    def test_missing_outcome_dropped(self, tmp_path):
        p = self.write(tmp_path, "age,hr,treat,died\n50,80,1,0\n60,90,0,\n70,100,1,1\n")
        d, dropped = load_csv(p, self.SCHEMA, self.B)
        assert len(d) == 2 and dropped == 1

    def test_unmapped_column_ignored(self, tmp_path):
        p = self.write(tmp_path, "id,age,hr,treat,died\nx,50,80,1,0\n,60,90,0,1\n")
        d, dropped = load_csv(p, self.SCHEMA, self.B)
        assert len(d) == 2 and dropped == 0

    def test_non_binary_treatment(self, tmp_path):
        p = self.write(tmp_path, "age,hr,treat,died\n50,80,2,0\n")
        with pytest.raises(NonBinaryTreatment):
            load_csv(p, self.SCHEMA, self.B)

    def test_parse_error_line(self, tmp_path):
        p = self.write(tmp_path, "age,hr,treat,died\n50,80,1,0\n60,abc,0,1\n")
        with pytest.raises(ParseError) as exc:
            load_csv(p, self.SCHEMA, self.B)
        assert exc.value.line == 3

    def test_missing_column(self, tmp_path):
        p = self.write(tmp_path, "age,treat,died\n50,1,0\n")
        with pytest.raises(SchemaError) as exc:
            load_csv(p, self.SCHEMA, self.B)
        assert exc.value.column == "hr"

    def test_schema_needs_roles(self, tmp_path):
        p = self.write(tmp_path, "age,treat,died\n50,1,0\n")
        with pytest.raises(SchemaError):
            load_csv(p, {"age": "covariate", "died": "outcome"}, DomainBounds((0,), (1,), 0, 1))

    def test_out_of_bounds_after_load(self, tmp_path):
        p = self.write(tmp_path, "age,hr,treat,died\n500,80,1,0\n")
        with pytest.raises(OutOfBounds):
            load_csv(p, self.SCHEMA, self.B)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(1, 40))
    def test_round_trip(self, tmp_path_factory, seed, n):
        d = make(n, seed=seed)
        p = tmp_path_factory.mktemp("rt") / "d.csv"
        schema = write_csv(d, p)
        d1, _ = load_csv(p, schema, d.bounds)
        write_csv(d1, p)
        d2, dropped = load_csv(p, schema, d.bounds)
        assert d1 == d == d2 and dropped == 0
