import random

import pytest

from dptrips.domain import (
    Attribute,
    Dataset,
    DensityProfile,
    DomainSchema,
    Histogram,
    SchemaError,
    canonicalize,
    density_profile,
    exact_histogram,
    point_count,
)

from conftest import pts


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            DomainSchema((Attribute("x", "categorical"), Attribute("x", "categorical")))

    def test_unknown_kind_rejected(self):
        with pytest.raises(SchemaError):
            Attribute("x", "numeric")

    def test_arity_mismatch_rejected(self, value_schema):
        with pytest.raises(SchemaError):
            value_schema.validate_point(("a", "b"))

    def test_value_set_membership(self):
        schema = DomainSchema((Attribute("w", "time-window", frozenset({"00:00", "00:15"})),))
        schema.validate_point(("00:15",))
        with pytest.raises(SchemaError):
            schema.validate_point(("00:20",))

    def test_empty_value_rejected(self, value_schema):
        with pytest.raises(SchemaError):
            value_schema.validate_point(("",))

    def test_projection_keeps_schema_order(self):
        schema = DomainSchema(
            (Attribute("a", "categorical"), Attribute("b", "categorical"), Attribute("c", "categorical"))
        )
        assert schema.project(["c", "a"]).names == ("a", "c")
        with pytest.raises(SchemaError):
            schema.project(["nope"])


class TestDataset:
    def test_rows_iterate_lexicographically(self, value_schema):
        ds = Dataset(value_schema, pts("b", "a", "a"))
        assert list(ds) == pts("a", "a", "b")

    def test_insertion_order_is_invisible(self, value_schema):
        assert Dataset(value_schema, pts("c", "a", "b")) == Dataset(value_schema, pts("a", "b", "c"))

    def test_n_counts_multiplicity(self, value_schema):
        ds = Dataset(value_schema, pts("a", "a", "b"))
        assert ds.n == 3 and len(ds) == 3

    def test_from_counts_drops_zeros(self, value_schema):
        ds = Dataset.from_counts(value_schema, {("a",): 2, ("b",): 0})
        assert ds.counts == {("a",): 2}
        with pytest.raises(ValueError):
            Dataset.from_counts(value_schema, {("a",): -1})

    def test_invalid_rows_rejected(self, value_schema):
        with pytest.raises(SchemaError):
            Dataset(value_schema, [("a", "b")])


class TestPointCount:
    def test_small_multiset(self, value_schema):
        ds = Dataset(value_schema, pts("a", "a", "b"))
        assert point_count(ds, ("a",)) == 2

    def test_empty_dataset(self, value_schema):
        assert point_count(Dataset(value_schema), ("a",)) == 0

    def test_thousand_copies_against_scan_oracle(self, value_schema):
        rows = pts(*(["p"] * 1000))
        ds = Dataset(value_schema, rows)
        oracle = sum(1 for r in rows if r == ("p",))
        assert point_count(ds, ("p",)) == oracle == 1000

    def test_schema_mismatch_rejected(self, value_schema):
        with pytest.raises(SchemaError):
            point_count(Dataset(value_schema), ("a", "b"))


class TestExactHistogram:
    def test_small_multiset(self, value_schema):
        hist = exact_histogram(Dataset(value_schema, pts("a", "a", "b")))
        assert dict(hist.entries) == {("a",): 2, ("b",): 1}

    def test_empty(self, value_schema):
        assert len(exact_histogram(Dataset(value_schema))) == 0

    def test_random_fixture_against_bruteforce_oracle(self, value_schema):
        rnd = random.Random(4321)
        rows = [(f"v{rnd.randrange(50):02d}",) for _ in range(10_000)]
        ds = Dataset(value_schema, rows)
        hist = exact_histogram(ds)
        for point in set(rows):
            assert hist.get(point) == sum(1 for r in rows if r == point)
        assert set(hist.entries) == set(rows)

    def test_total_equals_n(self, value_schema):
        rnd = random.Random(5)
        rows = [(f"v{rnd.randrange(9)}",) for _ in range(500)]
        ds = Dataset(value_schema, rows)
        assert exact_histogram(ds).total() == ds.n


class TestHistogram:
    def test_zero_and_negative_counts_rejected(self, value_schema):
        with pytest.raises(ValueError):
            Histogram(value_schema, {("a",): 0})
        with pytest.raises(ValueError):
            Histogram(value_schema, {("a",): -3})

    def test_entries_sorted(self, value_schema):
        hist = Histogram(value_schema, {("c",): 1, ("a",): 2})
        assert list(hist.entries) == [("a",), ("c",)]

    def test_row_expansion(self, value_schema):
        hist = Histogram(value_schema, {("b",): 2, ("a",): 1})
        assert list(hist.to_rows()) == pts("a", "b", "b")


class TestDensityProfile:
    def test_identical_rows_fully_dense(self, value_schema):
        ds = Dataset(value_schema, pts(*["a"] * 40))
        for k in (1, 10, 40):
            assert density_profile(ds, k).gamma == 1.0

    def test_all_unique_sparse_at_two(self, value_schema):
        ds = Dataset(value_schema, [(f"u{i}",) for i in range(30)])
        assert density_profile(ds, 2).gamma == 0.0

    def test_mixed_direct_evaluation(self, value_schema):
        ds = Dataset(value_schema, pts(*(["a"] * 10 + ["b"] * 2)))
        assert density_profile(ds, 5).gamma == pytest.approx(10 / 12)

    def test_empty_dataset_gamma_zero(self, value_schema):
        assert density_profile(Dataset(value_schema), 3).gamma == 0.0

    def test_k_validated(self, value_schema):
        with pytest.raises(ValueError):
            density_profile(Dataset(value_schema), 0)
        with pytest.raises(ValueError):
            DensityProfile(1, 1.5)


class TestCanonicalize:
    def test_sorts_rows(self, value_schema):
        assert list(canonicalize(Dataset(value_schema, pts("b", "a", "a")))) == pts("a", "a", "b")

    def test_idempotent(self, value_schema):
        ds = Dataset(value_schema, pts("a", "a", "b"))
        once = canonicalize(ds)
        assert canonicalize(once) == once
        assert list(once) == list(canonicalize(once))

    def test_permutations_share_canonical_form(self, value_schema):
        rnd = random.Random(77)
        rows = [(f"r{rnd.randrange(40):02d}",) for _ in range(1000)]
        shuffled = rows[:]
        rnd.shuffle(shuffled)
        a = canonicalize(Dataset(value_schema, rows))
        b = canonicalize(Dataset(value_schema, shuffled))
        assert a == b
        assert list(a) == list(b)

    def test_multiset_preserved(self, value_schema):
        rows = pts("c", "a", "c", "b")
        ds = canonicalize(Dataset(value_schema, rows))
        assert sorted(ds) == sorted(rows)
        assert ds.n == len(rows)
