import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dptrips.domain import Dataset
from dptrips.noise import NoiseSource, PrivacyBudget, laplace_tail
from dptrips.stability import stable_histogram, suppression_threshold

from conftest import pts
from dptrips.domain import Attribute, DomainSchema

VALUE_SCHEMA = DomainSchema((Attribute("value", "categorical"),))

# frozen from high-precision evaluation of 2*ln(2/delta)/eps + 1
THRESHOLD_EPS1_DELTA8M = 34.176198560408111
THRESHOLD_EPS2_DELTA8M = 17.588099280204055
THRESHOLD_EPS1_DELTA05 = 8.377758908227873


class TestSuppressionThreshold:
    def test_paper_parameters(self):
        delta = 1.0 / 8_000_000
        assert suppression_threshold(PrivacyBudget(1.0, delta)) == pytest.approx(
            THRESHOLD_EPS1_DELTA8M, abs=1e-9
        )
        assert suppression_threshold(PrivacyBudget(2.0, delta)) == pytest.approx(
            THRESHOLD_EPS2_DELTA8M, abs=1e-9
        )

    def test_limit_as_delta_approaches_one(self):
        t = suppression_threshold(PrivacyBudget(2.0, 1.0 - 1e-12))
        assert t == pytest.approx(math.log(2.0) / 1.0 + 1.0, abs=1e-9)

    def test_delta_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            PrivacyBudget(2.0, 2.0)  # delta >= 1 is not even a budget
        with pytest.raises(ValueError):
            suppression_threshold(PrivacyBudget(1.0, 0.0))  # pure DP unsupported
        with pytest.raises(ValueError):
            suppression_threshold(PrivacyBudget(0.0, 0.5))


class TestStableHistogramBasics:
    def test_empty_dataset_releases_nothing(self, value_schema):
        budget = PrivacyBudget(1.0, 0.05)
        for seed in range(20):
            out = stable_histogram(Dataset(value_schema), budget, NoiseSource.seeded(seed))
            assert len(out) == 0

    def test_deterministic_under_seed(self, value_schema):
        ds = Dataset(value_schema, pts(*["a"] * 50 + ["b"] * 40))
        budget = PrivacyBudget(1.0, 0.05)
        a = stable_histogram(ds, budget, NoiseSource.seeded(3))
        b = stable_histogram(ds, budget, NoiseSource.seeded(3))
        assert a == b

    def test_unique_rows_survive_at_most_half_delta(self, value_schema):
        # per-point survival of count-1 rows; exact rate is delta/4
        budget = PrivacyBudget(1.0, 0.05)
        ds = Dataset(value_schema, pts("a", "b", "c", "d"))
        rng = NoiseSource.seeded(404)
        trials = 100_000
        survived = {p: 0 for p in ds.points()}
        for _ in range(trials):
            out = stable_histogram(ds, budget, rng)
            for p in out.entries:
                survived[p] += 1
        sigma = math.sqrt(0.0125 * (1 - 0.0125) / trials)
        for p, k in survived.items():
            assert k / trials <= budget.delta / 2 + 3 * sigma

    def test_heavy_point_survives_with_accurate_count(self, value_schema):
        # threshold ~ 8.38 at (1, 0.05); a count of 1000 is ~496 sigma above
        # it, and P(|count error| <= 10) = 1 - e^{-10.5/2} ~ 0.99475
        budget = PrivacyBudget(1.0, 0.05)
        ds = Dataset(value_schema, pts(*["p"] * 1000))
        rng = NoiseSource.seeded(505)
        trials = 10_000
        survived = 0
        accurate = 0
        for _ in range(trials):
            out = stable_histogram(ds, budget, rng)
            c = out.get(("p",))
            if c > 0:
                survived += 1
                if 990 <= c <= 1010:
                    accurate += 1
        assert survived / trials >= 0.9999
        assert accurate / trials >= 0.99

    def test_released_counts_are_positive_ints(self, value_schema):
        ds = Dataset(value_schema, pts(*["a"] * 100))
        out = stable_histogram(ds, PrivacyBudget(1.0, 0.05), NoiseSource.seeded(1))
        for c in out.entries.values():
            assert isinstance(c, int) and c >= 1


# random micro-datasets: up to 6 distinct labels, multiplicities up to 60
dataset_strategy = st.dictionaries(
    st.sampled_from([("a",), ("b",), ("c",), ("d",), ("e",), ("f",)]),
    st.integers(min_value=1, max_value=60),
    min_size=0,
    max_size=6,
)
budget_strategy = st.tuples(
    st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([0.01, 0.05, 0.2])
)


class TestStableHistogramProperties:
    @settings(max_examples=1000, deadline=None)
    @given(counts=dataset_strategy, eb=budget_strategy, seed=st.integers(0, 2**32 - 1))
    def test_no_new_points(self, counts, eb, seed):
        ds = Dataset.from_counts(VALUE_SCHEMA, counts)
        out = stable_histogram(ds, PrivacyBudget(*eb), NoiseSource.seeded(seed))
        assert set(out.entries) <= set(ds.counts)

    @settings(max_examples=1000, deadline=None)
    @given(counts=dataset_strategy, eb=budget_strategy, seed=st.integers(0, 2**32 - 1))
    def test_threshold_floor(self, counts, eb, seed):
        budget = PrivacyBudget(*eb)
        ds = Dataset.from_counts(VALUE_SCHEMA, counts)
        out = stable_histogram(ds, budget, NoiseSource.seeded(seed))
        floor = math.floor(suppression_threshold(budget) + 0.5) - 1
        for c in out.entries.values():
            assert c >= 1
            assert c >= floor

    @settings(max_examples=1000, deadline=None)
    @given(
        rows=st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=40),
        seed=st.integers(0, 2**32 - 1),
        order=st.randoms(use_true_random=False),
    )
    def test_order_invariance(self, rows, seed, order):
        shuffled = rows[:]
        order.shuffle(shuffled)
        budget = PrivacyBudget(1.0, 0.1)
        a = stable_histogram(Dataset(VALUE_SCHEMA, [(r,) for r in rows]), budget, NoiseSource.seeded(seed))
        b = stable_histogram(
            Dataset(VALUE_SCHEMA, [(r,) for r in shuffled]), budget, NoiseSource.seeded(seed)
        )
        assert a == b


class TestUtilityBound:
    def test_max_error_within_union_bound(self, value_schema):
        # all counts >= 2x threshold at the production delta; the bound
        # (2/eps) ln(2m/beta) + 0.5 holds for >= 1 - beta of trials
        budget = PrivacyBudget(1.0, 1.0 / 8_000_000)
        t = suppression_threshold(budget)
        m, beta = 8, 0.01
        counts = {(f"q{i}",): int(2 * t) + 7 * i for i in range(m)}
        ds = Dataset.from_counts(value_schema, counts)
        bound = (2.0 / budget.epsilon) * math.log(2 * m / beta) + 0.5
        rng = NoiseSource.seeded(606)
        trials = 10_000
        within = 0
        for _ in range(trials):
            out = stable_histogram(ds, budget, rng)
            err = max(abs(out.get(p) - c) for p, c in counts.items())
            if err <= bound:
                within += 1
        assert within / trials >= 1 - beta

    def test_suppressed_points_were_small(self, value_schema):
        # suppression implies q_x < threshold + noise scale; check the stated
        # bound threshold + (2/eps) ln(2m/beta) for >= 1 - beta of trials
        budget = PrivacyBudget(1.0, 0.05)
        t = suppression_threshold(budget)
        counts = {("tiny",): 1, ("small",): 4, ("mid",): int(t), ("big",): 60}
        m, beta = len(counts), 0.01
        ds = Dataset.from_counts(value_schema, counts)
        bound = t + (2.0 / budget.epsilon) * math.log(2 * m / beta)
        rng = NoiseSource.seeded(707)
        trials = 10_000
        ok = 0
        for _ in range(trials):
            out = stable_histogram(ds, budget, rng)
            if all(c < bound for p, c in counts.items() if out.get(p) == 0):
                ok += 1
        assert ok / trials >= 1 - beta

    def test_survival_rate_matches_tail_prediction(self, value_schema):
        # Monte-Carlo check of the analytic survival probability
        # P(c + Lap(2/eps) >= T) for a mid-size count
        budget = PrivacyBudget(1.0, 0.05)
        t = suppression_threshold(budget)
        c = 5
        predicted = laplace_tail(2.0, t - c)  # c < t, so the tail form applies
        ds = Dataset.from_counts(value_schema, {("x",): c})
        rng = NoiseSource.seeded(808)
        trials = 100_000
        survived = sum(1 for _ in range(trials) if len(stable_histogram(ds, budget, rng)))
        sigma = math.sqrt(predicted * (1 - predicted) / trials)
        assert abs(survived / trials - predicted) <= 4 * sigma
