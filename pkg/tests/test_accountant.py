import json
import math
import random

import pytest

from dptrips.accountant import (
    BudgetExceededError,
    BudgetLedger,
    Charge,
    ScopeConflictError,
)
from dptrips.noise import PrivacyBudget

DELTA_J = 1.0 / 8_000_000
SIX_BUDGETS = [PrivacyBudget(e, DELTA_J) for e in (1, 1, 1, 1, 2, 2)]


def charge_six(ledger, partition):
    for j, budget in enumerate(SIX_BUDGETS, start=1):
        ledger.charge(f"{partition}/marginal={j}", partition, budget)


class TestCharging:
    def test_six_charges_fill_one_partition_exactly(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 7.5e-7))
        charge_six(ledger, "p0")
        eps, delta = ledger.partition_totals()["p0"]
        assert eps == 8.0
        assert delta == pytest.approx(7.5e-7, rel=1e-9)

    def test_parallel_partitions_share_the_guarantee(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 7.5e-7))
        for i in range(56):
            charge_six(ledger, f"p{i:02d}")
        g = ledger.global_guarantee()
        assert g.epsilon == 8.0
        assert g.delta == pytest.approx(6 * DELTA_J, rel=1e-9)
        assert len(ledger.charges) == 56 * 6

    def test_exhausted_partition_refuses_more(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 7.5e-7))
        charge_six(ledger, "p0")
        before = ledger.charges
        with pytest.raises(BudgetExceededError) as exc:
            ledger.charge("p0/extra", "p0", PrivacyBudget(0.1, 0.0))
        assert "8.1" in str(exc.value)
        assert ledger.charges == before  # refusal leaves the ledger unchanged

    def test_scope_cannot_move_between_partitions(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 0.5))
        ledger.charge("scope-x", "p0", PrivacyBudget(1.0))
        with pytest.raises(ScopeConflictError):
            ledger.charge("scope-x", "p1", PrivacyBudget(1.0))

    def test_batch_is_all_or_nothing(self):
        ledger = BudgetLedger(PrivacyBudget(2.0, 0.5))
        batch = [
            Charge("s1", "p0", PrivacyBudget(1.0)),
            Charge("s2", "p0", PrivacyBudget(1.0)),
            Charge("s3", "p0", PrivacyBudget(1.0)),  # pushes past 2.0
        ]
        with pytest.raises(BudgetExceededError):
            ledger.charge_all(batch)
        assert ledger.charges == ()


class TestGlobalGuarantee:
    def test_empty_ledger_is_zero(self):
        assert BudgetLedger(PrivacyBudget(1.0)).global_guarantee() == PrivacyBudget(0.0, 0.0)

    def test_single_partition_paper_split(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 7.5e-7))
        charge_six(ledger, "p0")
        g = ledger.global_guarantee()
        assert g.epsilon == 8.0
        assert g.delta == pytest.approx(6 * DELTA_J, rel=1e-9)

    def test_max_over_partitions(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 0.5))
        ledger.charge("a", "p0", PrivacyBudget(3.0, 0.1))
        ledger.charge("b", "p1", PrivacyBudget(5.0, 0.2))
        g = ledger.global_guarantee()
        assert g.epsilon == 5.0
        assert g.delta == pytest.approx(0.2)

    def test_monotone_in_charges(self):
        rnd = random.Random(11)
        ledger = BudgetLedger(PrivacyBudget(100.0, 0.9))
        previous = ledger.global_guarantee()
        for i in range(200):
            ledger.charge(f"s{i}", f"p{rnd.randrange(5)}", PrivacyBudget(rnd.uniform(0, 0.3), rnd.uniform(0, 0.001)))
            current = ledger.global_guarantee()
            assert current.epsilon >= previous.epsilon
            assert current.delta >= previous.delta
            previous = current

    def test_batch_outcome_is_order_independent(self):
        rnd = random.Random(12)
        batch = [
            Charge(f"s{i}", f"p{i % 3}", PrivacyBudget(rnd.choice([0.25, 0.5, 1.0]), 0.001))
            for i in range(12)
        ]
        guarantees = []
        for trial in range(10):
            shuffled = batch[:]
            rnd.shuffle(shuffled)
            ledger = BudgetLedger(PrivacyBudget(8.0, 0.5))
            ledger.charge_all(shuffled)
            g = ledger.global_guarantee()
            guarantees.append((g.epsilon, g.delta))
        for eps, delta in guarantees[1:]:
            assert eps == pytest.approx(guarantees[0][0], rel=1e-12)
            assert delta == pytest.approx(guarantees[0][1], rel=1e-12)

    def test_default_delta_is_below_two_to_minus_twenty(self):
        assert 6 * DELTA_J == 7.5e-7
        assert 6 * DELTA_J < 2.0**-20
        assert math.fsum([DELTA_J] * 6) < 2.0**-20


class TestPersistence:
    def test_reload_restores_totals(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        ledger = BudgetLedger(PrivacyBudget(8.0, 7.5e-7), path)
        charge_six(ledger, "p0")
        reloaded = BudgetLedger(PrivacyBudget(8.0, 7.5e-7), path)
        assert reloaded.partition_totals() == ledger.partition_totals()
        assert len(reloaded.charges) == 6

    def test_reloaded_ledger_keeps_refusing(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        charge_six(BudgetLedger(PrivacyBudget(8.0, 7.5e-7), path), "p0")
        reloaded = BudgetLedger(PrivacyBudget(8.0, 7.5e-7), path)
        with pytest.raises(BudgetExceededError):
            reloaded.charge("late", "p0", PrivacyBudget(1.0, DELTA_J))

    def test_records_are_append_only_json_lines(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        ledger = BudgetLedger(PrivacyBudget(8.0, 7.5e-7), path)
        ledger.charge("s1", "p0", PrivacyBudget(1.0, DELTA_J), digest="abc123")
        ledger.charge("s2", "p0", PrivacyBudget(2.0, DELTA_J))
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first["scope"] == "s1"
        assert first["partition"] == "p0"
        assert first["digest"] == "abc123"
        assert "timestamp" in first and first["epsilon"] == 1.0

    def test_refused_charge_does_not_touch_the_file(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        ledger = BudgetLedger(PrivacyBudget(1.0, 0.5), path)
        ledger.charge("s1", "p0", PrivacyBudget(1.0))
        before = path.read_bytes()
        with pytest.raises(BudgetExceededError):
            ledger.charge("s2", "p0", PrivacyBudget(0.5))
        assert path.read_bytes() == before


class TestHeadroom:
    def test_headroom_reports_remaining_capacity(self):
        ledger = BudgetLedger(PrivacyBudget(8.0, 0.5))
        ledger.charge("s", "p0", PrivacyBudget(3.0, 0.1))
        eps_left, delta_left = ledger.headroom("p0")
        assert eps_left == 5.0
        assert delta_left == pytest.approx(0.4)
        assert ledger.headroom("unseen") == (8.0, 0.5)
