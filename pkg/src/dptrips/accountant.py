"""Privacy-budget ledger enforcing sequential and parallel composition.

Charges against the same partition of the data compose sequentially (their
budgets add); charges against disjoint partitions compose in parallel (the
guarantee is the worst partition's sum).  The ledger refuses any charge that
would push a partition's sum past the configured total, and can persist to an
append-only JSON-lines log so separate invocations against the same release
cannot silently exceed budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .noise import PrivacyBudget

__all__ = [
    "BudgetError",
    "BudgetExceededError",
    "ScopeConflictError",
    "Charge",
    "BudgetLedger",
]

# Relative slop for budget-sum comparisons: binary floating point cannot
# always represent a delta split exactly (six * 1/8e6 vs 7.5e-7), and one ulp
# must not refuse a legal release.
BUDGET_TOLERANCE = 1e-9


class BudgetError(Exception):
    """Base class for ledger refusals."""


class BudgetExceededError(BudgetError):
    """A charge would push a partition past the configured total."""

    def __init__(self, partition: str, would_be: tuple[float, float], total: PrivacyBudget):
        self.partition = partition
        self.would_be = would_be
        self.total = total
        super().__init__(
            f"partition {partition!r} would reach (epsilon={would_be[0]:.6g}, "
            f"delta={would_be[1]:.6g}), exceeding the total "
            f"(epsilon={total.epsilon:.6g}, delta={total.delta:.6g})"
        )


class ScopeConflictError(BudgetError):
    """The same scope-key was charged under two different partitions."""


@dataclass(frozen=True)
class Charge:
    """One budget expenditure: a scope key inside a disjoint partition."""

    scope: str
    partition: str
    budget: PrivacyBudget
    digest: str = ""


def _fits(amount: float, limit: float) -> bool:
    return amount <= limit + BUDGET_TOLERANCE * max(1.0, abs(limit))


class BudgetLedger:
    """Append-only record of charges with an enforced total.

    Within a partition the epsilon and delta of accepted charges add; the
    global guarantee is the maximum per-partition sum.  A rejected charge
    leaves the ledger (and its log file) unchanged.

    With ``path`` set, every accepted charge is appended as one JSON line
    ``{"scope", "partition", "epsilon", "delta", "timestamp", "digest"}`` and
    prior records are loaded on construction, so the file is the durable
    source of truth across invocations.
    """

    def __init__(self, total: PrivacyBudget, path: str | Path | None = None):
        if total.epsilon <= 0.0:
            raise ValueError("ledger total must have epsilon > 0")
        self.total = total
        self.path = Path(path) if path is not None else None
        self._charges: list[Charge] = []
        self._scope_partition: dict[str, str] = {}
        self._sums: dict[str, tuple[float, float]] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            charge = Charge(
                scope=rec["scope"],
                partition=rec["partition"],
                budget=PrivacyBudget(rec["epsilon"], rec["delta"]),
                digest=rec.get("digest", ""),
            )
            self._admit(charge)

    def _admit(self, charge: Charge) -> None:
        """Record a charge in memory without capacity checks (history is fact)."""
        self._charges.append(charge)
        self._scope_partition[charge.scope] = charge.partition
        e, d = self._sums.get(charge.partition, (0.0, 0.0))
        self._sums[charge.partition] = (e + charge.budget.epsilon, d + charge.budget.delta)

    @property
    def charges(self) -> tuple[Charge, ...]:
        return tuple(self._charges)

    def partition_totals(self) -> dict[str, tuple[float, float]]:
        return dict(self._sums)

    def global_guarantee(self) -> PrivacyBudget:
        """(max per-partition epsilon sum, max per-partition delta sum); (0, 0) when empty."""
        if not self._sums:
            return PrivacyBudget(0.0, 0.0)
        return PrivacyBudget(
            max(e for e, _ in self._sums.values()),
            max(d for _, d in self._sums.values()),
        )

    def check(self, charges: Sequence[Charge]) -> None:
        """Raise if the batch would not be accepted; never mutates."""
        sums = dict(self._sums)
        scopes = dict(self._scope_partition)
        for charge in charges:
            known = scopes.get(charge.scope)
            if known is not None and known != charge.partition:
                raise ScopeConflictError(
                    f"scope {charge.scope!r} already belongs to partition {known!r}, "
                    f"cannot also charge it under {charge.partition!r}"
                )
            scopes[charge.scope] = charge.partition
            e, d = sums.get(charge.partition, (0.0, 0.0))
            e, d = e + charge.budget.epsilon, d + charge.budget.delta
            if not (_fits(e, self.total.epsilon) and _fits(d, self.total.delta)):
                raise BudgetExceededError(charge.partition, (e, d), self.total)
            sums[charge.partition] = (e, d)

    def charge(self, scope: str, partition: str, budget: PrivacyBudget, digest: str = "") -> None:
        """Append one charge, or raise leaving the ledger unchanged."""
        self.charge_all([Charge(scope, partition, budget, digest)])

    def charge_all(self, charges: Iterable[Charge]) -> None:
        """Append a batch all-or-nothing: any refusal admits none of them."""
        batch = list(charges)
        self.check(batch)
        for charge in batch:
            self._admit(charge)
            if self.path is not None:
                self._append_record(charge)

    def _append_record(self, charge: Charge) -> None:
        record = {
            "scope": charge.scope,
            "partition": charge.partition,
            "epsilon": charge.budget.epsilon,
            "delta": charge.budget.delta,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "digest": charge.digest,
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def headroom(self, partition: str) -> tuple[float, float]:
        """Remaining (epsilon, delta) capacity for a partition."""
        e, d = self._sums.get(partition, (0.0, 0.0))
        return (self.total.epsilon - e, self.total.delta - d)

    def __repr__(self) -> str:
        g = self.global_guarantee()
        return (
            f"BudgetLedger(total=(ε={self.total.epsilon:g}, δ={self.total.delta:g}), "
            f"charges={len(self._charges)}, guarantee=(ε={g.epsilon:g}, δ={g.delta:g}))"
        )
