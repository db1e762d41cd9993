"""End-to-end release pipeline for tap-on/tap-off trip records.

Steps, in order: strip identifiers, bin times into fixed windows, collapse
bus stops into postcodes, partition by (mode, date), keep only the four tap
columns, project six marginals per partition and release each through the
stability-based histogram under its share of the budget.  The whole release
is charged to the ledger atomically: a refusal aborts before any output
exists, and partial output trees are never left behind.
"""

from __future__ import annotations

import hashlib
import json
import math
import shutil
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .accountant import BudgetLedger, Charge
from .domain import Attribute, Dataset, DomainSchema, Histogram, canonicalize
from .noise import NoiseSource, PrivacyBudget
from .stability import stable_histogram

__all__ = [
    "MODES",
    "TAP_COLUMNS",
    "MARGINALS",
    "DEFAULT_MARGINAL_BUDGETS",
    "TripRecord",
    "AnonymizedTrip",
    "PreparedTrip",
    "MarginalSpec",
    "ReleasePlan",
    "ReleaseResult",
    "UnknownLocationError",
    "strip_identifiers",
    "bin_time",
    "time_window_labels",
    "generalize_location",
    "preprocess",
    "partition",
    "partition_schema",
    "project_marginal",
    "run_release",
]

MODES = ("bus", "train", "ferry", "lightrail")

#: The four columns retained inside each partition, in schema order.
TAP_COLUMNS = ("on_time", "on_loc", "off_time", "off_loc")

MINUTES_PER_DAY = 1440


class UnknownLocationError(KeyError):
    """A bus stop is absent from the postcode lookup table."""


@dataclass(frozen=True, slots=True)
class TripRecord:
    """One raw trip row, still carrying its card identifier."""

    card_id: str
    trip_date: date
    mode: str
    tap_on_time: int
    tap_off_time: int
    tap_on_loc: str
    tap_off_loc: str

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for label, t in (("tap_on_time", self.tap_on_time), ("tap_off_time", self.tap_off_time)):
            if not (0 <= t <= MINUTES_PER_DAY - 1):
                raise ValueError(f"{label} must lie in [0, 1439], got {t}")
        if not self.tap_on_loc or not self.tap_off_loc:
            raise ValueError("tap locations must be non-empty")


class AnonymizedTrip(NamedTuple):
    """A trip with the card identifier structurally removed.

    Only this type flows past the first pipeline step, so a raw card id can
    never reach the release mechanism.
    """

    trip_date: date
    mode: str
    tap_on_time: int
    tap_off_time: int
    tap_on_loc: str
    tap_off_loc: str


class PreparedTrip(NamedTuple):
    """A binned, location-generalized trip ready for partitioning."""

    mode: str
    trip_date: date
    point: tuple[str, str, str, str]


def strip_identifiers(records: Iterable[TripRecord]) -> list[AnonymizedTrip]:
    """Drop the card identifier from every record, preserving order and length."""
    return [
        AnonymizedTrip(r.trip_date, r.mode, r.tap_on_time, r.tap_off_time, r.tap_on_loc, r.tap_off_loc)
        for r in records
    ]


def bin_time(minutes: int, bin_width: int) -> str:
    """Label of the window containing ``minutes``: its start time as HH:MM."""
    if bin_width <= 0 or MINUTES_PER_DAY % bin_width != 0:
        raise ValueError(f"bin width {bin_width} does not divide {MINUTES_PER_DAY}")
    if not (0 <= minutes <= MINUTES_PER_DAY - 1):
        raise ValueError(f"minutes must lie in [0, 1439], got {minutes}")
    start = (minutes // bin_width) * bin_width
    return f"{start // 60:02d}:{start % 60:02d}"


def time_window_labels(bin_width: int) -> tuple[str, ...]:
    """All window labels for a day, in order."""
    if bin_width <= 0 or MINUTES_PER_DAY % bin_width != 0:
        raise ValueError(f"bin width {bin_width} does not divide {MINUTES_PER_DAY}")
    return tuple(bin_time(m, bin_width) for m in range(0, MINUTES_PER_DAY, bin_width))


def generalize_location(location: str, mode: str, lookup: Mapping[str, str] | None) -> str:
    """Collapse bus stops into postcodes; other modes pass through unchanged."""
    if mode != "bus":
        return location
    if lookup is None or location not in lookup:
        raise UnknownLocationError(location)
    return lookup[location]


def partition_schema(bin_width: int) -> DomainSchema:
    """Schema of one partition: the four tap columns after preprocessing."""
    windows = frozenset(time_window_labels(bin_width))
    return DomainSchema(
        (
            Attribute("on_time", "time-window", windows),
            Attribute("on_loc", "location-code"),
            Attribute("off_time", "time-window", windows),
            Attribute("off_loc", "location-code"),
        )
    )


@dataclass(frozen=True)
class MarginalSpec:
    """One of the six released column combinations."""

    id: int
    columns: tuple[str, ...]

    def __post_init__(self) -> None:
        if not (1 <= self.id <= 6):
            raise ValueError(f"marginal id must be 1..6, got {self.id}")
        if self.columns != _MARGINAL_COLUMNS[self.id - 1]:
            raise ValueError(
                f"marginal {self.id} must cover {_MARGINAL_COLUMNS[self.id - 1]}, got {self.columns}"
            )


_MARGINAL_COLUMNS: tuple[tuple[str, ...], ...] = (
    ("on_time",),
    ("on_loc",),
    ("off_time",),
    ("off_loc",),
    ("on_time", "on_loc"),
    ("off_time", "off_loc"),
)

#: The six marginals: four one-way, two two-way (tap-on and tap-off pairs).
MARGINALS: tuple[MarginalSpec, ...] = tuple(
    MarginalSpec(j + 1, cols) for j, cols in enumerate(_MARGINAL_COLUMNS)
)

_DELTA_J = 1.0 / 8_000_000

#: One-way marginals get epsilon 1, two-way get 2; all share delta 1/8e6.
DEFAULT_MARGINAL_BUDGETS: tuple[PrivacyBudget, ...] = (
    PrivacyBudget(1.0, _DELTA_J),
    PrivacyBudget(1.0, _DELTA_J),
    PrivacyBudget(1.0, _DELTA_J),
    PrivacyBudget(1.0, _DELTA_J),
    PrivacyBudget(2.0, _DELTA_J),
    PrivacyBudget(2.0, _DELTA_J),
)

_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ReleasePlan:
    """Partitioning, marginal, and budget configuration for one release.

    The six marginal budgets must sum to the total (within float dust); the
    same six budgets apply to every (mode, date) partition.
    """

    dates: tuple[date, ...]
    modes: tuple[str, ...] = MODES
    time_bin_minutes: int = 15
    postcode_modes: tuple[str, ...] = ("bus",)
    marginal_budgets: tuple[PrivacyBudget, ...] = DEFAULT_MARGINAL_BUDGETS
    total_budget: PrivacyBudget | None = None

    def __post_init__(self) -> None:
        if not self.dates:
            raise ValueError("plan needs at least one date")
        if len(set(self.dates)) != len(self.dates):
            raise ValueError("plan dates must be unique")
        if not self.modes or len(set(self.modes)) != len(self.modes):
            raise ValueError("plan modes must be non-empty and unique")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ValueError(f"unknown modes {sorted(unknown)}")
        if self.time_bin_minutes <= 0 or MINUTES_PER_DAY % self.time_bin_minutes != 0:
            raise ValueError(f"bin width {self.time_bin_minutes} does not divide {MINUTES_PER_DAY}")
        if set(self.postcode_modes) - set(MODES):
            raise ValueError(f"unknown postcode modes {self.postcode_modes}")
        if len(self.marginal_budgets) != len(MARGINALS):
            raise ValueError(f"expected {len(MARGINALS)} marginal budgets, got {len(self.marginal_budgets)}")
        eps_sum = math.fsum(b.epsilon for b in self.marginal_budgets)
        delta_sum = math.fsum(b.delta for b in self.marginal_budgets)
        if self.total_budget is None:
            object.__setattr__(self, "total_budget", PrivacyBudget(eps_sum, delta_sum))
        else:
            if not math.isclose(eps_sum, self.total_budget.epsilon, rel_tol=_SUM_TOLERANCE, abs_tol=0.0):
                raise ValueError(
                    f"marginal epsilons sum to {eps_sum!r}, not the total {self.total_budget.epsilon!r}"
                )
            if not math.isclose(delta_sum, self.total_budget.delta, rel_tol=_SUM_TOLERANCE, abs_tol=1e-18):
                raise ValueError(
                    f"marginal deltas sum to {delta_sum!r}, not the total {self.total_budget.delta!r}"
                )

    def partition_keys(self) -> list[tuple[str, date]]:
        """The full (mode, date) grid in deterministic order."""
        return [(m, d) for m in sorted(self.modes) for d in sorted(self.dates)]


def preprocess(
    trips: Iterable[AnonymizedTrip],
    *,
    bin_width: int = 15,
    lookup: Mapping[str, str] | None = None,
    postcode_modes: Sequence[str] = ("bus",),
) -> tuple[list[PreparedTrip], Counter]:
    """Bin tap times and generalize locations; quarantine rows that cannot be.

    Rows whose bus stop is missing from the lookup are excluded and counted
    under ``unknown_bus_stop`` rather than silently dropped.
    """
    labels = time_window_labels(bin_width)
    by_minute = tuple(labels[m // bin_width] for m in range(MINUTES_PER_DAY))
    postcodes = frozenset(postcode_modes)
    prepared: list[PreparedTrip] = []
    quarantine: Counter = Counter()
    for t in trips:
        on_loc, off_loc = t.tap_on_loc, t.tap_off_loc
        if t.mode in postcodes:
            if lookup is None or on_loc not in lookup or off_loc not in lookup:
                quarantine["unknown_bus_stop"] += 1
                continue
            on_loc, off_loc = lookup[on_loc], lookup[off_loc]
        prepared.append(
            PreparedTrip(
                t.mode,
                t.trip_date,
                (by_minute[t.tap_on_time], on_loc, by_minute[t.tap_off_time], off_loc),
            )
        )
    return prepared, quarantine


def partition(
    prepared: Iterable[PreparedTrip],
    plan: ReleasePlan,
) -> tuple[dict[tuple[str, date], Dataset], Counter]:
    """Split prepared trips into the plan's disjoint (mode, date) datasets.

    Every grid cell is present, empty or not; rows outside the plan's modes
    or dates are quarantined under ``out_of_plan``.
    """
    groups: dict[tuple[str, date], list] = {key: [] for key in plan.partition_keys()}
    quarantine: Counter = Counter()
    for t in prepared:
        key = (t.mode, t.trip_date)
        bucket = groups.get(key)
        if bucket is None:
            quarantine["out_of_plan"] += 1
            continue
        bucket.append(t.point)
    schema = partition_schema(plan.time_bin_minutes)
    return {key: Dataset(schema, rows) for key, rows in groups.items()}, quarantine


def project_marginal(dataset: Dataset, spec: MarginalSpec) -> Dataset:
    """Project each row onto the marginal's columns; row count is preserved."""
    idx = dataset.schema.column_indices(spec.columns)
    projected: Counter = Counter()
    for point, c in dataset.counts.items():
        projected[tuple(point[i] for i in idx)] += c
    return Dataset.from_counts(dataset.schema.project(spec.columns), projected)


@dataclass
class ReleaseResult:
    """Released histograms plus the structured report, as written to disk."""

    histograms: dict[tuple[str, str, int], Histogram]
    report: dict
    output_dir: Path
    report_path: Path = field(init=False)

    def __post_init__(self) -> None:
        self.report_path = self.output_dir / "report.json"


def _output_name(mode: str, day: date, marginal_id: int) -> str:
    return f"mode={mode}/date={day.isoformat()}/marginal={marginal_id}.csv"


def _write_counts_csv(path: Path, histogram: Histogram) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(histogram.schema.names + ("count",))]
    lines.extend(",".join(point) + f",{count}" for point, count in histogram.items())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_expanded_csv(path: Path, histogram: Histogram) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(histogram.schema.names)]
    lines.extend(",".join(point) for point in histogram.to_rows())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _support_divergence(released: Mapping[int, Histogram]) -> dict:
    """Compare each two-way marginal's support with the matching one-way ones.

    Independent noise means the supports need not agree; the mismatch is
    reported, never repaired (any repair would have to be post-processing).
    """
    out: dict[str, dict[str, int]] = {}
    for pair_id, singles in ((5, (("on_time", 1), ("on_loc", 2))), (6, (("off_time", 3), ("off_loc", 4)))):
        pair = released[pair_id]
        for col, single_id in singles:
            k = pair.schema.names.index(col)
            pair_support = {p[k] for p in pair.entries}
            single_support = {p[0] for p in released[single_id].entries}
            out[col] = {
                "in_pair_only": len(pair_support - single_support),
                "in_single_only": len(single_support - pair_support),
            }
    return out


def run_release(
    records: Sequence[TripRecord],
    plan: ReleasePlan,
    ledger: BudgetLedger,
    rng: NoiseSource,
    output_dir: str | Path,
    *,
    lookup: Mapping[str, str] | None = None,
    emit_expanded: bool = False,
    extra_quarantine: Mapping[str, int] | None = None,
) -> ReleaseResult:
    """Run the full release and write one counts CSV per (partition, marginal).

    The ledger is capacity-checked before any work is written; on refusal the
    call raises with nothing on disk.  Outputs are assembled in a temporary
    directory, the ledger records (with output digests) are appended, and the
    directory is atomically renamed into place, so an aborted release leaves
    no partial tree.
    """
    output_dir = Path(output_dir)
    if output_dir.exists():
        raise FileExistsError(f"output directory {output_dir} already exists")

    anonymized = strip_identifiers(records)
    prepared, quarantine = preprocess(
        anonymized,
        bin_width=plan.time_bin_minutes,
        lookup=lookup,
        postcode_modes=plan.postcode_modes,
    )
    partitions, out_of_plan = partition(prepared, plan)
    quarantine.update(out_of_plan)
    if extra_quarantine:
        quarantine.update(extra_quarantine)

    charges = [
        Charge(
            scope=f"mode={m}/date={d.isoformat()}/marginal={spec.id}",
            partition=f"mode={m}/date={d.isoformat()}",
            budget=plan.marginal_budgets[spec.id - 1],
        )
        for (m, d) in plan.partition_keys()
        for spec in MARGINALS
    ]
    ledger.check(charges)

    histograms: dict[tuple[str, str, int], Histogram] = {}
    outputs: dict[str, dict] = {}
    divergence: dict[str, dict] = {}
    retained = sum(ds.n for ds in partitions.values())

    output_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{output_dir.name}.", dir=output_dir.parent))
    try:
        digests: dict[str, str] = {}
        for (m, d) in plan.partition_keys():
            dataset = partitions[(m, d)]
            per_partition: dict[int, Histogram] = {}
            for spec in MARGINALS:
                marginal = canonicalize(project_marginal(dataset, spec))
                sub = rng.substream(f"mode={m}/date={d.isoformat()}/marginal={spec.id}")
                hist = stable_histogram(marginal, plan.marginal_budgets[spec.id - 1], sub)
                per_partition[spec.id] = hist
                histograms[(m, d.isoformat(), spec.id)] = hist

                name = _output_name(m, d, spec.id)
                path = tmp / name
                _write_counts_csv(path, hist)
                digests[f"mode={m}/date={d.isoformat()}/marginal={spec.id}"] = _sha256(path)
                if emit_expanded:
                    _write_expanded_csv(path.with_suffix(".rows.csv"), hist)
                outputs[name] = {
                    "input_rows": marginal.n,
                    "input_points": len(marginal.counts),
                    "released_points": len(hist),
                    "suppressed_points": len(marginal.counts) - len(hist),
                    "released_rows": hist.total(),
                }
            divergence[f"mode={m}/date={d.isoformat()}"] = _support_divergence(per_partition)

        guarantee_after = _projected_guarantee(ledger, charges)
        report = {
            "input_rows": len(anonymized),
            "retained_rows": retained,
            "quarantine": dict(sorted(quarantine.items())),
            "partitions": len(partitions),
            "outputs_written": len(outputs),
            "guarantee": {"epsilon": guarantee_after.epsilon, "delta": guarantee_after.delta},
            "plan": {
                "modes": sorted(plan.modes),
                "dates": [d.isoformat() for d in sorted(plan.dates)],
                "time_bin_minutes": plan.time_bin_minutes,
                "marginal_budgets": [[b.epsilon, b.delta] for b in plan.marginal_budgets],
                "total_budget": [plan.total_budget.epsilon, plan.total_budget.delta],
            },
            "outputs": outputs,
            "support_divergence": divergence,
        }
        (tmp / "report.json").write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

        ledger.charge_all(
            [
                Charge(c.scope, c.partition, c.budget, digests.get(c.scope, ""))
                for c in charges
            ]
        )
        tmp.replace(output_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

    return ReleaseResult(histograms=histograms, report=report, output_dir=output_dir)


def _projected_guarantee(ledger: BudgetLedger, charges: Sequence[Charge]) -> PrivacyBudget:
    """Guarantee the ledger will report once ``charges`` are admitted."""
    sums = dict(ledger.partition_totals())
    for c in charges:
        e, d = sums.get(c.partition, (0.0, 0.0))
        sums[c.partition] = (e + c.budget.epsilon, d + c.budget.delta)
    return PrivacyBudget(
        max(e for e, _ in sums.values()),
        max(d for _, d in sums.values()),
    )
