"""Empirical verification harness for the release mechanism.

Monte-Carlo (epsilon, delta)-indistinguishability testing on enumerable
micro-domains, bad-event frequency checks against the closed-form Laplace
tail, and utility-bound measurement.  The harness treats the mechanism as a
black box with the signature ``mechanism(dataset, budget, rng) -> Histogram``,
so it can audit any drop-in replacement, including the deliberately broken
negative control shipped here to demonstrate that the audit has power.

Statistical honesty: the checks use desk-scale deltas (0.01 .. 0.5).
Verifying a production delta near 2**-23 empirically would need far more than
10**7 trials per event; production deltas are validated analytically through
the threshold formula and the budget arithmetic instead.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import Attribute, Dataset, DomainSchema, Histogram
from .noise import NoiseSource, PrivacyBudget, laplace_tail, sample_laplace
from .stability import stable_histogram, suppression_threshold

__all__ = [
    "AuditConfig",
    "NeighborPair",
    "IndistinguishabilityReport",
    "BadEventReport",
    "UtilityReport",
    "estimate_indistinguishability",
    "bad_event_frequency",
    "measure_utility",
    "release_without_suppression",
    "MICRO_PAIRS",
    "run_micro_suite",
    "run_audit_suite",
]

Mechanism = Callable[[Dataset, PrivacyBudget, NoiseSource], Histogram]

MIN_TRIALS = 10_000
MAX_AUDIT_DOMAIN = 64

EVENT_FAMILIES = ("per-point-presence", "released-count-threshold-events")


@dataclass(frozen=True)
class AuditConfig:
    """Trial count, confidence parameter, event family, and slack width.

    ``tolerance`` is the Monte-Carlo slack in binomial standard deviations,
    applied to each estimated probability and propagated conservatively
    through the e^epsilon inequality.
    """

    trials: int = 100_000
    beta: float = 0.01
    event_family: str = "released-count-threshold-events"
    tolerance: float = 3.0

    def __post_init__(self) -> None:
        if self.trials < MIN_TRIALS:
            raise ValueError(f"no verdict below {MIN_TRIALS} trials, got {self.trials}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.event_family not in EVENT_FAMILIES:
            raise ValueError(f"event_family must be one of {EVENT_FAMILIES}")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be > 0")


class NeighborPair:
    """Two equal-size datasets differing in exactly one row."""

    def __init__(self, d: Dataset, d_prime: Dataset):
        if d.schema != d_prime.schema:
            raise ValueError("neighbouring datasets must share a schema")
        if d.n != d_prime.n:
            raise ValueError(f"neighbouring datasets must have equal size, got {d.n} and {d_prime.n}")
        extra = Counter(d.counts) - Counter(d_prime.counts)
        missing = Counter(d_prime.counts) - Counter(d.counts)
        if sum(extra.values()) != 1 or sum(missing.values()) != 1:
            raise ValueError("datasets must differ in exactly one row")
        self.d = d
        self.d_prime = d_prime

    def domain_points(self) -> tuple:
        return tuple(sorted(set(self.d.counts) | set(self.d_prime.counts)))


@dataclass
class IndistinguishabilityReport:
    """Outcome of one empirical indistinguishability check."""

    passed: bool
    trials: int
    epsilon: float
    delta: float
    worst_event: str
    worst_margin: float
    events: list = field(default_factory=list)

    def __str__(self) -> str:
        tag = "pass" if self.passed else "FAIL"
        return (
            f"{tag}: eps={self.epsilon:g} delta={self.delta:g} trials={self.trials} "
            f"worst={self.worst_event} margin={self.worst_margin:+.5f}"
        )


def _event_probes(points, threshold: float, family: str) -> list[tuple[str, tuple, int]]:
    if family == "per-point-presence":
        cutoffs = (1,)
    else:
        t = math.ceil(threshold)
        cutoffs = tuple(sorted({1, t - 1, t, t + 2}))
    return [
        (f"count{point} >= {c}", point, c)
        for point in points
        for c in cutoffs
    ]


def _event_rates(
    mechanism: Mechanism,
    dataset: Dataset,
    budget: PrivacyBudget,
    probes: Sequence[tuple[str, tuple, int]],
    trials: int,
    rng: NoiseSource,
) -> np.ndarray:
    by_point: dict[tuple, list[tuple[int, int]]] = {}
    for i, (_, point, cutoff) in enumerate(probes):
        by_point.setdefault(point, []).append((cutoff, i))
    hits = np.zeros(len(probes), dtype=np.int64)
    for _ in range(trials):
        released = mechanism(dataset, budget, rng)
        for point, cuts in by_point.items():
            c = released.get(point)
            for cutoff, i in cuts:
                if c >= cutoff:
                    hits[i] += 1
    return hits / float(trials)


def estimate_indistinguishability(
    pair: NeighborPair,
    budget: PrivacyBudget,
    config: AuditConfig,
    rng: NoiseSource,
    mechanism: Mechanism = stable_histogram,
) -> IndistinguishabilityReport:
    """Check P(M(d) in S) <= e^eps * P(M(d') in S) + delta + slack empirically.

    Runs the mechanism ``config.trials`` times on each side and tests the
    inequality, both directions, for every event in the configured family.
    The slack is ``tolerance`` binomial standard deviations per estimate.
    """
    points = pair.domain_points()
    if len(points) > MAX_AUDIT_DOMAIN:
        raise ValueError(
            f"domain has {len(points)} points; enumerate at most {MAX_AUDIT_DOMAIN} "
            "(shrink the micro-domain)"
        )
    threshold = suppression_threshold(budget)
    probes = _event_probes(points, threshold, config.event_family)

    p_d = _event_rates(mechanism, pair.d, budget, probes, config.trials, rng.substream("side=d"))
    p_dp = _event_rates(
        mechanism, pair.d_prime, budget, probes, config.trials, rng.substream("side=d_prime")
    )

    boost = math.exp(budget.epsilon)
    se_d = np.sqrt(p_d * (1.0 - p_d) / config.trials)
    se_dp = np.sqrt(p_dp * (1.0 - p_dp) / config.trials)

    worst_event, worst_margin = "none", -math.inf
    events = []
    for i, (label, _, _) in enumerate(probes):
        fwd = p_d[i] - (boost * p_dp[i] + budget.delta + config.tolerance * (se_d[i] + boost * se_dp[i]))
        rev = p_dp[i] - (boost * p_d[i] + budget.delta + config.tolerance * (se_dp[i] + boost * se_d[i]))
        margin = max(fwd, rev)
        events.append((label, float(p_d[i]), float(p_dp[i]), float(margin)))
        if margin > worst_margin:
            worst_event, worst_margin = label, margin

    return IndistinguishabilityReport(
        passed=worst_margin <= 0.0,
        trials=config.trials,
        epsilon=budget.epsilon,
        delta=budget.delta,
        worst_event=worst_event,
        worst_margin=float(worst_margin),
        events=events,
    )


_PROBE_SCHEMA = DomainSchema((Attribute("value", "categorical"),))


@dataclass
class BadEventReport:
    """Survival frequency of a count-1 point versus bound and closed form."""

    rate: float
    bound: float           # delta / 2, the proof's bound
    analytic: float        # exact tail: laplace_tail(2/eps, threshold - 1) = delta / 4
    sigma: float
    trials: int
    within_bound: bool
    matches_analytic: bool

    @property
    def passed(self) -> bool:
        return self.within_bound and self.matches_analytic

    def __str__(self) -> str:
        tag = "pass" if self.passed else "FAIL"
        return (
            f"{tag}: rate={self.rate:.5f} bound={self.bound:.5f} "
            f"analytic={self.analytic:.5f} sigma={self.sigma:.5f} trials={self.trials}"
        )


def bad_event_frequency(
    budget: PrivacyBudget,
    config: AuditConfig,
    rng: NoiseSource,
    mechanism: Mechanism = stable_histogram,
) -> BadEventReport:
    """How often a point occurring once survives the release.

    The guarantee requires the rate to stay below delta/2; the exact value is
    the Laplace tail at threshold-minus-one, i.e. delta/4.  Both are checked,
    the bound loosely and the closed form within ``tolerance`` binomial
    standard deviations.
    """
    dataset = Dataset(_PROBE_SCHEMA, [("lonely",)])
    survived = 0
    for _ in range(config.trials):
        if len(mechanism(dataset, budget, rng)):
            survived += 1
    rate = survived / config.trials

    threshold = suppression_threshold(budget)
    analytic = laplace_tail(2.0 / budget.epsilon, threshold - 1.0)
    sigma = math.sqrt(analytic * (1.0 - analytic) / config.trials)
    return BadEventReport(
        rate=rate,
        bound=budget.delta / 2.0,
        analytic=analytic,
        sigma=sigma,
        trials=config.trials,
        within_bound=rate <= budget.delta / 2.0 + config.tolerance * sigma,
        matches_analytic=abs(rate - analytic) <= config.tolerance * sigma,
    )


@dataclass
class UtilityReport:
    """Distribution of the worst per-point error across trials."""

    trials: int
    beta: float
    distinct_points: int
    quantile_error: float  # (1 - beta)-quantile of the per-trial max error
    union_bound: float     # (2/eps) * ln(2m/beta) + 0.5
    scale_bound: float     # threshold + (2/eps) * ln(m/beta)
    max_error: float

    @property
    def within_union_bound(self) -> bool:
        return self.quantile_error <= self.union_bound

    def __str__(self) -> str:
        tag = "pass" if self.within_union_bound else "FAIL"
        return (
            f"{tag}: q{100 * (1 - self.beta):g}(max error)={self.quantile_error:.3f} "
            f"union_bound={self.union_bound:.3f} trials={self.trials} m={self.distinct_points}"
        )


def measure_utility(
    dataset: Dataset,
    budget: PrivacyBudget,
    config: AuditConfig,
    rng: NoiseSource,
    mechanism: Mechanism = stable_histogram,
) -> UtilityReport:
    """Record max_x |released(x) - q_x| per trial (0 counts for suppressed points).

    On a dataset whose counts all clear the threshold comfortably the
    (1-beta)-quantile should sit below the union bound over m Laplace tails;
    on sparse data the error is dominated by suppression and approaches the
    threshold scale instead.
    """
    points = dataset.points()
    counts = {p: c for p, c in dataset.counts.items()}
    errors = np.zeros(config.trials)
    for t in range(config.trials):
        released = mechanism(dataset, budget, rng)
        err = 0
        for p in points:
            e = abs(released.get(p) - counts[p])
            if e > err:
                err = e
        errors[t] = err

    m = len(points)
    if m:
        union_bound = (2.0 / budget.epsilon) * math.log(2.0 * m / config.beta) + 0.5
        scale_bound = suppression_threshold(budget) + (2.0 / budget.epsilon) * math.log(m / config.beta)
    else:
        union_bound = scale_bound = 0.0
    quantile = float(np.quantile(errors, 1.0 - config.beta, method="higher")) if m else 0.0
    return UtilityReport(
        trials=config.trials,
        beta=config.beta,
        distinct_points=m,
        quantile_error=quantile,
        union_bound=union_bound,
        scale_bound=scale_bound,
        max_error=float(errors.max()) if m else 0.0,
    )


def release_without_suppression(
    dataset: Dataset, budget: PrivacyBudget, rng: NoiseSource
) -> Histogram:
    """Negative control: the histogram mechanism with its threshold removed.

    NOT differentially private.  Exists so the audit can demonstrate power:
    a harness that cannot fail this mechanism proves nothing by passing the
    real one.
    """
    if not (budget.epsilon > 0.0):
        raise ValueError(f"epsilon must be > 0, got {budget.epsilon}")
    points = dataset.points()
    if not points:
        return Histogram(dataset.schema, {})
    noisy = dataset.count_vector() + sample_laplace(2.0 / budget.epsilon, rng, size=len(points))
    rounded = np.sign(noisy) * np.floor(np.abs(noisy) + 0.5)
    keep = rounded >= 1.0
    entries = {points[i]: int(rounded[i]) for i in np.flatnonzero(keep)}
    return Histogram(dataset.schema, entries)


def _micro_pair(rows_d: str, rows_dp: str) -> NeighborPair:
    return NeighborPair(
        Dataset(_PROBE_SCHEMA, [(ch,) for ch in rows_d]),
        Dataset(_PROBE_SCHEMA, [(ch,) for ch in rows_dp]),
    )


#: Fixed neighbour pairs over micro-domains (2-4 points, n <= 6).
MICRO_PAIRS: tuple[tuple[str, str, str], ...] = (
    ("3a1b-vs-2a2b", "aaab", "aabb"),
    ("singleton", "a", "b"),
    ("n6-dom4", "aabbcd", "aabbcc"),
    ("n6-dom2", "aaaaab", "aaaaaa"),
)


def run_micro_suite(
    config: AuditConfig,
    rng: NoiseSource,
    epsilons: Sequence[float] = (0.5, 1.0, 2.0),
    deltas: Sequence[float] = (0.05, 0.1, 0.5),
    mechanism: Mechanism = stable_histogram,
) -> list[tuple[str, IndistinguishabilityReport]]:
    """Indistinguishability checks for every micro pair over the (eps, delta) grid."""
    results = []
    for name, rows_d, rows_dp in MICRO_PAIRS:
        pair = _micro_pair(rows_d, rows_dp)
        for eps in epsilons:
            for delta in deltas:
                budget = PrivacyBudget(eps, delta)
                sub = rng.substream(f"micro/{name}/eps={eps}/delta={delta}")
                report = estimate_indistinguishability(pair, budget, config, sub, mechanism)
                results.append((name, report))
    return results


def _utility_fixture(budget: PrivacyBudget, m: int = 12) -> Dataset:
    """m points with counts spread over [3, 6] times the threshold."""
    t = suppression_threshold(budget)
    counts = {
        (f"p{i:02d}",): int(math.ceil(t * (3.0 + 3.0 * i / max(1, m - 1))))
        for i in range(m)
    }
    return Dataset.from_counts(_PROBE_SCHEMA, counts)


def run_audit_suite(
    config: AuditConfig,
    rng: NoiseSource,
    epsilons: Sequence[float] = (0.5, 1.0, 2.0),
    deltas: Sequence[float] = (0.05, 0.1, 0.5),
) -> tuple[list[str], bool]:
    """The full harness: soundness, power, bad-event, and utility checks.

    Returns report lines and an overall verdict.  The power check passes
    exactly when the broken mechanism FAILS the audit.
    """
    lines: list[str] = []
    ok = True

    lines.append(f"indistinguishability micro-suite ({config.trials} trials per side)")
    for name, report in run_micro_suite(config, rng, epsilons, deltas):
        ok &= report.passed
        lines.append(f"  [{name}] {report}")

    lines.append("power: broken mechanism (suppression removed) must fail")
    power = estimate_indistinguishability(
        _micro_pair("a", "b"),
        PrivacyBudget(1.0, 0.01),
        config,
        rng.substream("power"),
        mechanism=release_without_suppression,
    )
    detected = not power.passed
    ok &= detected
    lines.append(f"  {'pass (audit rejected it)' if detected else 'FAIL (audit missed it)'}: {power}")

    lines.append("bad-event frequency of a count-1 point")
    for delta in deltas:
        report = bad_event_frequency(
            PrivacyBudget(1.0, delta), config, rng.substream(f"bad-event/delta={delta}")
        )
        ok &= report.passed
        lines.append(f"  [delta={delta:g}] {report}")

    lines.append("utility on a dense fixture (all counts >= 3x threshold)")
    budget = PrivacyBudget(1.0, 0.05)
    utility = measure_utility(
        _utility_fixture(budget), budget, config, rng.substream("utility")
    )
    ok &= utility.within_union_bound
    lines.append(f"  {utility}")

    lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
    return lines, ok
