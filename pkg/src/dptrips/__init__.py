"""Differentially private release of tap-on/tap-off trip histograms.

The package releases synthetic count tables for tabular trip records via a
stability-based histogram mechanism: Laplace-perturbed counts of the points
actually present in the data, with low noisy counts suppressed.  A budget
ledger enforces the sequential/parallel composition accounting for the whole
release, and an empirical audit harness checks the (epsilon, delta) guarantee
and the utility bound at desk scale.
"""

from .noise import (
    NoiseSource,
    PrivacyBudget,
    RELEASE_SNAPPING,
    Snapping,
    laplace_tail,
    noisy_count,
    sample_laplace,
)
from .domain import (
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
from .stability import stable_histogram, suppression_threshold
from .accountant import (
    BudgetError,
    BudgetExceededError,
    BudgetLedger,
    Charge,
    ScopeConflictError,
)
from .pipeline import (
    MARGINALS,
    MODES,
    AnonymizedTrip,
    MarginalSpec,
    ReleasePlan,
    ReleaseResult,
    TripRecord,
    UnknownLocationError,
    bin_time,
    generalize_location,
    partition,
    project_marginal,
    run_release,
    strip_identifiers,
)
from .audit import (
    AuditConfig,
    NeighborPair,
    bad_event_frequency,
    estimate_indistinguishability,
    measure_utility,
    release_without_suppression,
    run_micro_suite,
)

__version__ = "0.1.0"
