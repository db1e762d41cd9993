"""The stability-based histogram mechanism.

Perturbs the count of every point present in the data with Laplace(2/eps)
noise and suppresses noisy counts below 2*ln(2/delta)/eps + 1.  Runs in time
polynomial in the number of rows (it never enumerates the domain) and never
introduces points absent from the input.
"""

from __future__ import annotations

import math

import numpy as np

from .domain import Dataset, Histogram
from .noise import NoiseSource, PrivacyBudget, sample_laplace

__all__ = ["suppression_threshold", "stable_histogram"]


def suppression_threshold(budget: PrivacyBudget) -> float:
    """The survival cutoff 2*ln(2/delta)/epsilon + 1.

    Requires delta > 0: with delta = 0 the cutoff is infinite and the
    mechanism would suppress everything (pure DP is not supported).
    """
    if not (budget.epsilon > 0.0):
        raise ValueError(f"epsilon must be > 0, got {budget.epsilon}")
    if not (0.0 < budget.delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {budget.delta}")
    return 2.0 * math.log(2.0 / budget.delta) / budget.epsilon + 1.0


def stable_histogram(dataset: Dataset, budget: PrivacyBudget, rng: NoiseSource) -> Histogram:
    """Release an (epsilon, delta)-private histogram of the dataset.

    For each distinct point, in lexicographic order, one Laplace(2/epsilon)
    deviate is drawn from ``rng`` and added to the true count.  Noisy counts
    strictly below the suppression threshold are dropped; survivors are
    rounded half away from zero.  Released entries are therefore a subset of
    the input's distinct points, each with count >= 1.
    """
    threshold = suppression_threshold(budget)
    points = dataset.points()
    if not points:
        return Histogram(dataset.schema, {})
    scale = 2.0 / budget.epsilon
    if len(points) <= 16:
        # scalar path; chosen by distinct-point count alone, so a given
        # dataset+seed always takes the same path and stays reproducible
        counts = dataset.counts
        entries: dict = {}
        for p in points:
            noisy = counts[p] + sample_laplace(scale, rng)
            if noisy >= threshold:
                # survivors exceed 1, so int(x + 0.5) is round-half-away-from-zero
                entries[p] = int(noisy + 0.5)
        return Histogram._trusted(dataset.schema, entries)
    noisy = dataset.count_vector() + sample_laplace(scale, rng, size=len(points))
    keep = noisy >= threshold
    released = np.floor(noisy[keep] + 0.5).astype(np.int64)
    entries = {points[i]: int(c) for i, c in zip(np.flatnonzero(keep), released)}
    return Histogram._trusted(dataset.schema, entries)
