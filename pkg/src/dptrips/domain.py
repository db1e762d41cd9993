"""Domain schemas, datasets as canonical multisets, and exact histograms.

A point is a plain tuple of string attribute values conforming to a
DomainSchema.  Datasets store rows as a point -> multiplicity map and always
iterate in lexicographic point order, never insertion order, so nothing
downstream (noise consumption included) can depend on how rows arrived.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "ATTRIBUTE_KINDS",
    "Attribute",
    "DomainSchema",
    "Dataset",
    "Histogram",
    "DensityProfile",
    "SchemaError",
    "point_count",
    "exact_histogram",
    "density_profile",
    "canonicalize",
]

Point = tuple[str, ...]

ATTRIBUTE_KINDS = ("categorical", "time-window", "location-code")


class SchemaError(ValueError):
    """A point or value does not conform to its schema."""


@dataclass(frozen=True)
class Attribute:
    """One named column: a kind plus an optional declared finite value set.

    With ``values`` set, membership is the validator; otherwise any non-empty
    string is accepted.
    """

    name: str
    kind: str
    values: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("attribute name must be non-empty")
        if self.kind not in ATTRIBUTE_KINDS:
            raise SchemaError(f"unknown attribute kind {self.kind!r}")

    def validate(self, value: str) -> None:
        if not isinstance(value, str) or not value:
            raise SchemaError(f"attribute {self.name!r}: value must be a non-empty string, got {value!r}")
        if self.values is not None and value not in self.values:
            raise SchemaError(f"attribute {self.name!r}: {value!r} not in declared value set")


@dataclass(frozen=True)
class DomainSchema:
    """An ordered, fixed list of attributes defining the data universe."""

    attributes: tuple[Attribute, ...]

    def __post_init__(self) -> None:
        if not self.attributes:
            raise SchemaError("schema needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def arity(self) -> int:
        return len(self.attributes)

    def validate_point(self, point: Point) -> None:
        if not isinstance(point, tuple) or len(point) != self.arity:
            raise SchemaError(f"point {point!r} does not match schema arity {self.arity}")
        for attr, value in zip(self.attributes, point):
            attr.validate(value)

    def project(self, columns: Iterable[str]) -> "DomainSchema":
        """Sub-schema over the named columns, kept in schema order."""
        wanted = set(columns)
        unknown = wanted - set(self.names)
        if unknown:
            raise SchemaError(f"unknown columns {sorted(unknown)}")
        return DomainSchema(tuple(a for a in self.attributes if a.name in wanted))

    def column_indices(self, columns: Iterable[str]) -> tuple[int, ...]:
        wanted = set(columns)
        return tuple(i for i, a in enumerate(self.attributes) if a.name in wanted)


class Dataset:
    """A multiset of points under a fixed schema.

    Construction validates each distinct point once.  Iteration yields the
    rows (with multiplicity) in lexicographic order.
    """

    __slots__ = ("schema", "_counts", "_n", "_points", "_vector")

    def __init__(self, schema: DomainSchema, rows: Iterable[Point] = ()):
        counts = Counter(rows)
        for point in counts:
            schema.validate_point(point)
        self.schema = schema
        self._counts = dict(counts)
        self._n = sum(counts.values())
        self._points: tuple[Point, ...] | None = None
        self._vector: np.ndarray | None = None

    @classmethod
    def from_counts(cls, schema: DomainSchema, counts: Mapping[Point, int]) -> "Dataset":
        ds = cls(schema)
        for point, c in counts.items():
            if c < 0:
                raise ValueError(f"negative multiplicity {c} for {point!r}")
            schema.validate_point(point)
        ds._counts = {p: int(c) for p, c in counts.items() if c > 0}
        ds._n = sum(ds._counts.values())
        return ds

    @property
    def n(self) -> int:
        return self._n

    @property
    def counts(self) -> Mapping[Point, int]:
        return self._counts

    def points(self) -> tuple[Point, ...]:
        """Distinct points, lexicographically sorted (cached)."""
        if self._points is None:
            self._points = tuple(sorted(self._counts))
        return self._points

    def count_vector(self) -> np.ndarray:
        """Counts aligned with points(), cached for repeated releases."""
        if self._vector is None:
            self._vector = np.array([self._counts[p] for p in self.points()], dtype=np.float64)
        return self._vector

    def rows(self) -> Iterator[Point]:
        for point in self.points():
            for _ in range(self._counts[point]):
                yield point

    def __iter__(self) -> Iterator[Point]:
        return self.rows()

    def __len__(self) -> int:
        return self._n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and self._counts == other._counts

    def __repr__(self) -> str:
        return f"Dataset(n={self._n}, distinct={len(self._counts)}, columns={self.schema.names})"


class Histogram:
    """Sparse point -> count map under a schema; zero counts are absent.

    Entries iterate in lexicographic point order.
    """

    __slots__ = ("schema", "_entries")

    def __init__(self, schema: DomainSchema, entries: Mapping[Point, int]):
        for point, c in entries.items():
            schema.validate_point(point)
            if not isinstance(c, (int, np.integer)) or c <= 0:
                raise ValueError(f"count for {point!r} must be a positive integer, got {c!r}")
        self.schema = schema
        self._entries = {p: int(entries[p]) for p in sorted(entries)}

    @classmethod
    def _trusted(cls, schema: DomainSchema, sorted_entries: dict[Point, int]) -> "Histogram":
        """Internal constructor for entries already validated and point-sorted."""
        h = cls.__new__(cls)
        h.schema = schema
        h._entries = sorted_entries
        return h

    @property
    def entries(self) -> Mapping[Point, int]:
        return self._entries

    def get(self, point: Point) -> int:
        return self._entries.get(point, 0)

    def items(self):
        return self._entries.items()

    def total(self) -> int:
        return sum(self._entries.values())

    def to_rows(self) -> Iterator[Point]:
        """Row-expanded form: each point repeated count times, in order."""
        for point, c in self._entries.items():
            for _ in range(c):
                yield point

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.schema == other.schema and self._entries == other._entries

    def __repr__(self) -> str:
        return f"Histogram(points={len(self._entries)}, total={self.total()})"


@dataclass(frozen=True)
class DensityProfile:
    """Fraction gamma of rows sitting at points with count >= k."""

    k: int
    gamma: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


def point_count(dataset: Dataset, point: Point) -> int:
    """Multiplicity of ``point`` in the dataset (the point function q_point)."""
    dataset.schema.validate_point(point)
    return dataset.counts.get(point, 0)


def exact_histogram(dataset: Dataset) -> Histogram:
    """The true histogram: every distinct point with its exact count."""
    return Histogram(dataset.schema, dataset.counts)


def density_profile(dataset: Dataset, k: int) -> DensityProfile:
    """Share of rows whose point occurs at least k times; 0 for empty data.

    A low gamma at k near the suppression threshold predicts heavy
    suppression in a release.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if dataset.n == 0:
        return DensityProfile(k, 0.0)
    heavy = sum(c for c in dataset.counts.values() if c >= k)
    return DensityProfile(k, heavy / dataset.n)


def canonicalize(dataset: Dataset) -> Dataset:
    """Return the dataset in canonical (lexicographic) row order.

    Datasets are stored canonically, so this is the identity; it exists as
    the explicit contract point that row order can never reach the release
    mechanism.  Idempotent and multiset-preserving by construction.
    """
    return dataset
