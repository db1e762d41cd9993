"""File formats: trip input CSV, postcode lookup CSV, counts and row CSVs.

Input trips:    header ``card_id,date,mode,tap_on_time,tap_on_loc,tap_off_time,tap_off_loc``
                with ISO dates and HH:MM times.
Postcode table: header ``stop_id,postcode``.
Counts output:  the marginal's columns plus a trailing ``count`` column.

Malformed rows are quarantined and counted, never silently dropped; trips
missing their tap-off are quarantined separately so operators can see them.
"""

from __future__ import annotations

import csv
from collections import Counter
from datetime import date
from pathlib import Path

from .pipeline import TripRecord

__all__ = [
    "TRIPS_HEADER",
    "LOOKUP_HEADER",
    "read_trips",
    "read_lookup",
    "expand_counts",
    "aggregate_rows",
]

TRIPS_HEADER = ("card_id", "date", "mode", "tap_on_time", "tap_on_loc", "tap_off_time", "tap_off_loc")
LOOKUP_HEADER = ("stop_id", "postcode")


def _parse_minutes(text: str) -> int:
    if len(text) != 5 or text[2] != ":":
        raise ValueError(f"expected HH:MM, got {text!r}")
    hours, minutes = int(text[:2]), int(text[3:])
    if not (0 <= hours <= 23 and 0 <= minutes <= 59):
        raise ValueError(f"time out of range: {text!r}")
    return hours * 60 + minutes


def read_trips(path: str | Path) -> tuple[list[TripRecord], Counter]:
    """Parse a trips CSV into records plus quarantine counts.

    Quarantine categories: ``incomplete_trip`` (empty tap-off fields) and
    ``malformed`` (wrong arity, bad date/time/mode, empty tap-on fields).
    """
    records: list[TripRecord] = []
    quarantine: Counter = Counter()
    date_cache: dict[str, date] = {}
    time_cache: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != TRIPS_HEADER:
            raise ValueError(f"bad trips header {header!r}, expected {','.join(TRIPS_HEADER)}")
        for row in reader:
            if len(row) != 7:
                quarantine["malformed"] += 1
                continue
            card_id, day_s, mode, on_t, on_loc, off_t, off_loc = row
            if not off_t or not off_loc:
                quarantine["incomplete_trip"] += 1
                continue
            try:
                day = date_cache.get(day_s)
                if day is None:
                    day = date_cache[day_s] = date.fromisoformat(day_s)
                on_m = time_cache.get(on_t)
                if on_m is None:
                    on_m = time_cache[on_t] = _parse_minutes(on_t)
                off_m = time_cache.get(off_t)
                if off_m is None:
                    off_m = time_cache[off_t] = _parse_minutes(off_t)
                records.append(TripRecord(card_id, day, mode, on_m, off_m, on_loc, off_loc))
            except ValueError:
                quarantine["malformed"] += 1
    return records, quarantine


def read_lookup(path: str | Path) -> dict[str, str]:
    """Parse the stop -> postcode table."""
    lookup: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != LOOKUP_HEADER:
            raise ValueError(f"bad lookup header {header!r}, expected {','.join(LOOKUP_HEADER)}")
        for row in reader:
            if len(row) != 2 or not row[0] or not row[1]:
                raise ValueError(f"bad lookup row {row!r}")
            lookup[row[0]] = row[1]
    return lookup


def expand_counts(in_path: str | Path, out_path: str | Path) -> int:
    """Rewrite a counts CSV in row form: each point repeated count times.

    Rows are emitted in lexicographic order.  Counts must be positive
    integers or the whole file is rejected.  Returns rows written.
    """
    with open(in_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "count" or len(header) < 2:
            raise ValueError(f"counts file must end with a 'count' column, got {header!r}")
        entries = []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"bad counts row {row!r}")
            point, count_s = tuple(row[:-1]), row[-1]
            try:
                count = int(count_s)
            except ValueError:
                raise ValueError(f"count {count_s!r} is not an integer") from None
            if count <= 0:
                raise ValueError(f"count for {point!r} must be positive, got {count}")
            entries.append((point, count))
    entries.sort()
    written = 0
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header[:-1])
        for point, count in entries:
            for _ in range(count):
                writer.writerow(point)
                written += 1
    return written


def aggregate_rows(in_path: str | Path, out_path: str | Path) -> int:
    """Inverse of expand_counts: collapse a row CSV back into sorted counts."""
    with open(in_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError("row file has no header")
        counts = Counter(tuple(row) for row in reader)
    for point in counts:
        if len(point) != len(header):
            raise ValueError(f"bad row {point!r}")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header) + ["count"])
        for point in sorted(counts):
            writer.writerow(list(point) + [counts[point]])
    return len(counts)
