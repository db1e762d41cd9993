"""Synthetic trip fixtures for tests, demos, and performance checks.

Nothing here is private or real; the generator just produces plausibly shaped
tap-on/tap-off traffic (rush-hour peaks, mode-specific location pools) so the
pipeline can be exercised at any scale without access to real data.
"""

from __future__ import annotations

import csv
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .pipeline import TripRecord

__all__ = [
    "default_dates",
    "synthetic_lookup",
    "synthetic_trips",
    "write_synthetic_inputs",
]

_MODE_PROBS = {"bus": 0.45, "train": 0.40, "ferry": 0.05, "lightrail": 0.10}


def default_dates(start: date = date(2016, 8, 1), weeks: int = 2) -> tuple[date, ...]:
    """Two separated weeks of dates, 14 days total by default."""
    days = []
    for w in range(weeks):
        base = start + timedelta(days=21 * w)
        days.extend(base + timedelta(days=i) for i in range(7))
    return tuple(days)


def synthetic_lookup(n_stops: int = 60, n_postcodes: int = 12) -> dict[str, str]:
    """Bus stop ids mapped onto a smaller pool of postcodes."""
    return {f"8{i:05d}": f"20{i % n_postcodes:02d}" for i in range(n_stops)}


def _locations(mode: str, n_stops: int) -> list[str]:
    if mode == "bus":
        return [f"8{i:05d}" for i in range(n_stops)]
    if mode == "train":
        return [f"ST{i:03d}" for i in range(25)]
    if mode == "ferry":
        return [f"WH{i:02d}" for i in range(8)]
    return [f"LR{i:02d}" for i in range(10)]


def _raw_columns(n_rows: int, dates, seed: int, n_stops: int):
    """Vectorized draws for every column; strings are built by the callers."""
    rng = np.random.default_rng(seed)
    modes = list(_MODE_PROBS)
    mode_idx = rng.choice(len(modes), size=n_rows, p=list(_MODE_PROBS.values()))
    date_idx = rng.integers(0, len(dates), size=n_rows)

    # Morning and evening peaks, then clip into the day.
    peak = rng.random(n_rows) < 0.55
    on = np.where(
        peak,
        rng.normal(8 * 60, 45, size=n_rows),
        rng.normal(17.5 * 60, 60, size=n_rows),
    )
    on = np.clip(on, 0, 1380).astype(np.int64)
    off = np.clip(on + rng.normal(26, 12, size=n_rows), 0, 1439).astype(np.int64)

    pools = {m: _locations(m, n_stops) for m in modes}
    loc_on = rng.random(n_rows)
    loc_off = rng.random(n_rows)
    return modes, mode_idx, date_idx, on, off, pools, loc_on, loc_off


def synthetic_trips(
    n_rows: int,
    dates=None,
    *,
    seed: int = 0,
    n_stops: int = 60,
) -> tuple[list[TripRecord], dict[str, str]]:
    """Generate records plus the matching bus-stop lookup table."""
    dates = tuple(dates) if dates is not None else default_dates()
    modes, mode_idx, date_idx, on, off, pools, loc_on, loc_off = _raw_columns(
        n_rows, dates, seed, n_stops
    )
    records = []
    for i in range(n_rows):
        mode = modes[mode_idx[i]]
        pool = pools[mode]
        records.append(
            TripRecord(
                card_id=f"C{i % 250_000:06d}",
                trip_date=dates[date_idx[i]],
                mode=mode,
                tap_on_time=int(on[i]),
                tap_off_time=int(off[i]),
                tap_on_loc=pool[int(loc_on[i] * len(pool))],
                tap_off_loc=pool[int(loc_off[i] * len(pool))],
            )
        )
    return records, synthetic_lookup(n_stops)


def write_synthetic_inputs(
    directory: str | Path,
    n_rows: int,
    dates=None,
    *,
    seed: int = 0,
    n_stops: int = 60,
) -> tuple[Path, Path]:
    """Write trips.csv and stops.csv straight to disk (fast path for large n)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dates = tuple(dates) if dates is not None else default_dates()
    modes, mode_idx, date_idx, on, off, pools, loc_on, loc_off = _raw_columns(
        n_rows, dates, seed, n_stops
    )
    date_strs = [d.isoformat() for d in dates]
    clock = [f"{m // 60:02d}:{m % 60:02d}" for m in range(1440)]

    trips_path = directory / "trips.csv"
    with open(trips_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("card_id,date,mode,tap_on_time,tap_on_loc,tap_off_time,tap_off_loc\n")
        write = fh.write
        for i in range(n_rows):
            mode = modes[mode_idx[i]]
            pool = pools[mode]
            write(
                f"C{i % 250_000:06d},{date_strs[date_idx[i]]},{mode},"
                f"{clock[on[i]]},{pool[int(loc_on[i] * len(pool))]},"
                f"{clock[off[i]]},{pool[int(loc_off[i] * len(pool))]}\n"
            )

    lookup_path = directory / "stops.csv"
    with open(lookup_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stop_id", "postcode"])
        for stop, postcode in synthetic_lookup(n_stops).items():
            writer.writerow([stop, postcode])
    return trips_path, lookup_path
