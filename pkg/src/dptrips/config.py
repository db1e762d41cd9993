"""Release configuration files: a versioned JSON document.

Example::

    {
      "version": 1,
      "input": "trips.csv",
      "output_dir": "release",
      "lookup": "stops.csv",
      "ledger": "ledger.jsonl",
      "seed": 7,
      "emit_expanded": false,
      "plan": {
        "dates": ["2016-08-01", "..."],
        "modes": ["bus", "train", "ferry", "lightrail"],
        "time_bin_minutes": 15,
        "postcode_modes": ["bus"],
        "marginal_budgets": [{"epsilon": 1, "delta": 1.25e-7}, ...six...],
        "total_budget": {"epsilon": 8, "delta": 7.5e-7}
      }
    }

Relative paths resolve against the config file's directory.  ``seed`` and
``"secure": true`` are mutually exclusive; one of them must be present by the
time a release runs (the CLI flags can supply it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .noise import PrivacyBudget
from .pipeline import MARGINALS, MINUTES_PER_DAY, MODES, ReleasePlan

__all__ = ["CONFIG_VERSION", "ConfigError", "ReleaseConfig", "load_config", "config_diagnostics"]

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """A configuration document is unusable; carries all diagnostics found."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(diagnostics))


@dataclass
class ReleaseConfig:
    plan: ReleasePlan
    input: Path
    output_dir: Path
    ledger: Path
    lookup: Path | None = None
    seed: int | None = None
    secure: bool = False
    emit_expanded: bool = False


def _budget(raw, where: str, problems: list[str]) -> PrivacyBudget | None:
    if not isinstance(raw, dict) or "epsilon" not in raw or "delta" not in raw:
        problems.append(f"{where}: expected an object with epsilon and delta")
        return None
    try:
        return PrivacyBudget(float(raw["epsilon"]), float(raw["delta"]))
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def _parse(doc: dict, base: Path, problems: list[str]) -> ReleaseConfig | None:
    if doc.get("version") != CONFIG_VERSION:
        problems.append(f"version must be {CONFIG_VERSION}, got {doc.get('version')!r}")

    paths = {}
    for key, required in (("input", True), ("output_dir", True), ("ledger", True), ("lookup", False)):
        value = doc.get(key)
        if value is None:
            if required:
                problems.append(f"missing required path {key!r}")
            paths[key] = None
        elif not isinstance(value, str):
            problems.append(f"{key!r} must be a string path")
            paths[key] = None
        else:
            paths[key] = base / value

    seed = doc.get("seed")
    secure = bool(doc.get("secure", False))
    if seed is not None and not isinstance(seed, int):
        problems.append(f"seed must be an integer, got {seed!r}")
        seed = None
    if seed is not None and secure:
        problems.append("seed and secure are mutually exclusive")

    plan_doc = doc.get("plan")
    plan = None
    if not isinstance(plan_doc, dict):
        problems.append("missing plan object")
    else:
        dates = []
        for ds in plan_doc.get("dates", ()):
            try:
                dates.append(date.fromisoformat(ds))
            except (TypeError, ValueError):
                problems.append(f"bad date {ds!r}")
        if not dates:
            problems.append("plan.dates must list at least one ISO date")

        modes = tuple(plan_doc.get("modes", MODES))
        bin_width = plan_doc.get("time_bin_minutes", 15)
        if not isinstance(bin_width, int) or bin_width <= 0 or MINUTES_PER_DAY % bin_width != 0:
            problems.append(f"time_bin_minutes: {bin_width!r} does not divide {MINUTES_PER_DAY}")
            bin_width = 15

        raw_budgets = plan_doc.get("marginal_budgets")
        budgets = []
        if not isinstance(raw_budgets, list) or len(raw_budgets) != len(MARGINALS):
            problems.append(f"plan.marginal_budgets must list exactly {len(MARGINALS)} budgets")
        else:
            for j, raw in enumerate(raw_budgets, start=1):
                b = _budget(raw, f"marginal_budgets[{j}]", problems)
                if b is not None:
                    budgets.append(b)

        total = None
        if "total_budget" in plan_doc:
            total = _budget(plan_doc["total_budget"], "total_budget", problems)

        if not problems:
            try:
                plan = ReleasePlan(
                    dates=tuple(dates),
                    modes=modes,
                    time_bin_minutes=bin_width,
                    postcode_modes=tuple(plan_doc.get("postcode_modes", ("bus",))),
                    marginal_budgets=tuple(budgets),
                    total_budget=total,
                )
            except ValueError as exc:
                problems.append(f"plan: {exc}")

    if problems or plan is None:
        return None
    return ReleaseConfig(
        plan=plan,
        input=paths["input"],
        output_dir=paths["output_dir"],
        ledger=paths["ledger"],
        lookup=paths["lookup"],
        seed=seed,
        secure=secure,
        emit_expanded=bool(doc.get("emit_expanded", False)),
    )


def load_config(path: str | Path) -> ReleaseConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    path = Path(path)
    problems: list[str] = []
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["top-level document must be an object"])
    config = _parse(doc, path.parent, problems)
    if config is None:
        raise ConfigError(problems or ["invalid configuration"])
    return config


def config_diagnostics(path: str | Path) -> list[str]:
    """All problems with a config file; empty means valid."""
    try:
        load_config(path)
    except ConfigError as exc:
        return exc.diagnostics
    return []
