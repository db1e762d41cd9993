"""Operator command line: validate, release, density, expand, audit.

Exit codes: 0 success, 2 configuration or input-format error, 3 budget
refusal, 4 I/O error, 5 audit failure.  Raw card identifiers never appear in
any output or log line.
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict
from pathlib import Path

from filelock import FileLock

from .accountant import BudgetError, BudgetLedger
from .audit import AuditConfig, run_audit_suite
from .config import ConfigError, config_diagnostics, load_config
from .csvio import expand_counts, read_lookup, read_trips
from .domain import density_profile
from .noise import NoiseSource
from .pipeline import MARGINALS, partition, preprocess, project_marginal, run_release, strip_identifiers

EXIT_OK = 0
EXIT_AUDIT_FAIL = 5
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_IO = 4

_SEEDED_BANNER = """\
############################################################
#  SEEDED NOISE - FOR TESTING ONLY.                        #
#  This run is reproducible and therefore NOT a private    #
#  release. Use --secure for anything that leaves the lab. #
############################################################"""


def cmd_validate(args) -> int:
    problems = config_diagnostics(args.config)
    if problems:
        for p in problems:
            print(f"error: {p}")
        return EXIT_CONFIG
    cfg = load_config(args.config)
    total = cfg.plan.total_budget
    print(f"valid; guarantee (epsilon={total.epsilon:g}, delta={total.delta:g})")
    return EXIT_OK


def cmd_release(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for p in exc.diagnostics:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_CONFIG

    seed = args.seed if args.seed is not None else cfg.seed
    secure = args.secure or cfg.secure
    if seed is not None and args.secure:
        print("error: --seed and --secure are mutually exclusive", file=sys.stderr)
        return EXIT_CONFIG
    if seed is None and not secure:
        print("error: choose --seed N (testing) or --secure (real release)", file=sys.stderr)
        return EXIT_CONFIG

    if secure:
        rng = NoiseSource.secure()
    else:
        print(_SEEDED_BANNER)
        from .noise import RELEASE_SNAPPING

        rng = NoiseSource.seeded(seed, snapping=RELEASE_SNAPPING)

    try:
        records, quarantine = read_trips(cfg.input)
        lookup = read_lookup(cfg.lookup) if cfg.lookup else None
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    lock = FileLock(str(cfg.ledger) + ".lock")
    try:
        with lock:
            ledger = BudgetLedger(cfg.plan.total_budget, cfg.ledger)
            result = run_release(
                records,
                cfg.plan,
                ledger,
                rng,
                cfg.output_dir,
                lookup=lookup,
                emit_expanded=cfg.emit_expanded,
                extra_quarantine=quarantine,
            )
    except BudgetError as exc:
        print(f"budget refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    report = result.report
    g = report["guarantee"]
    print(f"released {report['outputs_written']} outputs to {result.output_dir}")
    print(f"guarantee: (epsilon={g['epsilon']:g}, delta={g['delta']:g})")
    print(f"quarantined: {sum(report['quarantine'].values())} {dict(report['quarantine'])}")
    print(f"report: {result.report_path}")
    return EXIT_OK


def cmd_density(args) -> int:
    bin_width = 15
    lookup = None
    postcode_modes = ("bus",)
    if args.config:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            for p in exc.diagnostics:
                print(f"error: {p}", file=sys.stderr)
            return EXIT_CONFIG
        bin_width = cfg.plan.time_bin_minutes
        postcode_modes = cfg.plan.postcode_modes
        if cfg.lookup:
            lookup = read_lookup(cfg.lookup)

    try:
        records, quarantine = read_trips(args.input)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # Partitions are prospective: whatever (mode, date) pairs the data holds.
    if lookup is None:
        postcode_modes = ()
    prepared, prep_quarantine = preprocess(
        strip_identifiers(records), bin_width=bin_width, lookup=lookup, postcode_modes=postcode_modes
    )
    quarantine.update(prep_quarantine)
    groups = defaultdict(list)
    for t in prepared:
        groups[(t.mode, t.trip_date)].append(t)

    from .pipeline import ReleasePlan

    for (mode, day) in sorted(groups):
        plan = ReleasePlan(dates=(day,), modes=(mode,), time_bin_minutes=bin_width)
        cell, _ = partition(groups[(mode, day)], plan)
        dataset = cell[(mode, day)]
        for spec in MARGINALS:
            marginal = project_marginal(dataset, spec)
            profile = density_profile(marginal, args.k)
            print(
                f"mode={mode}/date={day.isoformat()} marginal={spec.id} "
                f"k={profile.k} gamma={profile.gamma:.4f} "
                f"rows={marginal.n} distinct={len(marginal.counts)}"
            )
    if quarantine:
        print(f"quarantined: {sum(quarantine.values())} {dict(sorted(quarantine.items()))}")
    return EXIT_OK


def cmd_expand(args) -> int:
    try:
        written = expand_counts(args.input, args.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {written} rows to {args.output}")
    return EXIT_OK


def cmd_audit(args) -> int:
    config = AuditConfig(trials=args.trials)
    epsilons = (args.epsilon,) if args.epsilon is not None else (0.5, 1.0, 2.0)
    deltas = (args.delta,) if args.delta is not None else (0.05, 0.1, 0.5)
    rng = NoiseSource.seeded(args.seed)
    lines, ok = run_audit_suite(config, rng, epsilons=epsilons, deltas=deltas)
    text = "\n".join(lines)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
        print(f"report written to {args.report}")
    return EXIT_OK if ok else EXIT_AUDIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dptrips",
        description="Differentially private release of tap-on/tap-off trip histograms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a release config without running it")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("release", help="run the full release pipeline")
    p.add_argument("--config", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--seed", type=int, help="deterministic noise for testing only")
    group.add_argument("--secure", action="store_true", help="OS-entropy noise for a real release")
    p.set_defaults(func=cmd_release)

    p = sub.add_parser("density", help="per-partition/marginal (k, gamma) before spending budget")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--config", help="borrow bin width and lookup from a release config")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("expand", help="expand a counts CSV into row form")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("audit", help="empirical privacy and utility checks")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--epsilon", type=float, help="restrict the grid to one epsilon")
    p.add_argument("--delta", type=float, help="restrict the grid to one delta")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="also write the report to this file")
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "k", None) is not None and args.k < 1:
        print("error: --k must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
