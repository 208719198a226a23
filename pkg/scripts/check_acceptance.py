#!/usr/bin/env python3
"""
Acceptance run over synthetic data: attack accuracy floors, model ordering
and the aggregation countermeasure. Optionally checks a recorded field
dataset against the published reference accuracies.

Run from project root. Prints one PASS/FAIL line per check and exits
nonzero when any check fails. Takes minutes at desk scale.
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from scipy.stats import spearmanr

# Project root on the path so the script runs without installing the package
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from voltspy.attacks import OBJECTIVES, canonical_spec, run_attack
from voltspy.config import DEFAULT_SWEEP_SIZES, Settings, get_log_level_int, parse_int_list
from voltspy.shield import sweep
from voltspy.synthgen import desk_grid, field_grid, generate_dataset
from voltspy.telemetry import Dataset, load_dataset

logger = logging.getLogger("check_acceptance")

ACCURACY_FLOORS = {
    "vehicle": 0.95,
    "style": 0.90,
    "occupancy": 0.75,
    "auxiliary": 0.90,
    "driver": 0.85,
    "origin": 0.80,
    "destination": 0.80,
}

# (objective, metric, reference) for a recorded four-driver field dataset
FIELD_REFERENCES = (
    ("driver", "accuracy", 0.942),
    ("origin", "balanced_accuracy", 0.955),
    ("destination", "balanced_accuracy", 0.923),
)
FIELD_TOLERANCE = 0.05

LABEL_CONTROL_TOLERANCE = 0.15
DT_SLACK = 0.02
SWEEP_RATIO_CEILING = 0.6
SWEEP_RHO_CEILING = -0.5


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


class Suite:
    """Synthetic datasets generated once per seed; driver runs on the field grid."""

    def __init__(self) -> None:
        self._desk: dict[int, Dataset] = {}
        self._field: dict[int, Dataset] = {}

    def dataset_for(self, objective: str, seed: int) -> Dataset:
        cache, grid = (self._field, field_grid) if objective == "driver" else (self._desk, desk_grid)
        if seed not in cache:
            logger.info("Generating dataset grid=%s seed=%d", grid.__name__, seed)
            cache[seed] = generate_dataset(grid(), seed)
        return cache[seed]


def check_floors(suite: Suite, seed: int, settings: Settings) -> list[Check]:
    checks = []
    for objective in OBJECTIVES:
        [result] = run_attack(
            suite.dataset_for(objective, seed), canonical_spec(objective), ("rf",),
            seed=seed, threads=settings.threads, max_rows=settings.max_rows,
        )
        floor = ACCURACY_FLOORS[objective]
        accuracy = result.report.accuracy
        checks.append(Check(f"floor {objective}", accuracy >= floor, f"rf={accuracy:.3f} floor={floor:.2f}"))
    return checks


def check_label_control(suite: Suite, seed: int, settings: Settings) -> list[Check]:
    [result] = run_attack(
        suite.dataset_for("style", seed), canonical_spec("style"), ("rf",),
        seed=seed, threads=settings.threads, max_rows=settings.max_rows, label_control=True,
    )
    chance = 1.0 / len(result.report.classes)
    accuracy = result.report.accuracy
    return [Check(
        "label control style",
        abs(accuracy - chance) <= LABEL_CONTROL_TOLERANCE,
        f"rf={accuracy:.3f} chance={chance:.3f}",
    )]


def check_ordering(suite: Suite, seeds: tuple[int, ...], settings: Settings) -> list[Check]:
    checks = []
    for seed in seeds:
        for objective in OBJECTIVES:
            results = run_attack(
                suite.dataset_for(objective, seed), canonical_spec(objective),
                seed=seed, threads=settings.threads, max_rows=settings.max_rows,
            )
            acc = {r.kind: r.report.accuracy for r in results}
            passed = acc["rf"] >= acc["dt"] - DT_SLACK and acc["rf"] > acc["knn"] and acc["rf"] > acc["mlp"]
            detail = " ".join(f"{kind}={acc[kind]:.3f}" for kind in sorted(acc))
            checks.append(Check(f"ordering {objective} seed={seed}", passed, detail))
    return checks


def check_sweep(suite: Suite, seed: int, sizes: tuple[int, ...], settings: Settings) -> list[Check]:
    checks = []
    for objective in ("style", "vehicle"):
        result = sweep(
            suite.dataset_for(objective, seed), objective, sizes, ("rf",),
            seed=seed, threads=settings.threads, max_rows=settings.max_rows,
        )
        ratio = result.accuracy_ratio("rf")
        rho = spearmanr(result.sizes, [result.accuracy(size, "rf") for size in result.sizes]).statistic
        checks.append(Check(
            f"sweep {objective}",
            ratio <= SWEEP_RATIO_CEILING and rho <= SWEEP_RHO_CEILING,
            f"ratio={ratio:.3f} rho={rho:.3f} rows_per_size={result.rows_per_size}",
        ))
    return checks


def check_field(data_dir: Path, seed: int, settings: Settings) -> list[Check]:
    dataset = load_dataset(data_dir)
    checks = []
    for objective, metric, reference in FIELD_REFERENCES:
        [result] = run_attack(
            dataset, canonical_spec(objective), ("rf",),
            seed=seed, threads=settings.threads, max_rows=settings.max_rows,
        )
        value = getattr(result.report, metric)
        checks.append(Check(
            f"field {objective}",
            abs(value - reference) <= FIELD_TOLERANCE,
            f"{metric}={value:.3f} reference={reference:.3f}",
        ))
    return checks


def main() -> int:
    parser = argparse.ArgumentParser(description="Run the voltspy acceptance checks")
    parser.add_argument("--seed", type=int, default=42, help="Seed for floors and sweep (default: 42)")
    parser.add_argument("--ordering-seeds", default="42,43,44", help="Seeds for the model ordering check")
    parser.add_argument("--sizes", default=",".join(map(str, DEFAULT_SWEEP_SIZES)), help="Sweep window sizes")
    parser.add_argument("--skip-ordering", action="store_true", help="Skip the all-kinds ordering runs")
    parser.add_argument("--skip-sweep", action="store_true", help="Skip the countermeasure sweep")
    parser.add_argument("--field-data", type=Path, help="Recorded dataset directory for the reference checks")
    args = parser.parse_args()

    logging.basicConfig(
        level=get_log_level_int(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    try:
        settings = Settings.from_env()
        ordering_seeds = parse_int_list(args.ordering_seeds, "--ordering-seeds")
        sizes = parse_int_list(args.sizes, "--sizes")
    except ValueError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2
    if args.field_data is not None and not args.field_data.is_dir():
        print(f"Error: {args.field_data} is not a directory", file=sys.stderr)
        return 2

    suite = Suite()
    checks = check_floors(suite, args.seed, settings)
    checks += check_label_control(suite, args.seed, settings)
    if not args.skip_ordering:
        checks += check_ordering(suite, ordering_seeds, settings)
    if not args.skip_sweep:
        checks += check_sweep(suite, args.seed, sizes, settings)
    if args.field_data is not None:
        checks += check_field(args.field_data, args.seed, settings)

    for check in checks:
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name:<32} {check.detail}")
    failed = sum(not check.passed for check in checks)
    print(f"\n{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
