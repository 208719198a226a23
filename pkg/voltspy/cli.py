"""Command-line surface: argument parsing and one function per subcommand."""

import argparse
import asyncio
import logging
from pathlib import Path
from typing import Callable

from voltspy.attacks import (
    OBJECTIVES,
    PER_SAMPLE_OBJECTIVES,
    canonical_spec,
    permutation_importance,
    run_attack,
    run_attacks,
    write_importance,
    write_results,
)
from voltspy.config import (
    DEFAULT_FRACTION,
    DEFAULT_SEED,
    DEFAULT_SWEEP_SIZES,
    RunConfig,
    Settings,
    parse_int_list,
)
from voltspy.learners import MODEL_KINDS
from voltspy.shield import aggregate_dataset, sweep
from voltspy.synthgen import PRESETS_FILENAME, SCALES, generate_dataset, grid_for_scale, write_presets
from voltspy.telemetry import load_dataset, save_dataset

logger = logging.getLogger(__name__)

DEFAULT_OUT = Path("results")
IMPORTANCE_FILENAME = "importance.csv"


# ── Argument parsing ─────────────────────────────────────────────────


def _objectives(raw: str) -> tuple[str, ...]:
    if raw.strip() == "all":
        return OBJECTIVES
    names = tuple(part.strip() for part in raw.split(",") if part.strip())
    unknown = [name for name in names if name not in OBJECTIVES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown objective(s) {unknown}; choose from {', '.join(OBJECTIVES)} or all")
    return names


def _kinds(raw: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in raw.split(",") if part.strip())
    unknown = [name for name in names if name not in MODEL_KINDS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown model kind(s) {unknown}; choose from {','.join(MODEL_KINDS)}")
    return names


def _sizes(raw: str) -> tuple[int, ...]:
    try:
        return parse_int_list(raw, "--sizes")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"Master seed (default: {DEFAULT_SEED})")
    common.add_argument("--out", type=Path, default=None, help="Output directory")

    parser = argparse.ArgumentParser(
        prog="voltspy",
        description="Battery side-channel attacks on EV consumption traces, and their countermeasure",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", parents=[common], help="Generate a synthetic labelled dataset")
    synth.add_argument("--scale", choices=SCALES, default="desk", help="Grid to generate (default: desk)")

    attack = commands.add_parser("attack", parents=[common], help="Run attack pipelines and write results")
    attack.add_argument("data_dir", type=Path, help="Directory holding samples.csv and labels.csv")
    attack.add_argument("--objective", type=_objectives, default=OBJECTIVES,
                        help="Comma-separated objectives or 'all' (default: all)")
    attack.add_argument("--models", type=_kinds, default=MODEL_KINDS, help="Comma-separated model kinds")
    attack.add_argument("--balance", action="store_true", help="Undersample training rows to the minority class")
    attack.add_argument("--fraction", type=float, default=DEFAULT_FRACTION,
                        help=f"Head/tail region fraction (default: {DEFAULT_FRACTION})")

    defend = commands.add_parser("defend", parents=[common], help="Sweep the aggregation countermeasure")
    defend.add_argument("data_dir", type=Path)
    defend.add_argument("--objective", choices=sorted(PER_SAMPLE_OBJECTIVES), default="style")
    defend.add_argument("--sizes", type=_sizes, default=DEFAULT_SWEEP_SIZES,
                        help="Comma-separated window sizes (default: 10,20,...,100)")
    defend.add_argument("--models", type=_kinds, default=MODEL_KINDS)

    importance = commands.add_parser("importance", parents=[common],
                                     help="Permutation importance of the per-sample style model")
    importance.add_argument("data_dir", type=Path)
    importance.add_argument("--repeats", type=int, default=5, help="Shuffles per feature (default: 5)")

    aggregate = commands.add_parser("aggregate", parents=[common], help="Write a window-mean aggregated copy")
    aggregate.add_argument("data_dir", type=Path)
    aggregate.add_argument("--window", type=int, default=10, help="Samples per window (default: 10)")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    """Build the RunConfig for parsed arguments. Raises ValueError on invalid combinations."""
    out_dir = args.out
    if out_dir is None:
        if args.command in ("synth", "aggregate"):
            raise ValueError(f"{args.command} needs --out")
        out_dir = DEFAULT_OUT
    objective = getattr(args, "objective", ())
    return RunConfig(
        command=args.command,
        data_dir=getattr(args, "data_dir", None),
        out_dir=out_dir,
        objectives=(objective,) if isinstance(objective, str) else tuple(objective),
        kinds=getattr(args, "models", MODEL_KINDS),
        seed=args.seed,
        balance=getattr(args, "balance", False),
        fraction=getattr(args, "fraction", DEFAULT_FRACTION),
        sizes=getattr(args, "sizes", DEFAULT_SWEEP_SIZES),
        scale=getattr(args, "scale", "desk"),
        repeats=getattr(args, "repeats", 5),
        window=getattr(args, "window", 10),
    )


# ── Commands ─────────────────────────────────────────────────────────


def cmd_synth(config: RunConfig, settings: Settings) -> int:
    dataset = generate_dataset(grid_for_scale(config.scale), config.seed)
    save_dataset(dataset, config.out_dir)
    write_presets(config.out_dir / PRESETS_FILENAME)
    print(f"{len(dataset)} trips written to {config.out_dir}")
    return 0


def cmd_attack(config: RunConfig, settings: Settings) -> int:
    dataset = load_dataset(config.data_dir)
    specs = [canonical_spec(objective, config.fraction) for objective in config.objectives]
    results = asyncio.run(run_attacks(
        dataset, specs, config.kinds, config.seed, config.balance, settings.threads, settings.max_rows,
    ))
    if config.balance:
        for result in results:
            logger.info(
                "Training histogram objective=%s kind=%s histogram=%s",
                result.spec.objective, result.kind, result.train_histogram,
            )
    summary = write_results(results, config.out_dir)
    for result in results:
        print(f"{result.spec.objective:<12} {result.kind:<4} accuracy={result.report.accuracy:.3f} "
              f"macro_f1={result.report.macro_f1:.3f}")
    print(f"Summary written to {summary}")
    return 0


def cmd_defend(config: RunConfig, settings: Settings) -> int:
    dataset = load_dataset(config.data_dir)
    objective = config.objectives[0]
    result = sweep(dataset, objective, config.sizes, config.kinds, config.seed, settings.threads, settings.max_rows)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    path = config.out_dir / f"sweep_{objective}.csv"
    result.to_csv(path)
    print(f"Sweep written to {path}")
    if "rf" in config.kinds:
        small = 10 if 10 in result.sizes else result.sizes[0]
        large = 100 if 100 in result.sizes else result.sizes[-1]
        ratio = result.accuracy_ratio("rf", small, large)
        print(f"RF accuracy ratio size {large} / size {small}: {ratio:.3f}")
    return 0


def cmd_importance(config: RunConfig, settings: Settings) -> int:
    dataset = load_dataset(config.data_dir)
    [result] = run_attack(
        dataset, canonical_spec("style"), ("dt",), config.seed,
        threads=settings.threads, max_rows=settings.max_rows,
    )
    ranking = permutation_importance(result.model, result.test_matrix, repeats=config.repeats, seed=config.seed)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    path = write_importance(ranking, config.out_dir / IMPORTANCE_FILENAME)
    for name, score in ranking:
        print(f"{name:<24} {score:.4f}")
    print(f"Importance written to {path}")
    return 0


def cmd_aggregate(config: RunConfig, settings: Settings) -> int:
    dataset = load_dataset(config.data_dir)
    aggregated = aggregate_dataset(dataset, config.window)
    save_dataset(aggregated, config.out_dir)
    logger.info("Aggregated dataset window=%d trips=%d of=%d", config.window, len(aggregated), len(dataset))
    print(f"{len(aggregated)} trips aggregated over {config.window} samples written to {config.out_dir}")
    return 0


COMMANDS: dict[str, Callable[[RunConfig, Settings], int]] = {
    "synth": cmd_synth,
    "attack": cmd_attack,
    "defend": cmd_defend,
    "importance": cmd_importance,
    "aggregate": cmd_aggregate,
}
