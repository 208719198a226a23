"""Mean-over-window aggregation countermeasure and its accuracy sweep."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from voltspy.config import DEFAULT_MAX_ROWS, DEFAULT_SEED, DEFAULT_SWEEP_SIZES
from voltspy.featurex import FeatureMatrix
from voltspy.telemetry import Dataset, Trip, label_histogram

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("window_size", "model_kind", "accuracy", "macro_f1")


class ShieldError(ValueError):
    """Raised when aggregation or reduction cannot produce usable rows."""

    def __init__(self, message: str, size: int | None = None) -> None:
        self.size = size
        super().__init__(message)


# ── Aggregation ──────────────────────────────────────────────────────


def aggregate_trip(trip: Trip, w: int) -> Trip:
    """
    Replace every run of ``w`` consecutive samples by its mean.

    The trailing remainder is dropped and ``t`` becomes the window's mean
    timestamp. A trip shorter than ``w`` comes back empty with its labels.
    """
    if w < 1:
        raise ShieldError(f"window size must be >= 1, got {w}", size=w)
    if w == 1:
        return trip
    count = len(trip) // w
    usable = count * w

    def means(values: np.ndarray) -> np.ndarray:
        return values[:usable].reshape(count, w).mean(axis=1)

    channels = {name: means(values) for name, values in trip.channels.items()}
    return Trip(trip.trip_id, means(trip.t), channels, trip.labels)


def aggregate_dataset(dataset: Dataset, w: int) -> Dataset:
    """Aggregate every trip; trips emptied by the window are dropped."""
    aggregated = [aggregate_trip(trip, w) for trip in dataset]
    kept = tuple(trip for trip in aggregated if len(trip))
    dropped = len(aggregated) - len(kept)
    if dropped:
        logger.warning("Trips shorter than the window dropped window=%d count=%d", w, dropped)
    return Dataset(kept, dataset.label_schema)


# ── Stratified reduction ─────────────────────────────────────────────


def _quotas(histogram: dict[str, int], target: int) -> dict[str, int]:
    total = sum(histogram.values())
    exact = {name: count * target / total for name, count in histogram.items()}
    quotas = {name: int(np.floor(value)) for name, value in exact.items()}
    leftover = target - sum(quotas.values())
    by_remainder = sorted(histogram, key=lambda name: -(exact[name] - quotas[name]))
    for name in by_remainder[:leftover]:
        quotas[name] += 1

    # every class keeps at least one row
    for name in histogram:
        if quotas[name] == 0:
            donors = [n for n in histogram if quotas[n] > 1]
            donor = max(donors, key=lambda n: quotas[n] - exact[n])
            quotas[donor] -= 1
            quotas[name] = 1
    return quotas


def stratified_reduce(rows: FeatureMatrix, target_count: int, seed: int = DEFAULT_SEED) -> FeatureMatrix:
    """
    Seeded subsample of ``target_count`` rows keeping class proportions
    within one row per class (largest-remainder rounding).
    """
    total = len(rows)
    if target_count > total:
        raise ShieldError(f"cannot reduce {total} rows to {target_count}")
    histogram = label_histogram(rows.labels.tolist())
    if target_count < len(histogram):
        raise ShieldError(f"target of {target_count} rows is below the class count {len(histogram)}")
    if target_count == total:
        return rows

    quotas = _quotas(histogram, target_count)
    labels = rows.labels
    rng = np.random.default_rng(seed)
    kept = [
        rng.choice(np.flatnonzero(labels == name), size=quotas[name], replace=False)
        for name in histogram
    ]
    logger.debug("Reduced rows=%d -> %d quotas=%s", total, target_count, quotas)
    return rows.take(np.sort(np.concatenate(kept)))


# ── Sweep ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SweepPoint:
    window_size: int
    model_kind: str
    accuracy: float
    macro_f1: float


@dataclass(frozen=True)
class SweepResult:
    objective: str
    seed: int
    sizes: tuple[int, ...]
    points: tuple[SweepPoint, ...]
    rows_per_size: int = 0

    def __post_init__(self) -> None:
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ShieldError(f"sizes must be strictly ascending, got {self.sizes}")
        for point in self.points:
            if not 0.0 <= point.accuracy <= 1.0:
                raise ShieldError(f"accuracy out of range: {point}", size=point.window_size)

    def accuracy(self, size: int, kind: str) -> float:
        for point in self.points:
            if point.window_size == size and point.model_kind == kind:
                return point.accuracy
        raise KeyError((size, kind))

    def accuracy_ratio(self, kind: str = "rf", small: int | None = None, large: int | None = None) -> float:
        """Accuracy at the largest window over accuracy at the smallest."""
        small = self.sizes[0] if small is None else small
        large = self.sizes[-1] if large is None else large
        base = self.accuracy(small, kind)
        return self.accuracy(large, kind) / base if base else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.window_size, p.model_kind, p.accuracy, p.macro_f1) for p in self.points],
            columns=list(SWEEP_COLUMNS),
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def sweep(
    dataset: Dataset,
    objective: str,
    sizes: Sequence[int] = DEFAULT_SWEEP_SIZES,
    kinds: Sequence[str] = ("dt", "knn", "mlp", "rf"),
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    max_rows: int = DEFAULT_MAX_ROWS,
) -> SweepResult:
    """
    Aggregate at each window size and rerun the per-sample attack on an
    equal number of rows: the row count at the largest size, capped by
    ``max_rows``.
    """
    # attacks imports stratified_reduce from this module
    from voltspy.attacks import attack_matrix, canonical_spec, check_target, dataset_fingerprint, evaluate_rows

    spec = canonical_spec(objective)
    if spec.flow != "per_sample":
        raise ShieldError(f"the sweep covers per-sample objectives only, got {objective!r}")
    sizes = tuple(sorted(set(sizes)))
    if not sizes or sizes[0] < 1:
        raise ShieldError(f"window sizes must be positive, got {sizes}")
    check_target(dataset, spec.target_label)
    fingerprint = dataset_fingerprint(dataset, spec.target_label)

    matrices: dict[int, FeatureMatrix] = {}
    for size in sizes:
        aggregated = aggregate_dataset(dataset, size)
        if len(aggregated) == 0:
            raise ShieldError(f"window size {size} leaves no trip with a full window", size=size)
        matrices[size] = attack_matrix(aggregated, spec)

    target = min(len(matrices[sizes[-1]]), max_rows)
    points: list[SweepPoint] = []
    for size in sizes:
        rows = matrices[size]
        try:
            if len(rows) > target:
                rows = stratified_reduce(rows, target, seed)
            results = evaluate_rows(rows, spec, kinds, seed=seed, threads=threads, fingerprint=fingerprint)
        except ValueError as exc:
            raise ShieldError(f"window size {size}: {exc}", size=size) from exc
        for result in results:
            points.append(SweepPoint(size, result.kind, result.report.accuracy, result.report.macro_f1))
            logger.info(
                "Sweep point objective=%s size=%d kind=%s rows=%d accuracy=%.3f",
                objective, size, result.kind, len(rows), result.report.accuracy,
            )
    return SweepResult(objective, seed, sizes, tuple(points), target)
