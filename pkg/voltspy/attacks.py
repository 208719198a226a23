"""The seven attack pipelines, permutation importance, and result files."""

import asyncio
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from voltspy.config import DEFAULT_FRACTION, DEFAULT_MAX_ROWS, DEFAULT_SEED
from voltspy.featurex import (
    FLOWS,
    FeatureMatrix,
    WindowSpec,
    build_matrix,
    impute_fit_apply,
    select_features,
    standardize_fit_apply,
)
from voltspy.learners import (
    MODEL_KINDS,
    SCALED_KINDS,
    EvalReport,
    Hyperparams,
    TrainedModel,
    evaluate,
    grid_search,
    predict,
)
from voltspy.shield import stratified_reduce
from voltspy.telemetry import (
    Dataset,
    TelemetryError,
    label_histogram,
    ordered_classes,
    split_train_test,
    undersample_balance,
)

logger = logging.getLogger(__name__)

OBJECTIVES = ("style", "vehicle", "occupancy", "auxiliary", "driver", "origin", "destination")
TARGET_LABELS = {
    "style": "style",
    "vehicle": "vehicle",
    "occupancy": "occupancy",
    "auxiliary": "aux_w",
    "driver": "driver",
    "origin": "origin",
    "destination": "destination",
}
PER_SAMPLE_OBJECTIVES = frozenset({"style", "vehicle"})
_WINDOW_MODES = {
    "style": "per_sample",
    "vehicle": "per_sample",
    "occupancy": "full_trip",
    "auxiliary": "full_trip",
    "driver": "fixed",
    "origin": "head",
    "destination": "tail",
}

TRAIN_RATIO = 0.8
DRIVER_WINDOW = 10
REGION_WINDOW = 5
IMPORTANCE_REPEATS = 5
SUMMARY_FILENAME = "summary.csv"
SUMMARY_COLUMNS = ("objective", "kind", "accuracy", "macro_f1", "balanced_accuracy")


class AttackError(ValueError):
    """Raised when a dataset cannot support an attack; ``trip_ids`` names the offending trips."""

    def __init__(self, message: str, trip_ids: Sequence[str] = ()) -> None:
        self.trip_ids = tuple(trip_ids)
        super().__init__(message)


# ── Specs ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AttackSpec:
    objective: str
    flow: str
    window: WindowSpec
    target_label: str
    region_fraction: float = DEFAULT_FRACTION

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise AttackError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.flow not in FLOWS:
            raise AttackError(f"flow must be one of {FLOWS}, got {self.flow!r}")
        expected_flow = "per_sample" if self.objective in PER_SAMPLE_OBJECTIVES else "catalog"
        if self.flow != expected_flow or self.window.mode != _WINDOW_MODES[self.objective]:
            raise AttackError(
                f"{self.objective} runs on the {expected_flow} flow with {_WINDOW_MODES[self.objective]} windows"
            )
        if self.target_label != TARGET_LABELS[self.objective]:
            raise AttackError(f"{self.objective} targets the {TARGET_LABELS[self.objective]} label")

    def as_dict(self) -> dict[str, Any]:
        return {
            "objective": self.objective,
            "flow": self.flow,
            "window": self.window.describe(),
            "target_label": self.target_label,
            "region_fraction": self.region_fraction,
        }


def canonical_spec(objective: str, fraction: float = DEFAULT_FRACTION) -> AttackSpec:
    """The pipeline shape for ``objective``; ``fraction`` sizes the head/tail regions."""
    if objective not in OBJECTIVES:
        raise AttackError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    mode = _WINDOW_MODES[objective]
    if mode == "per_sample":
        flow, window = "per_sample", WindowSpec.per_sample()
    elif mode == "full_trip":
        flow, window = "catalog", WindowSpec.full_trip()
    elif mode == "fixed":
        flow, window = "catalog", WindowSpec.fixed(DRIVER_WINDOW)
    elif mode == "head":
        flow, window = "catalog", WindowSpec.head(fraction, REGION_WINDOW)
    else:
        flow, window = "catalog", WindowSpec.tail(fraction, REGION_WINDOW)
    return AttackSpec(objective, flow, window, TARGET_LABELS[objective], fraction)


# ── Results ──────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AttackResult:
    """One model kind's outcome on one objective; everything but the fitted state serializes."""

    spec: AttackSpec
    kind: str
    hyperparams: Hyperparams
    cv_score: float
    report: EvalReport
    seed: int
    balance: bool
    trip_count: int
    class_histogram: dict[str, int]
    train_rows: int
    test_rows: int
    train_histogram: dict[str, int]
    selected_features: tuple[str, ...]
    label_control: bool = False
    model: TrainedModel | None = field(default=None, repr=False, compare=False)
    test_matrix: FeatureMatrix | None = field(default=None, repr=False, compare=False)
    predictions: tuple[str, ...] = field(default=(), repr=False, compare=False)
    train_trip_ids: frozenset[str] = field(default=frozenset(), repr=False, compare=False)

    def to_dict(self) -> dict[str, Any]:
        data = {
            **self.spec.as_dict(),
            "model_kind": self.kind,
            "hyperparams": self.hyperparams.as_dict(),
            "cv_score": self.cv_score,
            "seed": self.seed,
            "balance": self.balance,
            "label_control": self.label_control,
            "dataset": {"trip_count": self.trip_count, "class_histogram": self.class_histogram},
            "train_rows": self.train_rows,
            "test_rows": self.test_rows,
            "train_histogram": self.train_histogram,
            "selected_features": list(self.selected_features),
            "report": self.report.to_dict(),
        }
        if self.spec.flow == "catalog" and self.predictions:
            mean, std = per_trip_accuracy(self)
            data["per_trip_accuracy"] = {"mean": mean, "std": std}
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def per_trip_accuracy(result: AttackResult) -> tuple[float, float]:
    """Mean and population std over test trips of each trip's window accuracy."""
    if result.test_matrix is None or not result.predictions:
        raise AttackError("result carries no test predictions")
    frame = pd.DataFrame({
        "trip_id": result.test_matrix.trip_ids,
        "hit": np.asarray(result.predictions, dtype=object) == result.test_matrix.labels,
    })
    per_trip = frame.groupby("trip_id", sort=True)["hit"].mean().to_numpy(dtype=float)
    return float(per_trip.mean()), float(per_trip.std())


# ── Pipeline ─────────────────────────────────────────────────────────


def check_target(dataset: Dataset, label: str) -> tuple[str, ...]:
    """Return the label's classes; every trip must carry it and there must be two or more."""
    missing = [trip.trip_id for trip in dataset if trip.labels.get(label) is None]
    if missing:
        raise AttackError(
            f"{len(missing)} trips lack the {label!r} label, e.g. {missing[:5]}", trip_ids=missing,
        )
    classes = ordered_classes([trip.labels.get(label) for trip in dataset])
    if len(classes) < 2:
        raise AttackError(f"label {label!r} has a single class {list(classes)}; nothing to infer")
    return classes


def dataset_fingerprint(dataset: Dataset, label: str) -> tuple[int, dict[str, int]]:
    return len(dataset), label_histogram([trip.labels.get(label) or "" for trip in dataset])


def attack_matrix(dataset: Dataset, spec: AttackSpec) -> FeatureMatrix:
    """Segment and extract every trip for ``spec``; rows carry the target label."""
    matrix = build_matrix(dataset, spec.flow, spec.window, spec.target_label)
    if len(matrix) == 0:
        raise AttackError(f"{spec.objective}: no trip yields a {spec.window.describe()} window")
    return matrix


def evaluate_rows(
    rows: FeatureMatrix,
    spec: AttackSpec,
    kinds: Sequence[str] = MODEL_KINDS,
    seed: int = DEFAULT_SEED,
    balance: bool = False,
    threads: int = 1,
    fingerprint: tuple[int, dict[str, int]] | None = None,
    label_control: bool = False,
) -> list[AttackResult]:
    """
    Split, preprocess, grid-search and evaluate ``rows`` for every kind.

    Catalog rows are split by trip so no trip lands on both sides. With
    ``label_control`` the training labels are shuffled first, which gives
    the chance-level baseline.
    """
    unknown = [kind for kind in kinds if kind not in MODEL_KINDS]
    if unknown or not kinds:
        raise AttackError(f"model kinds must be drawn from {MODEL_KINDS}, got {list(kinds)}")
    classes = ordered_classes(rows.labels.tolist())
    if fingerprint is None:
        trips = pd.Series(rows.labels).groupby(rows.trip_ids, sort=False).first()
        fingerprint = (len(trips), label_histogram(trips.tolist()))

    groups = rows.trip_ids if spec.flow == "catalog" else None
    try:
        train, test = split_train_test(rows, TRAIN_RATIO, seed, stratify=True, groups=groups)
    except TelemetryError as exc:
        raise AttackError(f"{spec.objective}: {exc}") from exc
    if balance:
        train = undersample_balance(train, seed)
        logger.info("Balanced training rows objective=%s histogram=%s", spec.objective, label_histogram(train.labels.tolist()))
    if label_control:
        train = train.with_labels(np.random.default_rng(seed).permutation(train.labels))

    train, [test] = impute_fit_apply(train, [test])
    selected = select_features(train)
    train, test = train.select(selected), test.select(selected)
    train_histogram = label_histogram(train.labels.tolist())

    results = []
    for kind in kinds:
        fit_rows, test_rows = train, test
        if kind in SCALED_KINDS:
            fit_rows, [test_rows] = standardize_fit_apply(fit_rows, [test_rows])
        search = grid_search(kind, fit_rows, seed, threads)
        predicted = predict(search.model, test_rows)
        report = evaluate(test_rows.labels.tolist(), predicted, classes)
        results.append(AttackResult(
            spec=spec,
            kind=kind,
            hyperparams=search.best,
            cv_score=max(entry["mean_score"] for entry in search.cv_table),
            report=report,
            seed=seed,
            balance=balance,
            trip_count=fingerprint[0],
            class_histogram=fingerprint[1],
            train_rows=len(fit_rows),
            test_rows=len(test_rows),
            train_histogram=train_histogram,
            selected_features=selected,
            label_control=label_control,
            model=search.model,
            test_matrix=test_rows,
            predictions=tuple(predicted),
            train_trip_ids=frozenset(train.trip_ids.tolist()),
        ))
        logger.info(
            "Attack finished objective=%s kind=%s accuracy=%.3f macro_f1=%.3f",
            spec.objective, kind, report.accuracy, report.macro_f1,
        )
    return results


def run_attack(
    dataset: Dataset,
    spec: AttackSpec,
    kinds: Sequence[str] = MODEL_KINDS,
    seed: int = DEFAULT_SEED,
    balance: bool = False,
    threads: int = 1,
    max_rows: int = DEFAULT_MAX_ROWS,
    label_control: bool = False,
) -> list[AttackResult]:
    """
    Run one objective end to end, one result per model kind.

    Per-sample matrices above ``max_rows`` are first cut down by stratified
    reduction.
    """
    check_target(dataset, spec.target_label)
    rows = attack_matrix(dataset, spec)
    if spec.flow == "per_sample" and len(rows) > max_rows:
        logger.info("Reducing per-sample rows objective=%s rows=%d max_rows=%d", spec.objective, len(rows), max_rows)
        rows = stratified_reduce(rows, max_rows, seed)
    return evaluate_rows(
        rows, spec, kinds, seed, balance, threads,
        fingerprint=dataset_fingerprint(dataset, spec.target_label),
        label_control=label_control,
    )


async def run_attacks(
    dataset: Dataset,
    specs: Sequence[AttackSpec],
    kinds: Sequence[str] = MODEL_KINDS,
    seed: int = DEFAULT_SEED,
    balance: bool = False,
    threads: int = 1,
    max_rows: int = DEFAULT_MAX_ROWS,
) -> list[AttackResult]:
    """
    Run several objectives concurrently; results come back in ``specs`` order.

    ``threads`` is the whole budget: concurrent attacks times each attack's
    tree pool stays within it.
    """
    concurrency = max(1, min(threads, len(specs)))
    per_attack = max(1, threads // concurrency)
    semaphore = asyncio.Semaphore(concurrency)

    async def one(spec: AttackSpec) -> list[AttackResult]:
        async with semaphore:
            return await asyncio.to_thread(run_attack, dataset, spec, kinds, seed, balance, per_attack, max_rows)

    batches = await asyncio.gather(*(one(spec) for spec in specs))
    return [result for batch in batches for result in batch]


# ── Importance ───────────────────────────────────────────────────────


def permutation_importance(
    model: TrainedModel,
    X_test: FeatureMatrix,
    y_test: Sequence[str] | None = None,
    repeats: int = IMPORTANCE_REPEATS,
    seed: int = DEFAULT_SEED,
) -> list[tuple[str, float]]:
    """
    Mean accuracy drop over ``repeats`` seeded shuffles of each column.

    Sorted by descending importance, ties by feature name.
    """
    if repeats < 1:
        raise AttackError(f"repeats must be >= 1, got {repeats}")
    X = X_test.select(model.feature_names) if X_test.names != model.feature_names else X_test
    truth = np.asarray(X.labels if y_test is None else list(y_test), dtype=object)
    if len(truth) != len(X) or len(X) == 0:
        raise AttackError(f"need matching non-empty test rows, got {len(X)} rows and {len(truth)} labels")
    position = {name: i for i, name in enumerate(model.classes)}
    codes = np.array([position.get(label, -1) for label in truth], dtype=np.int64)

    values = X.values
    baseline = float(np.mean(model.estimator.predict(values) == codes))
    rng = np.random.default_rng(seed)
    scores = []
    for column, name in enumerate(X.names):
        drops = []
        for _ in range(repeats):
            shuffled = values.copy()
            shuffled[:, column] = rng.permutation(values[:, column])
            drops.append(baseline - float(np.mean(model.estimator.predict(shuffled) == codes)))
        scores.append((name, float(np.mean(drops))))
    return sorted(scores, key=lambda item: (-item[1], item[0]))


# ── Output files ─────────────────────────────────────────────────────


def write_results(results: Sequence[AttackResult], out_dir: str | Path) -> Path:
    """Write ``<objective>_<kind>.json`` per result and a combined summary CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for result in results:
        path = out_dir / f"{result.spec.objective}_{result.kind}.json"
        path.write_text(result.to_json(), encoding="utf-8")
    summary = pd.DataFrame(
        [
            (r.spec.objective, r.kind, r.report.accuracy, r.report.macro_f1, r.report.balanced_accuracy)
            for r in results
        ],
        columns=list(SUMMARY_COLUMNS),
    )
    summary_path = out_dir / SUMMARY_FILENAME
    summary.to_csv(summary_path, index=False, lineterminator="\n")
    logger.info("Wrote results count=%d out_dir=%s", len(results), out_dir)
    return summary_path


def write_importance(ranking: Sequence[tuple[str, float]], path: str | Path) -> Path:
    path = Path(path)
    pd.DataFrame(list(ranking), columns=["feature", "importance"]).to_csv(path, index=False, lineterminator="\n")
    return path
