"""Model training, prediction, grid search, and evaluation metrics."""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Hashable, NamedTuple, Sequence

import numpy as np

from voltspy.estimators import DecisionTree, KNearest, Perceptron, RandomForest
from voltspy.featurex import FeatureMatrix
from voltspy.telemetry import label_histogram, ordered_classes

logger = logging.getLogger(__name__)

MODEL_KINDS = ("dt", "knn", "mlp", "rf")
SCALED_KINDS = frozenset({"knn", "mlp"})

DT_CRITERIA = ("gini", "entropy")
DT_DEPTHS = tuple(range(3, 16))
KNN_KS = tuple(range(1, 15))
KNN_WEIGHTINGS = ("uniform", "distance")
MLP_HIDDEN = ((50,), (100,))
RF_ESTIMATORS = (100, 200)
CV_FOLDS = 3


class LearnerError(ValueError):
    """Raised on invalid hyperparameters, unusable training data, or bad metric inputs."""


class FeatureMismatchError(LearnerError):
    """Raised when a matrix does not carry the feature names a model was trained on."""

    def __init__(self, missing: Sequence[str], unexpected: Sequence[str]) -> None:
        self.missing = tuple(missing)
        self.unexpected = tuple(unexpected)
        super().__init__(
            f"feature names differ from training: missing={list(self.missing)} "
            f"unexpected={list(self.unexpected)}"
        )


# ── Hyperparameters ──────────────────────────────────────────────────


@dataclass(frozen=True)
class Hyperparams:
    """One point of a model kind's grid."""

    kind: str
    criterion: str = "gini"
    max_depth: int | None = None
    k: int = 5
    weighting: str = "uniform"
    hidden_sizes: tuple[int, ...] = (100,)
    n_estimators: int = 100

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise LearnerError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.kind == "dt":
            if self.criterion not in DT_CRITERIA:
                raise LearnerError(f"DT criterion must be one of {DT_CRITERIA}, got {self.criterion!r}")
            if self.max_depth is not None and not 1 <= self.max_depth <= DT_DEPTHS[-1]:
                raise LearnerError(f"DT max_depth must be in [1, {DT_DEPTHS[-1]}], got {self.max_depth}")
        elif self.kind == "knn":
            if not KNN_KS[0] <= self.k <= KNN_KS[-1]:
                raise LearnerError(f"KNN k must be in [{KNN_KS[0]}, {KNN_KS[-1]}], got {self.k}")
            if self.weighting not in KNN_WEIGHTINGS:
                raise LearnerError(f"KNN weighting must be one of {KNN_WEIGHTINGS}, got {self.weighting!r}")
        elif self.kind == "mlp":
            if tuple(self.hidden_sizes) not in MLP_HIDDEN:
                raise LearnerError(f"MLP hidden_sizes must be one of {MLP_HIDDEN}, got {self.hidden_sizes}")
        elif self.kind == "rf":
            if self.criterion != "gini":
                raise LearnerError(f"RF criterion is gini, got {self.criterion!r}")
            if self.n_estimators not in RF_ESTIMATORS:
                raise LearnerError(f"RF n_estimators must be one of {RF_ESTIMATORS}, got {self.n_estimators}")

    def as_dict(self) -> dict[str, Any]:
        if self.kind == "dt":
            return {"criterion": self.criterion, "max_depth": self.max_depth}
        if self.kind == "knn":
            return {"k": self.k, "weighting": self.weighting}
        if self.kind == "mlp":
            return {"hidden_sizes": list(self.hidden_sizes), "activation": "relu", "optimizer": "adam"}
        return {"criterion": self.criterion, "n_estimators": self.n_estimators}


def hyperparam_grid(kind: str) -> list[Hyperparams]:
    """The search grid in enumeration order (first entry wins score ties)."""
    if kind == "dt":
        return [Hyperparams("dt", criterion=c, max_depth=d) for c in DT_CRITERIA for d in DT_DEPTHS]
    if kind == "knn":
        return [Hyperparams("knn", k=k, weighting=w) for k in KNN_KS for w in KNN_WEIGHTINGS]
    if kind == "mlp":
        return [Hyperparams("mlp", hidden_sizes=h) for h in MLP_HIDDEN]
    if kind == "rf":
        return [Hyperparams("rf", n_estimators=n) for n in RF_ESTIMATORS]
    raise LearnerError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")


# ── Training and prediction ──────────────────────────────────────────


@dataclass(frozen=True)
class TrainedModel:
    """A fitted estimator plus everything needed to use it on new matrices."""

    kind: str
    hyperparams: Hyperparams
    feature_names: tuple[str, ...]
    classes: tuple[str, ...]
    seed: int
    estimator: Any = field(repr=False, compare=False)


def _estimator(params: Hyperparams, threads: int):
    if params.kind == "dt":
        return DecisionTree(criterion=params.criterion, max_depth=params.max_depth)
    if params.kind == "rf":
        return RandomForest(n_estimators=params.n_estimators, criterion=params.criterion, n_jobs=threads)
    if params.kind == "knn":
        return KNearest(k=params.k, weighting=params.weighting)
    return Perceptron(hidden=params.hidden_sizes[0])


def train(kind: str, hyperparams: Hyperparams, X: FeatureMatrix, seed: int = 42, threads: int = 1) -> TrainedModel:
    """Fit one model; labels come from ``X.labels``."""
    if hyperparams.kind != kind:
        raise LearnerError(f"hyperparams are for {hyperparams.kind!r}, not {kind!r}")
    classes = ordered_classes(X.labels.tolist())
    if len(classes) < 2:
        raise LearnerError(f"training needs at least 2 classes, got {list(classes)}")
    if not np.isfinite(X.values).all():
        raise LearnerError("training matrix holds non-finite values; impute first")
    codes = _encode(X.labels, classes)
    estimator = _estimator(hyperparams, threads).fit(X.values, codes, len(classes), seed)
    return TrainedModel(kind, hyperparams, X.names, classes, seed, estimator)


def predict(model: TrainedModel, X: FeatureMatrix) -> list[str]:
    """Predicted class names, one per row."""
    if X.names != model.feature_names:
        expected, given = set(model.feature_names), set(X.names)
        if expected != given or len(given) != len(X.names):
            raise FeatureMismatchError(sorted(expected - given), sorted(given - expected))
        X = X.select(model.feature_names)
    if len(X) == 0:
        return []
    codes = model.estimator.predict(X.values)
    return [model.classes[c] for c in codes]


def _encode(labels: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    position = {name: i for i, name in enumerate(classes)}
    return np.array([position[label] for label in labels], dtype=np.int64)


# ── Grid search ──────────────────────────────────────────────────────


class GridSearchResult(NamedTuple):
    best: Hyperparams
    cv_table: list[dict[str, Any]]
    model: TrainedModel


def stratified_folds(labels: Sequence[str], n_folds: int, seed: int) -> np.ndarray:
    """Fold id per row: each class is shuffled then dealt round-robin over the folds."""
    labels = np.asarray(labels, dtype=object)
    histogram = label_histogram(labels.tolist())
    small = {name: count for name, count in histogram.items() if count < n_folds}
    if small:
        raise LearnerError(f"classes with fewer than {n_folds} rows cannot be folded: {small}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    for name in histogram:
        members = rng.permutation(np.flatnonzero(labels == name))
        folds[members] = np.arange(len(members)) % n_folds
    return folds


def grid_search(
    kind: str,
    X_train: FeatureMatrix,
    seed: int = 42,
    threads: int = 1,
    grid: Sequence[Hyperparams] | None = None,
) -> GridSearchResult:
    """
    Stratified 3-fold CV over the kind's grid, scored by mean fold accuracy.

    Ties keep the first config in enumeration order. The winner is refit on
    all of ``X_train``.
    """
    grid = list(grid) if grid is not None else hyperparam_grid(kind)
    if not grid:
        raise LearnerError("grid is empty")
    folds = stratified_folds(X_train.labels, CV_FOLDS, seed)
    table: list[dict[str, Any]] = []
    best_index, best_score = 0, -1.0
    for index, params in enumerate(grid):
        scores = []
        for fold in range(CV_FOLDS):
            held = folds == fold
            model = train(kind, params, X_train.take(np.flatnonzero(~held)), seed, threads)
            fold_matrix = X_train.take(np.flatnonzero(held))
            predicted = np.array(predict(model, fold_matrix), dtype=object)
            scores.append(float(np.mean(predicted == fold_matrix.labels)))
        mean_score = float(np.mean(scores))
        table.append({"params": params.as_dict(), "fold_scores": scores, "mean_score": mean_score})
        logger.debug("Grid point kind=%s params=%s score=%.4f", kind, params.as_dict(), mean_score)
        if mean_score > best_score:
            best_index, best_score = index, mean_score

    best = grid[best_index]
    logger.info("Grid search done kind=%s points=%d best=%s cv=%.4f", kind, len(grid), best.as_dict(), best_score)
    return GridSearchResult(best, table, train(kind, best, X_train, seed, threads))


# ── Evaluation ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class EvalReport:
    """Confusion matrix (rows = true class) and the derived scores."""

    classes: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]
    accuracy: float
    macro_f1: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    balanced_accuracy: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "classes": list(self.classes),
            "confusion": [list(row) for row in self.confusion],
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "balanced_accuracy": self.balanced_accuracy,
            "per_class": {
                "precision": list(self.precision),
                "recall": list(self.recall),
                "f1": list(self.f1),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalReport":
        per_class = data["per_class"]
        return cls(
            classes=tuple(data["classes"]),
            confusion=tuple(tuple(int(v) for v in row) for row in data["confusion"]),
            accuracy=float(data["accuracy"]),
            macro_f1=float(data["macro_f1"]),
            precision=tuple(per_class["precision"]),
            recall=tuple(per_class["recall"]),
            f1=tuple(per_class["f1"]),
            balanced_accuracy=float(data.get("balanced_accuracy", 0.0)),
        )


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def evaluate(
    y_true: Sequence[Hashable], y_pred: Sequence[Hashable], class_names: Sequence[Hashable],
) -> EvalReport:
    """Accuracy, per-class precision/recall/F1 (0/0 taken as 0), and macro-F1 over every listed class."""
    if len(y_true) != len(y_pred):
        raise LearnerError(f"y_true has {len(y_true)} entries, y_pred has {len(y_pred)}")
    if len(y_true) == 0:
        raise LearnerError("cannot evaluate zero predictions")
    position = {name: i for i, name in enumerate(class_names)}
    unknown = {v for v in list(y_true) + list(y_pred) if v not in position}
    if unknown:
        raise LearnerError(f"labels missing from class_names: {sorted(map(str, unknown))}")

    n = len(position)
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, ([position[v] for v in y_true], [position[v] for v in y_pred]), 1)
    tp = np.diag(confusion).astype(float)
    predicted = confusion.sum(axis=0)
    support = confusion.sum(axis=1)

    precision = [_ratio(tp[i], predicted[i]) for i in range(n)]
    recall = [_ratio(tp[i], support[i]) for i in range(n)]
    f1 = [_ratio(2 * p * r, p + r) for p, r in zip(precision, recall)]
    supported = [recall[i] for i in range(n) if support[i] > 0]
    return EvalReport(
        classes=tuple(str(name) for name in class_names),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
        accuracy=float(tp.sum() / confusion.sum()),
        macro_f1=float(np.mean(f1)),
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        balanced_accuracy=float(np.mean(supported)) if supported else 0.0,
    )
