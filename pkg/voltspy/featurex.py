"""Windowing, the fixed time-series feature catalog, and fit-on-train preprocessing."""

import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from voltspy.telemetry import Dataset, Trip, common_channels

logger = logging.getLogger(__name__)

WINDOW_MODES = ("per_sample", "full_trip", "fixed", "head", "tail")
FLOWS = ("per_sample", "catalog")

VARIANCE_EPS = 1e-12
STD_EPS = 1e-12
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
AUTOCORR_LAGS = (1, 2, 3, 4)
DFT_COEFFICIENTS = tuple(range(7))

CATALOG_FEATURES = (
    "mean", "variance", "skewness", "kurtosis", "minimum", "maximum",
    *(f"quantile_{q}" for q in QUANTILES),
    "abs_energy", "mean_abs_change", "count_above_mean", "linear_trend_slope",
    *(f"autocorrelation_{lag}" for lag in AUTOCORR_LAGS),
    *(f"fft_abs_{k}" for k in DFT_COEFFICIENTS),
    *(f"fft_angle_{k}" for k in DFT_COEFFICIENTS),
)
CATALOG_WIDTH = len(CATALOG_FEATURES)

META_COLUMNS = ("label", "trip_id", "window_idx")

FDR_Q = 0.05
MIN_SELECTED = 8
FALLBACK_SELECTED = 32


class FeatureError(ValueError):
    """Raised on invalid window specs, mismatched matrices, or unfit selections."""


# ── Windows ──────────────────────────────────────────────────────────


@dataclass(frozen=True)
class WindowSpec:
    """How a trip is cut into sample windows."""

    mode: str
    n: int = 1
    fraction: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in WINDOW_MODES:
            raise FeatureError(f"window mode must be one of {WINDOW_MODES}, got {self.mode!r}")
        if self.mode in ("fixed", "head", "tail") and self.n < 2:
            raise FeatureError(f"{self.mode} windows need n >= 2, got {self.n}")
        if not 0.0 < self.fraction <= 1.0:
            raise FeatureError(f"fraction must be within (0, 1], got {self.fraction}")

    @classmethod
    def per_sample(cls) -> "WindowSpec":
        return cls("per_sample")

    @classmethod
    def full_trip(cls) -> "WindowSpec":
        return cls("full_trip")

    @classmethod
    def fixed(cls, n: int) -> "WindowSpec":
        return cls("fixed", n=n)

    @classmethod
    def head(cls, fraction: float = 0.2, n: int = 5) -> "WindowSpec":
        return cls("head", n=n, fraction=fraction)

    @classmethod
    def tail(cls, fraction: float = 0.2, n: int = 5) -> "WindowSpec":
        return cls("tail", n=n, fraction=fraction)

    def describe(self) -> str:
        if self.mode == "fixed":
            return f"fixed({self.n})"
        if self.mode in ("head", "tail"):
            return f"{self.mode}({self.fraction:g}, {self.n})"
        return self.mode


def segment(trip: Trip, spec: WindowSpec) -> list[slice]:
    """Return sample windows of ``trip`` as slices in original order."""
    length = len(trip)
    if spec.mode == "per_sample":
        return [slice(i, i + 1) for i in range(length)]
    if spec.mode == "full_trip":
        return [slice(0, length)]
    if spec.mode == "fixed":
        return _fixed(0, length, spec.n)

    region = min(length, math.ceil(spec.fraction * length - 1e-9))
    start = 0 if spec.mode == "head" else length - region
    windows = _fixed(start, start + region, spec.n)
    if not windows:
        logger.debug("Region shorter than window trip_id=%s region=%d n=%d", trip.trip_id, region, spec.n)
    return windows


def _fixed(start: int, stop: int, n: int) -> list[slice]:
    count = (stop - start) // n
    return [slice(start + i * n, start + (i + 1) * n) for i in range(count)]


# ── Feature vectors and matrices ─────────────────────────────────────


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.names):
            raise FeatureError(f"{len(self.values)} values for {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise FeatureError("feature names must be unique")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Fixed-width named feature rows with per-row labels and (trip_id, window) provenance."""

    values: np.ndarray
    names: tuple[str, ...]
    labels: np.ndarray
    trip_ids: np.ndarray
    window_idx: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, ndmin=2)
        names = tuple(self.names)
        if values.size == 0:
            values = values.reshape(0, len(names))
        if values.shape[1] != len(names):
            raise FeatureError(f"matrix has {values.shape[1]} columns for {len(names)} names")
        if len(set(names)) != len(names):
            raise FeatureError("feature names must be unique")
        labels = np.array(self.labels, dtype=object).reshape(-1)
        trip_ids = np.array(self.trip_ids, dtype=object).reshape(-1)
        window_idx = np.array(self.window_idx, dtype=np.int64).reshape(-1)
        for column, what in ((labels, "labels"), (trip_ids, "trip_ids"), (window_idx, "window_idx")):
            if len(column) != len(values):
                raise FeatureError(f"{what} has {len(column)} entries for {len(values)} rows")
        for array in (values, labels, trip_ids, window_idx):
            array.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "trip_ids", trip_ids)
        object.__setattr__(self, "window_idx", window_idx)

    @classmethod
    def empty(cls, names: Sequence[str]) -> "FeatureMatrix":
        return cls(np.empty((0, len(names))), tuple(names), [], [], [])

    @classmethod
    def concat(cls, matrices: Sequence["FeatureMatrix"], names: Sequence[str] | None = None) -> "FeatureMatrix":
        matrices = [m for m in matrices if len(m)]
        if not matrices:
            return cls.empty(names or ())
        first = matrices[0].names
        for matrix in matrices[1:]:
            if matrix.names != first:
                raise FeatureError("cannot concatenate matrices with different feature names")
        return cls(
            np.vstack([m.values for m in matrices]),
            first,
            np.concatenate([m.labels for m in matrices]),
            np.concatenate([m.trip_ids for m in matrices]),
            np.concatenate([m.window_idx for m in matrices]),
        )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def width(self) -> int:
        return len(self.names)

    @property
    def rows(self) -> list[FeatureVector]:
        return [FeatureVector(tuple(map(float, row)), self.names) for row in self.values]

    @property
    def provenance(self) -> list[tuple[str, int]]:
        return list(zip(self.trip_ids.tolist(), self.window_idx.tolist()))

    def take(self, indices: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(self.values[idx], self.names, self.labels[idx], self.trip_ids[idx], self.window_idx[idx])

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        position = {name: i for i, name in enumerate(self.names)}
        unknown = [name for name in names if name not in position]
        if unknown:
            raise FeatureError(f"unknown features {unknown[:5]}")
        columns = [position[name] for name in names]
        return FeatureMatrix(self.values[:, columns], tuple(names), self.labels, self.trip_ids, self.window_idx)

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(values, self.names, self.labels, self.trip_ids, self.window_idx)

    def with_labels(self, labels: Sequence[str]) -> "FeatureMatrix":
        return FeatureMatrix(self.values, self.names, labels, self.trip_ids, self.window_idx)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.names))
        frame["label"] = self.labels
        frame["trip_id"] = self.trip_ids
        frame["window_idx"] = self.window_idx
        return frame

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureMatrix":
        frame = pd.read_csv(path, dtype={"label": str, "trip_id": str}, keep_default_na=False)
        missing = [col for col in META_COLUMNS if col not in frame.columns]
        if missing:
            raise FeatureError(f"feature CSV lacks columns {missing}")
        names = [col for col in frame.columns if col not in META_COLUMNS]
        values = frame[names].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
        return cls(values, tuple(names), frame["label"], frame["trip_id"], frame["window_idx"])


# ── Catalog ──────────────────────────────────────────────────────────


def catalog_names(channels: Sequence[str]) -> tuple[str, ...]:
    return tuple(f"{channel}__{feature}" for channel in channels for feature in CATALOG_FEATURES)


def catalog_block(block: np.ndarray) -> np.ndarray:
    """Compute the catalog for ``m`` equal-length series given as an (m, n) array."""
    block = np.asarray(block, dtype=float)
    m, n = block.shape
    out = np.zeros((m, CATALOG_WIDTH))
    if m == 0:
        return out

    mean = block.mean(axis=1)
    centered = block - mean[:, None]
    variance = (centered ** 2).mean(axis=1)
    flat = variance < VARIANCE_EPS
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        skewness = stats.skew(block, axis=1, bias=True)
        kurtosis = stats.kurtosis(block, axis=1, fisher=True, bias=True)
    col = 0
    for values in (
        mean, variance, np.where(flat, 0.0, skewness), np.where(flat, 0.0, kurtosis),
        block.min(axis=1), block.max(axis=1),
    ):
        out[:, col] = values
        col += 1

    out[:, col:col + len(QUANTILES)] = np.quantile(block, QUANTILES, axis=1).T
    col += len(QUANTILES)

    out[:, col] = (block ** 2).sum(axis=1)
    if n > 1:
        out[:, col + 1] = np.abs(np.diff(block, axis=1)).mean(axis=1)
        out[:, col + 3] = np.polyfit(np.arange(n, dtype=float), block.T, 1)[0]
    out[:, col + 2] = (block > mean[:, None]).sum(axis=1)
    col += 4

    for lag in AUTOCORR_LAGS:
        if lag < n:
            with np.errstate(all="ignore"):
                acf = (centered[:, :-lag] * centered[:, lag:]).sum(axis=1) / ((n - lag) * variance)
            out[:, col] = np.where(flat, 0.0, acf)
        col += 1

    spectrum = np.fft.fft(block, axis=1)
    dc = np.abs(spectrum[:, 0])
    for k in DFT_COEFFICIENTS:
        if k <= n // 2:
            magnitude = np.abs(spectrum[:, k])
            phase = np.where(magnitude > 1e-9 * (1.0 + dc), np.angle(spectrum[:, k]), 0.0)
            out[:, col + k] = magnitude
            out[:, col + len(DFT_COEFFICIENTS) + k] = phase
    return out


def extract_window_features(window: np.ndarray, channels: Sequence[str]) -> FeatureVector:
    """Catalog features of one window given as a (samples, channels) array."""
    window = np.asarray(window, dtype=float).reshape(-1, len(channels))
    if len(window) < 1:
        raise FeatureError("window must hold at least one sample")
    values = catalog_block(window.T)
    return FeatureVector(tuple(float(v) for v in values.reshape(-1)), catalog_names(channels))


def extract_per_sample(trip: Trip, channels: Sequence[str] | None = None, label: str | None = None) -> FeatureMatrix:
    """One row per sample holding the raw channel values."""
    channels = tuple(channels or trip.channel_names())
    n = len(trip)
    return FeatureMatrix(
        trip.matrix(channels),
        channels,
        [_row_label(trip, label)] * n,
        [trip.trip_id] * n,
        np.arange(n),
    )


def extract_catalog(
    trip: Trip, spec: WindowSpec, channels: Sequence[str] | None = None, label: str | None = None,
) -> FeatureMatrix:
    """Segment ``trip`` and compute the catalog for every window."""
    channels = tuple(channels or trip.channel_names())
    names = catalog_names(channels)
    windows = segment(trip, spec)
    if not windows:
        return FeatureMatrix.empty(names)
    data = trip.matrix(channels)
    lengths = {w.stop - w.start for w in windows}
    if len(lengths) == 1:
        stacked = np.stack([data[w] for w in windows])  # (windows, n, channels)
        rows = np.hstack([catalog_block(stacked[:, :, c]) for c in range(len(channels))])
    else:
        rows = np.vstack([
            np.hstack([catalog_block(data[w, c][None, :]) for c in range(len(channels))])
            for w in windows
        ])
    count = len(windows)
    return FeatureMatrix(rows, names, [_row_label(trip, label)] * count, [trip.trip_id] * count, np.arange(count))


def build_matrix(
    dataset: Dataset,
    flow: str,
    window: WindowSpec,
    label: str | None = None,
    channels: Sequence[str] | None = None,
) -> FeatureMatrix:
    """Run either extraction flow over every trip and stack the rows."""
    if flow not in FLOWS:
        raise FeatureError(f"flow must be one of {FLOWS}, got {flow!r}")
    channels = tuple(channels or common_channels(dataset))
    if flow == "per_sample":
        parts = [extract_per_sample(trip, channels, label) for trip in dataset]
        names = channels
    else:
        parts = [extract_catalog(trip, window, channels, label) for trip in dataset]
        names = catalog_names(channels)
        windowless = sum(1 for part in parts if len(part) == 0)
        if windowless:
            logger.warning("Trips without a full window window=%s count=%d", window.describe(), windowless)
    matrix = FeatureMatrix.concat(parts, names)
    logger.info(
        "Built feature matrix flow=%s window=%s rows=%d width=%d",
        flow, window.describe(), len(matrix), matrix.width,
    )
    return matrix


def _row_label(trip: Trip, label: str | None) -> str:
    if label is None:
        return ""
    return trip.labels.get(label) or ""


# ── Fit-on-train preprocessing ───────────────────────────────────────


def _check_names(fitted: tuple[str, ...], matrix: FeatureMatrix) -> None:
    if matrix.names != fitted:
        raise FeatureError("matrix feature names differ from the fitted ones")


@dataclass(frozen=True)
class Imputer:
    """Per-column train medians of finite values."""

    names: tuple[str, ...]
    medians: np.ndarray

    @classmethod
    def fit(cls, train: FeatureMatrix) -> "Imputer":
        if len(train) == 0:
            raise FeatureError("cannot fit imputation on an empty matrix")
        finite = np.where(np.isfinite(train.values), train.values, np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            medians = np.nanmedian(finite, axis=0)
        return cls(train.names, np.nan_to_num(medians, nan=0.0))

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        _check_names(self.names, matrix)
        values = matrix.values
        bad = ~np.isfinite(values)
        if not bad.any():
            return matrix
        return matrix.with_values(np.where(bad, self.medians[None, :], values))


@dataclass(frozen=True)
class Scaler:
    """Per-column train mean and population standard deviation."""

    names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, train: FeatureMatrix) -> "Scaler":
        if len(train) == 0:
            raise FeatureError("cannot fit standardization on an empty matrix")
        means = train.values.mean(axis=0)
        stds = train.values.std(axis=0)
        return cls(train.names, means, np.where(stds < STD_EPS, 1.0, stds))

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        _check_names(self.names, matrix)
        return matrix.with_values((matrix.values - self.means) / self.stds)


def impute_fit_apply(
    train: FeatureMatrix, others: Sequence[FeatureMatrix] = (),
) -> tuple[FeatureMatrix, list[FeatureMatrix]]:
    """Fill non-finite cells of every matrix with the train-column medians."""
    imputer = Imputer.fit(train)
    return imputer.apply(train), [imputer.apply(m) for m in others]


def standardize_fit_apply(
    train: FeatureMatrix, others: Sequence[FeatureMatrix] = (),
) -> tuple[FeatureMatrix, list[FeatureMatrix]]:
    scaler = Scaler.fit(train)
    return scaler.apply(train), [scaler.apply(m) for m in others]


def anova_pvalues(train: FeatureMatrix) -> np.ndarray:
    """One-way ANOVA F-test p-value of every column against the labels (NaN for constant columns)."""
    labels = np.asarray(train.labels, dtype=object)
    classes = list(dict.fromkeys(labels.tolist()))
    if len(classes) < 2:
        raise FeatureError("feature selection needs at least 2 classes")
    values = train.values
    n, k = len(values), len(classes)
    grand = values.mean(axis=0)
    between = np.zeros(values.shape[1])
    within = np.zeros(values.shape[1])
    for name in classes:
        group = values[labels == name]
        group_mean = group.mean(axis=0)
        between += len(group) * (group_mean - grand) ** 2
        within += ((group - group_mean) ** 2).sum(axis=0)

    constant = values.max(axis=0) == values.min(axis=0) if n else np.ones(values.shape[1], dtype=bool)
    pvalues = np.ones(values.shape[1])
    if n > k:
        with np.errstate(divide="ignore", invalid="ignore"):
            f_stat = (between / (k - 1)) / (within / (n - k))
        pvalues = stats.f.sf(f_stat, k - 1, n - k)
        pvalues = np.where(within <= 0.0, np.where(between > 0.0, 0.0, 1.0), pvalues)
    return np.where(constant, np.nan, pvalues)


def fdr_mask(pvalues: np.ndarray, q: float = FDR_Q) -> np.ndarray:
    """Benjamini–Hochberg pass/fail per p-value; NaN entries never pass."""
    mask = np.zeros(len(pvalues), dtype=bool)
    valid = ~np.isnan(pvalues)
    if valid.any():
        mask[valid] = stats.false_discovery_control(pvalues[valid], method="bh") <= q
    return mask


def select_features(train: FeatureMatrix, q: float = FDR_Q) -> tuple[str, ...]:
    """
    Names of the features to keep, in column order.

    Keeps every feature passing BH-FDR at ``q``; when fewer than 8 pass,
    falls back to the 32 smallest p-values. Constant columns never survive.
    """
    pvalues = anova_pvalues(train)
    keep = fdr_mask(pvalues, q)
    if keep.sum() < MIN_SELECTED:
        candidates = np.flatnonzero(~np.isnan(pvalues))
        ranked = candidates[np.argsort(pvalues[candidates], kind="stable")]
        keep = np.zeros(len(pvalues), dtype=bool)
        keep[ranked[:FALLBACK_SELECTED]] = True
    selected = tuple(name for name, kept in zip(train.names, keep) if kept)
    if not selected:
        raise FeatureError("every feature is constant on the training rows")
    logger.debug("Selected features count=%d of=%d", len(selected), train.width)
    return selected
