"""Battery trace domain types, CSV ingestion/serialization, and dataset splitting/balancing."""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import IO, TYPE_CHECKING, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

if TYPE_CHECKING:
    from voltspy.featurex import FeatureMatrix

logger = logging.getLogger(__name__)

CORE_CHANNELS = (
    "capacity_wh",
    "soc_pct",
    "energy_consumed_wh",
    "energy_regen_wh",
    "consumption_avg_mwh",
)
EXTRA_CHANNELS = ("soh_pct", "motor_power_w", "torque_nm", "rpm")
ALL_CHANNELS = CORE_CHANNELS + EXTRA_CHANNELS
CUMULATIVE_CHANNELS = ("energy_consumed_wh", "energy_regen_wh")

LABEL_NAMES = ("driver", "vehicle", "style", "occupancy", "aux_w", "origin", "destination")
STYLES = ("aggressive", "moderate", "defensive")
STYLE_ALIASES = MappingProxyType({"neutral": "moderate"})

SAMPLES_FILENAME = "samples.csv"
LABELS_FILENAME = "labels.csv"

_PARSER_LINE = re.compile(r"line (\d+)")


class TelemetryError(ValueError):
    """Raised when trace data violates the schema or a dataset operation's precondition."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ── Domain types ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class TelemetrySample:
    """One timestamped reading of the battery channels."""

    t: float
    capacity_wh: float
    soc_pct: float
    energy_consumed_wh: float
    energy_regen_wh: float
    consumption_avg_mwh: float
    soh_pct: float | None = None
    motor_power_w: float | None = None
    torque_nm: float | None = None
    rpm: float | None = None

    def __post_init__(self) -> None:
        if self.t < 0:
            raise TelemetryError(f"t must be non-negative, got {self.t}")
        if not self.capacity_wh > 0:
            raise TelemetryError(f"capacity_wh must be positive, got {self.capacity_wh}")
        if not 0.0 <= self.soc_pct <= 100.0:
            raise TelemetryError(f"soc_pct must be within [0, 100], got {self.soc_pct}")
        if self.soh_pct is not None and not 0.0 <= self.soh_pct <= 100.0:
            raise TelemetryError(f"soh_pct must be within [0, 100], got {self.soh_pct}")


@dataclass(frozen=True)
class TripLabels:
    """Ground truth for one trip; every field is optional."""

    driver: str | None = None
    vehicle: str | None = None
    style: str | None = None
    occupancy: int | None = None
    aux_w: int | None = None
    origin: str | None = None
    destination: str | None = None

    def __post_init__(self) -> None:
        if self.style is not None:
            style = STYLE_ALIASES.get(self.style, self.style)
            if style not in STYLES:
                raise TelemetryError(f"style must be one of {STYLES}, got {self.style!r}")
            object.__setattr__(self, "style", style)
        if self.occupancy is not None and not 1 <= self.occupancy <= 5:
            raise TelemetryError(f"occupancy must be within [1, 5], got {self.occupancy}")
        if self.aux_w is not None and self.aux_w < 0:
            raise TelemetryError(f"aux_w must be non-negative, got {self.aux_w}")

    def get(self, name: str) -> str | None:
        """Return the label as its canonical string class name, or None when absent."""
        if name not in LABEL_NAMES:
            raise TelemetryError(f"Unknown label {name!r}; expected one of {LABEL_NAMES}")
        value = getattr(self, name)
        return None if value is None else str(value)

    def present(self) -> frozenset[str]:
        return frozenset(name for name in LABEL_NAMES if getattr(self, name) is not None)


@dataclass(frozen=True, eq=False)
class Trip:
    """Ordered samples of one trip, stored column-wise, plus its labels."""

    trip_id: str
    t: np.ndarray
    channels: Mapping[str, np.ndarray]
    labels: TripLabels = field(default_factory=TripLabels)

    def __post_init__(self) -> None:
        t = _frozen_array(self.t)
        n = len(t)
        missing = [name for name in CORE_CHANNELS if name not in self.channels]
        if missing:
            raise TelemetryError(f"trip {self.trip_id!r} lacks core channels {missing}")
        channels: dict[str, np.ndarray] = {}
        for name in ALL_CHANNELS:
            if name not in self.channels:
                continue
            values = _frozen_array(self.channels[name])
            if len(values) != n:
                raise TelemetryError(
                    f"trip {self.trip_id!r} channel {name} has {len(values)} values, expected {n}"
                )
            channels[name] = values
        if n and np.any(t < 0):
            raise TelemetryError(f"trip {self.trip_id!r} has negative timestamps")
        if n > 1 and np.any(np.diff(t) <= 0):
            raise TelemetryError(f"trip {self.trip_id!r} timestamps are not strictly increasing")
        for name in CUMULATIVE_CHANNELS:
            if n > 1 and np.any(np.diff(channels[name]) < 0):
                raise TelemetryError(f"trip {self.trip_id!r} channel {name} decreases")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "channels", MappingProxyType(channels))

    @classmethod
    def from_samples(
        cls, trip_id: str, samples: Sequence[TelemetrySample], labels: TripLabels | None = None,
    ) -> "Trip":
        present = [
            name for name in EXTRA_CHANNELS
            if samples and all(getattr(s, name) is not None for s in samples)
        ]
        columns = {
            name: np.array([getattr(s, name) for s in samples], dtype=float)
            for name in CORE_CHANNELS + tuple(present)
        }
        t = np.array([s.t for s in samples], dtype=float)
        return cls(trip_id=trip_id, t=t, channels=columns, labels=labels or TripLabels())

    @property
    def samples(self) -> tuple[TelemetrySample, ...]:
        names = list(self.channels)
        return tuple(
            TelemetrySample(t=float(self.t[i]), **{name: float(self.channels[name][i]) for name in names})
            for i in range(len(self))
        )

    def channel_names(self) -> tuple[str, ...]:
        return tuple(self.channels)

    def matrix(self, channels: Sequence[str]) -> np.ndarray:
        """Return a (samples, channels) float array in the requested channel order."""
        if not channels:
            return np.empty((len(self), 0))
        return np.column_stack([self.channels[name] for name in channels])

    def select_channels(self, keep: Sequence[str]) -> "Trip":
        """Return a copy without the extras not listed in ``keep`` (core channels always stay)."""
        kept = {name: values for name, values in self.channels.items()
                if name in CORE_CHANNELS or name in keep}
        return Trip(self.trip_id, self.t, kept, self.labels)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trip):
            return NotImplemented
        return (
            self.trip_id == other.trip_id
            and self.labels == other.labels
            and set(self.channels) == set(other.channels)
            and np.array_equal(self.t, other.t)
            and all(np.array_equal(self.channels[n], other.channels[n]) for n in self.channels)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of trips with unique ids."""

    trips: tuple[Trip, ...]
    label_schema: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        trips = tuple(self.trips)
        seen: set[str] = set()
        duplicates: set[str] = set()
        for trip in trips:
            if trip.trip_id in seen:
                duplicates.add(trip.trip_id)
            seen.add(trip.trip_id)
        if duplicates:
            duplicates = sorted(duplicates)
            raise TelemetryError(f"duplicate trip ids: {duplicates[:10]}")
        object.__setattr__(self, "trips", trips)
        if not self.label_schema:
            schema = frozenset().union(*(trip.labels.present() for trip in trips)) if trips else frozenset()
            object.__setattr__(self, "label_schema", schema)

    def __len__(self) -> int:
        return len(self.trips)

    def __iter__(self) -> Iterator[Trip]:
        return iter(self.trips)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.label_schema == other.label_schema and self.trips == other.trips

    __hash__ = None  # type: ignore[assignment]

    def by_id(self, trip_id: str) -> Trip:
        for trip in self.trips:
            if trip.trip_id == trip_id:
                return trip
        raise KeyError(trip_id)


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


# ── Ordering helpers ─────────────────────────────────────────────────


def class_sort_key(name: str) -> tuple[int, float, str]:
    """Numeric class names order numerically ("500" < "1000"), others lexicographically."""
    try:
        return (0, float(name), name)
    except ValueError:
        return (1, 0.0, name)


def ordered_classes(labels: Sequence[str]) -> tuple[str, ...]:
    return tuple(sorted(set(labels), key=class_sort_key))


def label_histogram(labels: Sequence[str]) -> dict[str, int]:
    """Return {class: count} in canonical class order."""
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    return {name: counts[name] for name in sorted(counts, key=class_sort_key)}


def common_channels(dataset: Dataset) -> tuple[str, ...]:
    """Channels present in every trip, core first then extras, in schema order."""
    if not dataset.trips:
        return CORE_CHANNELS
    shared = set.intersection(*(set(trip.channels) for trip in dataset.trips))
    return tuple(name for name in ALL_CHANNELS if name in shared)


# ── CSV ingestion ────────────────────────────────────────────────────


def parse_trip_csv(data_stream: IO[str] | str | Path, labels_stream: IO[str] | str | Path) -> Dataset:
    """
    Parse a long-format samples CSV and a labels CSV into a Dataset.

    Rows of one trip must appear with strictly increasing ``t`` (trips may
    interleave). Unknown columns are ignored. Raises ``TelemetryError`` with
    the 1-based file line of the first offending row.
    """
    frame = _read_csv(data_stream, dtype={"trip_id": str}, keep_default_na=False, na_values=[""])
    missing = [col for col in ("trip_id", "t") + CORE_CHANNELS if col not in frame.columns]
    if missing:
        raise TelemetryError(f"samples CSV lacks required columns {missing}", line=1)

    lines = np.arange(len(frame)) + 2
    frame = frame.assign(_line=lines)
    if frame["trip_id"].isna().any():
        raise TelemetryError("empty trip_id", line=int(frame.loc[frame["trip_id"].isna(), "_line"].iloc[0]))

    extras = [name for name in EXTRA_CHANNELS if name in frame.columns]
    for name in ("t",) + CORE_CHANNELS + tuple(extras):
        frame[name] = _numeric_column(frame, name, required=name not in extras)
    _validate_rows(frame, extras)

    duplicated = frame.duplicated(subset=["trip_id", "t"], keep="first")
    if duplicated.any():
        row = frame.loc[duplicated].iloc[0]
        raise TelemetryError(f"duplicate sample trip_id={row['trip_id']!r} t={row['t']}", line=int(row["_line"]))

    label_map = _parse_labels(labels_stream)
    trips: list[Trip] = []
    for trip_id, group in frame.groupby("trip_id", sort=False):
        trips.append(_build_trip(str(trip_id), group, extras, label_map.pop(str(trip_id), TripLabels())))
    if label_map:
        logger.warning("Labels for unknown trips ignored count=%d first=%s", len(label_map), next(iter(label_map)))

    dataset = Dataset(tuple(trips))
    logger.info(
        "Parsed dataset trips=%d samples=%d labels=%s",
        len(dataset), len(frame), ",".join(sorted(dataset.label_schema)),
    )
    return dataset


def load_dataset(data_dir: str | Path) -> Dataset:
    """Read ``samples.csv`` and ``labels.csv`` from a directory."""
    data_dir = Path(data_dir)
    return parse_trip_csv(data_dir / SAMPLES_FILENAME, data_dir / LABELS_FILENAME)


def _read_csv(source: IO[str] | str | Path, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(source, encoding="utf-8", skipinitialspace=True, **kwargs)
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        raise TelemetryError(f"malformed CSV: {exc}", line=int(match.group(1)) if match else None) from exc
    except pd.errors.EmptyDataError as exc:
        raise TelemetryError("empty CSV input", line=1) from exc


def _numeric_column(frame: pd.DataFrame, name: str, *, required: bool) -> pd.Series:
    raw = frame[name]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & raw.notna()
    if required:
        bad |= raw.isna()
    bad |= np.isinf(values.fillna(0.0))
    if bad.any():
        line = int(frame.loc[bad, "_line"].iloc[0])
        raise TelemetryError(f"column {name} has a missing or non-numeric value {raw[bad].iloc[0]!r}", line=line)
    return values.astype(float)


def _validate_rows(frame: pd.DataFrame, extras: list[str]) -> None:
    checks = [
        (frame["t"] < 0, "t must be non-negative"),
        (frame["capacity_wh"] <= 0, "capacity_wh must be positive"),
        ((frame["soc_pct"] < 0) | (frame["soc_pct"] > 100), "soc_pct must be within [0, 100]"),
    ]
    if "soh_pct" in extras:
        soh = frame["soh_pct"]
        checks.append((soh.notna() & ((soh < 0) | (soh > 100)), "soh_pct must be within [0, 100]"))
    for mask, message in checks:
        if mask.any():
            row = frame.loc[mask].iloc[0]
            raise TelemetryError(f"{message} (trip_id={row['trip_id']!r} t={row['t']})", line=int(row["_line"]))


def _build_trip(trip_id: str, group: pd.DataFrame, extras: list[str], labels: TripLabels) -> Trip:
    lines = group["_line"].to_numpy()
    if len(group) < 2:
        raise TelemetryError(f"trip {trip_id!r} has fewer than 2 samples", line=int(lines[0]))
    t = group["t"].to_numpy(dtype=float)
    step = np.diff(t)
    if np.any(step <= 0):
        bad = int(np.flatnonzero(step <= 0)[0]) + 1
        raise TelemetryError(f"trip {trip_id!r} timestamps are not increasing", line=int(lines[bad]))
    for name in CUMULATIVE_CHANNELS:
        drops = np.flatnonzero(np.diff(group[name].to_numpy()) < 0)
        if drops.size:
            raise TelemetryError(f"trip {trip_id!r} cumulative {name} decreases", line=int(lines[drops[0] + 1]))

    channels = {name: group[name].to_numpy(dtype=float) for name in CORE_CHANNELS}
    for name in extras:
        column = group[name]
        if column.isna().all():
            continue
        if column.isna().any():
            line = int(group.loc[column.isna(), "_line"].iloc[0])
            raise TelemetryError(f"trip {trip_id!r} has a partially empty {name} column", line=line)
        channels[name] = column.to_numpy(dtype=float)
    return Trip(trip_id=trip_id, t=t, channels=channels, labels=labels)


def _parse_labels(labels_stream: IO[str] | str | Path) -> dict[str, TripLabels]:
    frame = _read_csv(labels_stream, dtype=str, keep_default_na=False)
    if "trip_id" not in frame.columns:
        raise TelemetryError("labels CSV lacks a trip_id column", line=1)
    columns = [name for name in LABEL_NAMES if name in frame.columns]
    result: dict[str, TripLabels] = {}
    for position, record in enumerate(frame.to_dict("records")):
        line = position + 2
        trip_id = str(record["trip_id"]).strip()
        if not trip_id:
            raise TelemetryError("empty trip_id", line=line)
        if trip_id in result:
            raise TelemetryError(f"duplicate labels for trip {trip_id!r}", line=line)
        values = {name: str(record[name]).strip() or None for name in columns}
        if all(value is None for value in values.values()):
            raise TelemetryError(f"trip {trip_id!r} carries no label", line=line)
        try:
            result[trip_id] = TripLabels(
                driver=values.get("driver"),
                vehicle=values.get("vehicle"),
                style=values["style"].lower() if values.get("style") else None,
                occupancy=_int_label(values.get("occupancy"), "occupancy"),
                aux_w=_int_label(values.get("aux_w"), "aux_w"),
                origin=values.get("origin"),
                destination=values.get("destination"),
            )
        except TelemetryError as exc:
            raise TelemetryError(str(exc), line=line) from exc
    return result


def _int_label(raw: str | None, name: str) -> int | None:
    if raw is None:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise TelemetryError(f"{name} must be an integer, got {raw!r}")
    if not value.is_integer():
        raise TelemetryError(f"{name} must be an integer, got {raw!r}")
    return int(value)


# ── CSV serialization ────────────────────────────────────────────────


def write_trip_csv(dataset: Dataset, samples_path: str | Path, labels_path: str | Path) -> None:
    """Write a Dataset in the samples/labels CSV schema parse_trip_csv reads."""
    carried = set().union(*(trip.channels for trip in dataset.trips))
    extras = [name for name in EXTRA_CHANNELS if name in carried]
    frames = []
    for trip in dataset.trips:
        columns = {"trip_id": trip.trip_id, "t": trip.t}
        columns.update({name: trip.channels[name] for name in CORE_CHANNELS})
        # a trip without an extras channel leaves its cells empty
        columns.update({name: trip.channels.get(name, np.nan) for name in extras})
        frames.append(pd.DataFrame(columns))
    header = ["trip_id", "t", *CORE_CHANNELS, *extras]
    samples = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=header)
    samples.to_csv(samples_path, index=False, columns=header, lineterminator="\n")

    records = []
    for trip in dataset.trips:
        if not trip.labels.present():
            continue
        record = {"trip_id": trip.trip_id}
        record.update({name: trip.labels.get(name) or "" for name in LABEL_NAMES})
        records.append(record)
    pd.DataFrame(records, columns=["trip_id", *LABEL_NAMES]).to_csv(
        labels_path, index=False, lineterminator="\n",
    )
    logger.info("Wrote dataset trips=%d samples_path=%s", len(dataset), samples_path)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples_path, labels_path = out_dir / SAMPLES_FILENAME, out_dir / LABELS_FILENAME
    write_trip_csv(dataset, samples_path, labels_path)
    return samples_path, labels_path


# ── Splitting and balancing ──────────────────────────────────────────


def split_train_test(
    dataset_rows: "FeatureMatrix",
    ratio: float = 0.8,
    seed: int = 42,
    stratify: bool = True,
    groups: Sequence[str] | None = None,
) -> tuple["FeatureMatrix", "FeatureMatrix"]:
    """
    Partition rows into (train, test) with ``ratio`` of rows in train.

    With ``groups`` (one id per row, typically the trip id) whole groups go
    to one side and stratification runs over group labels.
    """
    if not 0.0 < ratio < 1.0:
        raise TelemetryError(f"ratio must be within (0, 1), got {ratio}")
    labels = np.asarray(dataset_rows.labels, dtype=object)
    rng = np.random.default_rng(seed)

    if groups is None:
        test_idx = _partition(labels, ratio, rng, stratify)
    else:
        group_ids = np.asarray(groups, dtype=object)
        if len(group_ids) != len(labels):
            raise TelemetryError(f"groups has {len(group_ids)} entries for {len(labels)} rows")
        per_group = pd.DataFrame({"group": group_ids, "label": labels}).groupby("group", sort=False)["label"]
        mixed = per_group.nunique()
        if (mixed > 1).any():
            raise TelemetryError(f"group {mixed[mixed > 1].index[0]!r} mixes labels")
        first = per_group.first()
        unique = first.index.to_numpy(dtype=object)
        group_labels = first.to_numpy(dtype=object)
        test_groups = unique[_partition(group_labels, ratio, rng, stratify)]
        test_idx = np.flatnonzero(np.isin(group_ids, test_groups))

    mask = np.zeros(len(labels), dtype=bool)
    mask[test_idx] = True
    return dataset_rows.take(np.flatnonzero(~mask)), dataset_rows.take(np.flatnonzero(mask))


def _partition(labels: np.ndarray, ratio: float, rng: np.random.Generator, stratify: bool) -> np.ndarray:
    if not stratify:
        n_test = _test_count(len(labels), ratio)
        return np.sort(rng.permutation(len(labels))[:n_test])
    histogram = label_histogram(list(labels))
    for name, count in histogram.items():
        if count < 2:
            raise TelemetryError(f"class {name!r} has only {count} row; cannot stratify")
    chosen = []
    for name, count in histogram.items():
        members = np.flatnonzero(labels == name)
        chosen.append(rng.permutation(members)[:_test_count(count, ratio)])
    return np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=int)


def _test_count(n: int, ratio: float) -> int:
    count = int(np.floor(n * (1.0 - ratio) + 0.5))
    if n >= 2:
        count = min(max(count, 1), n - 1)
    return count


def undersample_balance(rows: "FeatureMatrix", seed: int = 42) -> "FeatureMatrix":
    """Reduce every class to the minority-class count by seeded sampling without replacement."""
    if len(rows.labels) == 0:
        raise TelemetryError("cannot balance an empty matrix")
    labels = np.asarray(rows.labels, dtype=object)
    histogram = label_histogram(list(labels))
    keep_count = min(histogram.values())
    rng = np.random.default_rng(seed)
    kept = [
        rng.choice(np.flatnonzero(labels == name), size=keep_count, replace=False)
        for name in histogram
    ]
    logger.debug("Undersampled rows=%d -> %d per_class=%d", len(labels), keep_count * len(histogram), keep_count)
    return rows.take(np.sort(np.concatenate(kept)))
