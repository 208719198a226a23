"""Tests for voltspy.shield: window aggregation, stratified reduction and the sweep."""

import logging

import numpy as np
import pandas as pd
import pytest

from voltspy.attacks import canonical_spec, run_attack
from voltspy.featurex import FeatureMatrix
from voltspy.shield import (
    SWEEP_COLUMNS,
    ShieldError,
    SweepPoint,
    SweepResult,
    aggregate_dataset,
    aggregate_trip,
    stratified_reduce,
    sweep,
)
from voltspy.telemetry import CUMULATIVE_CHANNELS, Dataset, label_histogram


# ── Helpers ──────────────────────────────────────────────────────────


def _make_rows(histogram: dict[str, int]) -> FeatureMatrix:
    labels = [name for name, count in histogram.items() for _ in range(count)]
    n = len(labels)
    return FeatureMatrix(np.arange(n, dtype=float)[:, None], ("x",), labels, [f"r{i}" for i in range(n)], np.arange(n))


def _make_result(sizes=(10, 100), accuracies=(0.8, 0.4)) -> SweepResult:
    points = tuple(SweepPoint(size, "rf", acc, acc) for size, acc in zip(sizes, accuracies))
    return SweepResult("style", 42, tuple(sizes), points)


# ── Aggregation ──────────────────────────────────────────────────────


class TestAggregateTrip:
    def test_window_means(self, make_trip):
        trip = make_trip(n=4, energy_consumed_wh=[1.0, 2.0, 3.0, 4.0])
        aggregated = aggregate_trip(trip, 2)
        np.testing.assert_array_equal(aggregated.channels["energy_consumed_wh"], [1.5, 3.5])
        np.testing.assert_array_equal(aggregated.t, [0.5, 2.5])

    def test_size_one_is_identity(self, make_trip):
        trip = make_trip(n=5)
        assert aggregate_trip(trip, 1) == trip

    def test_remainder_is_dropped(self, make_trip):
        assert len(aggregate_trip(make_trip(n=23), 5)) == 4

    def test_short_trip_comes_back_empty_with_labels(self, make_trip):
        trip = make_trip(n=3)
        aggregated = aggregate_trip(trip, 5)
        assert len(aggregated) == 0
        assert aggregated.labels == trip.labels

    def test_cumulative_channels_stay_monotone(self, tiny_dataset):
        trip = tiny_dataset.trips[0]
        aggregated = aggregate_trip(trip, 7)
        for name in CUMULATIVE_CHANNELS:
            assert np.all(np.diff(aggregated.channels[name]) >= 0)

    def test_commutes_with_channel_selection(self, make_trip):
        trip = make_trip(n=12, rpm=np.arange(12.0), soh_pct=np.full(12, 95.0))
        left = aggregate_trip(trip.select_channels(["rpm"]), 4)
        right = aggregate_trip(trip, 4).select_channels(["rpm"])
        assert left == right

    def test_zero_size_raises(self, make_trip):
        with pytest.raises(ShieldError) as exc_info:
            aggregate_trip(make_trip(), 0)
        assert exc_info.value.size == 0


class TestAggregateDataset:
    def test_drops_emptied_trips(self, make_trip, caplog):
        dataset = Dataset((make_trip("long", n=12), make_trip("short", n=3)))
        with caplog.at_level(logging.WARNING, logger="voltspy.shield"):
            aggregated = aggregate_dataset(dataset, 5)
        assert [trip.trip_id for trip in aggregated] == ["long"]
        assert "count=1" in caplog.text

    def test_keeps_label_schema(self, make_trip):
        dataset = Dataset((make_trip("a", n=4), make_trip("b", n=1)))
        assert aggregate_dataset(dataset, 2).label_schema == dataset.label_schema


# ── Stratified reduction ─────────────────────────────────────────────


class TestStratifiedReduce:
    def test_full_target_returns_all_rows(self):
        rows = _make_rows({"a": 7, "b": 3})
        assert stratified_reduce(rows, 10, seed=1) is rows

    def test_even_classes(self):
        reduced = stratified_reduce(_make_rows({"a": 500, "b": 500}), 100, seed=1)
        assert label_histogram(reduced.labels.tolist()) == {"a": 50, "b": 50}

    def test_uneven_classes(self):
        reduced = stratified_reduce(_make_rows({"a": 90, "b": 10}), 50, seed=1)
        assert label_histogram(reduced.labels.tolist()) == {"a": 45, "b": 5}

    def test_every_class_keeps_a_row(self):
        reduced = stratified_reduce(_make_rows({"a": 99, "b": 1}), 10, seed=1)
        assert label_histogram(reduced.labels.tolist()) == {"a": 9, "b": 1}

    def test_same_seed_same_rows(self):
        rows = _make_rows({"a": 60, "b": 40, "c": 20})
        first = stratified_reduce(rows, 30, seed=6).trip_ids.tolist()
        second = stratified_reduce(rows, 30, seed=6).trip_ids.tolist()
        assert first == second

    def test_rows_keep_their_order(self):
        reduced = stratified_reduce(_make_rows({"a": 60, "b": 40}), 25, seed=2)
        assert list(reduced.window_idx) == sorted(reduced.window_idx)

    def test_target_above_row_count_raises(self):
        with pytest.raises(ShieldError, match="cannot reduce"):
            stratified_reduce(_make_rows({"a": 5, "b": 5}), 11)

    def test_target_below_class_count_raises(self):
        with pytest.raises(ShieldError, match="class count"):
            stratified_reduce(_make_rows({"a": 5, "b": 5, "c": 5}), 2)


# ── Sweep ────────────────────────────────────────────────────────────


class TestSweepResult:
    def test_accuracy_lookup(self):
        assert _make_result().accuracy(100, "rf") == 0.4

    def test_missing_point_raises(self):
        with pytest.raises(KeyError):
            _make_result().accuracy(50, "rf")

    def test_ratio_of_largest_to_smallest(self):
        assert _make_result().accuracy_ratio("rf") == pytest.approx(0.5)

    def test_sizes_must_ascend(self):
        with pytest.raises(ShieldError, match="ascending"):
            _make_result(sizes=(100, 10))

    def test_accuracy_range(self):
        with pytest.raises(ShieldError) as exc_info:
            _make_result(accuracies=(0.5, 1.5))
        assert exc_info.value.size == 100

    def test_csv_columns(self, tmp_path):
        path = tmp_path / "sweep.csv"
        _make_result().to_csv(path)
        frame = pd.read_csv(path)
        assert tuple(frame.columns) == SWEEP_COLUMNS
        assert frame["window_size"].tolist() == [10, 100]


class TestSweep:
    def test_size_one_matches_plain_attack(self, tiny_dataset):
        result = sweep(tiny_dataset, "vehicle", sizes=(1,), kinds=("dt",), seed=5)
        [plain] = run_attack(tiny_dataset, canonical_spec("vehicle"), ("dt",), seed=5)
        assert result.accuracy(1, "dt") == plain.report.accuracy

    def test_every_size_gets_the_same_row_count(self, tiny_dataset):
        result = sweep(tiny_dataset, "style", sizes=(3, 1), kinds=("dt",), seed=5)
        assert result.sizes == (1, 3)
        expected = sum(len(trip) // 3 for trip in tiny_dataset)
        assert result.rows_per_size == expected
        assert [p.window_size for p in result.points] == [1, 3]

    def test_max_rows_caps_the_target(self, tiny_dataset):
        result = sweep(tiny_dataset, "vehicle", sizes=(1, 2), kinds=("dt",), seed=5, max_rows=300)
        assert result.rows_per_size == 300

    def test_size_longer_than_every_trip(self, tiny_dataset):
        with pytest.raises(ShieldError) as exc_info:
            sweep(tiny_dataset, "style", sizes=(1, 100000), kinds=("dt",))
        assert exc_info.value.size == 100000

    def test_catalog_objective_rejected(self, tiny_dataset):
        with pytest.raises(ShieldError, match="per-sample"):
            sweep(tiny_dataset, "occupancy", sizes=(1,), kinds=("dt",))
