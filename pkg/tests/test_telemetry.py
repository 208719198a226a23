"""Tests for voltspy.telemetry: trace schema, CSV ingestion, splitting and balancing."""

import io
import logging

import numpy as np
import pytest

from voltspy.featurex import FeatureMatrix
from voltspy.telemetry import (
    Dataset,
    TelemetryError,
    TelemetrySample,
    Trip,
    TripLabels,
    class_sort_key,
    common_channels,
    label_histogram,
    load_dataset,
    ordered_classes,
    parse_trip_csv,
    save_dataset,
    split_train_test,
    undersample_balance,
)

HEADER = "trip_id,t,capacity_wh,soc_pct,energy_consumed_wh,energy_regen_wh,consumption_avg_mwh\n"
LABELS = "trip_id,driver,vehicle,style,occupancy,aux_w,origin,destination\n"


# ── Helpers ──────────────────────────────────────────────────────────


def _parse(samples: str, labels: str = LABELS + "a,d1,bmw_i3,moderate,1,0,city_0,city_1\n") -> Dataset:
    return parse_trip_csv(io.StringIO(samples), io.StringIO(labels))


def _make_rows(labels, trip_ids=None) -> FeatureMatrix:
    n = len(labels)
    return FeatureMatrix(
        np.arange(n, dtype=float)[:, None],
        ("x",),
        labels,
        trip_ids if trip_ids is not None else [f"r{i}" for i in range(n)],
        np.zeros(n, dtype=int),
    )


# ── Domain types ─────────────────────────────────────────────────────


class TestTelemetrySample:
    def test_valid_sample(self):
        sample = TelemetrySample(0.0, 40000.0, 100.0, 0.0, 0.0, 0.0)
        assert sample.soh_pct is None

    def test_soc_out_of_range_raises(self):
        with pytest.raises(TelemetryError, match="soc_pct"):
            TelemetrySample(0.0, 40000.0, 101.0, 0.0, 0.0, 0.0)

    def test_non_positive_capacity_raises(self):
        with pytest.raises(TelemetryError, match="capacity_wh"):
            TelemetrySample(0.0, 0.0, 50.0, 0.0, 0.0, 0.0)


class TestTripLabels:
    def test_neutral_is_moderate(self):
        assert TripLabels(style="neutral").style == "moderate"

    def test_unknown_style_raises(self):
        with pytest.raises(TelemetryError, match="style"):
            TripLabels(style="sporty")

    def test_occupancy_range(self):
        with pytest.raises(TelemetryError, match="occupancy"):
            TripLabels(occupancy=6)

    def test_get_returns_string_class(self):
        labels = TripLabels(occupancy=3, aux_w=1500)
        assert labels.get("occupancy") == "3"
        assert labels.get("aux_w") == "1500"
        assert labels.get("driver") is None

    def test_get_unknown_label_raises(self):
        with pytest.raises(TelemetryError, match="Unknown label"):
            TripLabels().get("colour")

    def test_present(self):
        assert TripLabels(vehicle="vw_id3", style="defensive").present() == {"vehicle", "style"}


class TestTrip:
    def test_missing_core_channel_raises(self):
        with pytest.raises(TelemetryError, match="core channels"):
            Trip("a", [0.0, 1.0], {"capacity_wh": [1.0, 1.0]})

    def test_non_increasing_time_raises(self, make_trip):
        trip = make_trip(n=3)
        with pytest.raises(TelemetryError, match="strictly increasing"):
            Trip("a", [0.0, 1.0, 1.0], dict(trip.channels))

    def test_decreasing_cumulative_raises(self, make_trip):
        with pytest.raises(TelemetryError, match="energy_regen_wh decreases"):
            make_trip(n=3, energy_regen_wh=[0.0, 1.0, 0.5])

    def test_arrays_are_read_only(self, make_trip):
        trip = make_trip()
        with pytest.raises(ValueError):
            trip.channels["soc_pct"][0] = 1.0

    def test_samples_round_trip(self, make_trip):
        trip = make_trip(n=4)
        rebuilt = Trip.from_samples(trip.trip_id, trip.samples, trip.labels)
        assert rebuilt == trip

    def test_select_channels_keeps_core(self, make_trip):
        trip = make_trip(n=3, rpm=[0.0, 100.0, 200.0], soh_pct=[95.0, 95.0, 95.0])
        kept = trip.select_channels(["rpm"])
        assert "rpm" in kept.channels
        assert "soh_pct" not in kept.channels
        assert "capacity_wh" in kept.channels

    def test_empty_trip_is_allowed(self):
        trip = Trip("e", [], {name: [] for name in (
            "capacity_wh", "soc_pct", "energy_consumed_wh", "energy_regen_wh", "consumption_avg_mwh",
        )})
        assert len(trip) == 0


class TestDataset:
    def test_duplicate_ids_raise(self, make_trip):
        with pytest.raises(TelemetryError, match="duplicate trip ids"):
            Dataset((make_trip("a"), make_trip("a")))

    def test_schema_is_union_of_labels(self, make_trip):
        dataset = Dataset((
            make_trip("a", labels=TripLabels(style="aggressive")),
            make_trip("b", labels=TripLabels(vehicle="vw_eup")),
        ))
        assert dataset.label_schema == {"style", "vehicle"}

    def test_by_id(self, make_trip):
        dataset = Dataset((make_trip("a"), make_trip("b")))
        assert dataset.by_id("b").trip_id == "b"
        with pytest.raises(KeyError):
            dataset.by_id("c")

    def test_common_channels(self, make_trip):
        dataset = Dataset((
            make_trip("a", n=2, rpm=[0.0, 1.0], soh_pct=[90.0, 90.0]),
            make_trip("b", n=2, rpm=[0.0, 1.0]),
        ))
        assert common_channels(dataset)[-1] == "rpm"
        assert "soh_pct" not in common_channels(dataset)


# ── Class ordering ───────────────────────────────────────────────────


class TestClassOrdering:
    def test_numeric_classes_order_numerically(self):
        assert ordered_classes(["1500", "500", "0", "1000"]) == ("0", "500", "1000", "1500")

    def test_text_classes_order_lexicographically(self):
        assert ordered_classes(["moderate", "aggressive", "defensive"]) == ("aggressive", "defensive", "moderate")

    def test_numbers_before_text(self):
        assert class_sort_key("10") < class_sort_key("abc")

    def test_histogram_is_ordered(self):
        assert list(label_histogram(["5", "10", "5"]).items()) == [("5", 2), ("10", 1)]


# ── CSV ingestion ────────────────────────────────────────────────────


class TestParseTripCsv:
    def test_minimal_file(self):
        dataset = _parse(HEADER + "a,0,40000,100,0,0,0\na,1,40000,99.5,2,0,7200\n")
        assert len(dataset) == 1
        trip = dataset.by_id("a")
        assert trip.labels.style == "moderate"
        assert trip.labels.occupancy == 1
        np.testing.assert_array_equal(trip.channels["soc_pct"], [100.0, 99.5])

    def test_interleaved_trips_and_unknown_columns(self):
        samples = (
            "trip_id,t,capacity_wh,soc_pct,energy_consumed_wh,energy_regen_wh,consumption_avg_mwh,speed_kmh\n"
            "a,0,40000,100,0,0,0,0\n"
            "b,0,50000,100,0,0,0,0\n"
            "a,1,40000,99,4,0,14400,30\n"
            "b,1,50000,99,5,0,18000,40\n"
        )
        labels = LABELS + "a,,,neutral,,,,\nb,,vw_id3,,,,,\n"
        dataset = _parse(samples, labels)
        assert [trip.trip_id for trip in dataset] == ["a", "b"]
        assert dataset.by_id("a").labels.style == "moderate"
        assert dataset.by_id("b").labels.style is None
        assert "speed_kmh" not in dataset.by_id("a").channels

    def test_soc_out_of_range_reports_line(self):
        samples = HEADER + "a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\na,2,40000,120,2,0,3600\n"
        with pytest.raises(TelemetryError) as exc_info:
            _parse(samples)
        assert exc_info.value.line == 4
        assert "soc_pct" in str(exc_info.value)

    def test_duplicate_sample_reports_line(self):
        samples = HEADER + "a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\na,1,40000,99,1,0,3600\n"
        with pytest.raises(TelemetryError) as exc_info:
            _parse(samples)
        assert exc_info.value.line == 4

    def test_decreasing_time_reports_line(self):
        samples = HEADER + "a,0,40000,100,0,0,0\na,2,40000,99,1,0,1800\na,1,40000,99,2,0,7200\n"
        with pytest.raises(TelemetryError) as exc_info:
            _parse(samples)
        assert exc_info.value.line == 4

    def test_non_numeric_value_reports_line(self):
        samples = HEADER + "a,0,40000,100,0,0,0\na,1,40000,abc,1,0,3600\n"
        with pytest.raises(TelemetryError) as exc_info:
            _parse(samples)
        assert exc_info.value.line == 3

    def test_decreasing_consumed_reports_line(self):
        samples = HEADER + "a,0,40000,100,5,0,0\na,1,40000,99,4,0,3600\n"
        with pytest.raises(TelemetryError) as exc_info:
            _parse(samples)
        assert exc_info.value.line == 3

    def test_single_sample_trip_raises(self):
        with pytest.raises(TelemetryError, match="fewer than 2 samples"):
            _parse(HEADER + "a,0,40000,100,0,0,0\n")

    def test_missing_column_raises(self):
        with pytest.raises(TelemetryError) as exc_info:
            _parse("trip_id,t,capacity_wh\na,0,1\n")
        assert exc_info.value.line == 1

    def test_label_row_without_labels_raises(self):
        with pytest.raises(TelemetryError, match="carries no label"):
            _parse(HEADER + "a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\n", LABELS + "a,,,,,,,\n")

    def test_labels_for_unknown_trips_are_ignored(self, caplog):
        labels = LABELS + "a,d1,,,,,,\nghost,d2,,,,,,\n"
        with caplog.at_level(logging.WARNING, logger="voltspy.telemetry"):
            dataset = _parse(HEADER + "a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\n", labels)
        assert len(dataset) == 1
        assert "unknown trips" in caplog.text

    def test_trip_without_labels_row(self):
        samples = HEADER + "a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\nb,0,4,100,0,0,0\nb,1,4,99,0,0,0\n"
        dataset = _parse(samples)
        assert dataset.by_id("b").labels == TripLabels()

    @pytest.mark.parametrize("trip_id", ["NA", "null", "nan", "N/A"])
    def test_na_like_trip_ids_are_plain_strings(self, trip_id):
        samples = HEADER + f"a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\n{trip_id},0,4,100,0,0,0\n{trip_id},1,4,99,0,0,0\n"
        labels = LABELS + f"a,d1,,,,,,\n{trip_id},d2,,,,,,\n"
        dataset = _parse(samples, labels)
        assert dataset.by_id(trip_id).labels.driver == "d2"

    def test_extras_are_parsed(self):
        samples = (
            HEADER.rstrip("\n") + ",soh_pct,rpm\n"
            "a,0,40000,100,0,0,0,95,0\n"
            "a,1,40000,99,1,0,3600,95,1200\n"
        )
        trip = _parse(samples).by_id("a")
        np.testing.assert_array_equal(trip.channels["rpm"], [0.0, 1200.0])


class TestSaveAndLoad:
    def test_written_dataset_reads_back_equal(self, make_trip, tmp_path):
        dataset = Dataset((
            make_trip(
                "a", n=5, labels=TripLabels(driver="d1", vehicle="bmw_i3", style="aggressive", occupancy=2),
                soc_pct=[100.0, 99.5, 99.0, 98.5, 98.0],
            ),
            make_trip("b", n=3, labels=TripLabels(vehicle="vw_id4", aux_w=500), soc_pct=[100.0, 99.5, 99.0]),
        ))
        save_dataset(dataset, tmp_path)
        assert load_dataset(tmp_path) == dataset

    def test_unlabelled_trip_reads_back_unlabelled(self, tmp_path):
        samples = HEADER + "a,0,40000,100,0,0,0\na,1,40000,99,1,0,3600\nb,0,4,100,0,0,0\nb,1,4,99,0,0,0\n"
        dataset = _parse(samples)
        save_dataset(dataset, tmp_path)
        rows = (tmp_path / "labels.csv").read_text().splitlines()[1:]
        assert [row.split(",")[0] for row in rows] == ["a"]
        again = load_dataset(tmp_path)
        assert again == dataset
        assert again.by_id("b").labels == TripLabels()

    def test_extras_carried_by_some_trips_survive(self, make_trip, tmp_path):
        soc = [100.0, 99.5, 99.0]
        dataset = Dataset((
            make_trip("a", n=3, soc_pct=soc, soh_pct=[95.0, 95.0, 95.0]),
            make_trip("b", n=3, soc_pct=soc),
        ))
        save_dataset(dataset, tmp_path)
        again = load_dataset(tmp_path)
        assert again == dataset
        assert "soh_pct" in again.by_id("a").channels
        assert "soh_pct" not in again.by_id("b").channels


# ── Splitting and balancing ──────────────────────────────────────────


class TestSplitTrainTest:
    def test_ten_rows_split_eight_two(self):
        train, test = split_train_test(_make_rows(["a"] * 5 + ["b"] * 5), ratio=0.8, seed=1)
        assert len(train) == 8
        assert len(test) == 2

    def test_stratified_test_counts(self):
        labels = ["a"] * 40 + ["b"] * 30 + ["c"] * 20 + ["d"] * 10
        _, test = split_train_test(_make_rows(labels), ratio=0.8, seed=3)
        assert label_histogram(test.labels.tolist()) == {"a": 8, "b": 6, "c": 4, "d": 2}

    def test_partition_is_disjoint_and_covers(self):
        rows = _make_rows(["a"] * 13 + ["b"] * 9)
        train, test = split_train_test(rows, seed=5)
        ids = train.trip_ids.tolist() + test.trip_ids.tolist()
        assert sorted(ids) == sorted(rows.trip_ids.tolist())

    def test_same_seed_same_split(self):
        rows = _make_rows(["a"] * 20 + ["b"] * 20)
        first = split_train_test(rows, seed=9)[1].trip_ids.tolist()
        second = split_train_test(rows, seed=9)[1].trip_ids.tolist()
        assert first == second

    def test_singleton_class_raises(self):
        with pytest.raises(TelemetryError, match="cannot stratify"):
            split_train_test(_make_rows(["a"] * 5 + ["b"]))

    def test_invalid_ratio_raises(self):
        with pytest.raises(TelemetryError, match="ratio"):
            split_train_test(_make_rows(["a", "b"]), ratio=1.0)

    def test_groups_stay_on_one_side(self):
        trip_ids = [f"t{i // 3}" for i in range(60)]
        labels = ["a" if i // 3 % 2 else "b" for i in range(60)]
        train, test = split_train_test(_make_rows(labels, trip_ids), seed=2, groups=trip_ids)
        assert not set(train.trip_ids) & set(test.trip_ids)
        assert len(set(test.trip_ids)) == 4

    def test_group_with_mixed_labels_raises(self):
        with pytest.raises(TelemetryError, match="mixes labels"):
            split_train_test(_make_rows(["a", "b", "a", "b"], ["g", "g", "h", "h"]), groups=["g", "g", "h", "h"])


class TestUndersampleBalance:
    def test_reduces_to_minority(self):
        balanced = undersample_balance(_make_rows(["a"] * 90 + ["b"] * 10), seed=4)
        assert label_histogram(balanced.labels.tolist()) == {"a": 10, "b": 10}

    def test_keeps_row_order(self):
        balanced = undersample_balance(_make_rows(["a"] * 30 + ["b"] * 5), seed=4)
        assert list(balanced.values[:, 0]) == sorted(balanced.values[:, 0])

    def test_empty_raises(self):
        with pytest.raises(TelemetryError, match="empty"):
            undersample_balance(_make_rows([]))
