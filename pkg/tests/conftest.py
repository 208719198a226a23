"""Shared test fixtures."""

import numpy as np
import pytest

from voltspy.presets import STYLE_PROFILES, VEHICLES, RouteProfile, Segment
from voltspy.synthgen import ScenarioConfig, generate_dataset
from voltspy.telemetry import STYLES, Trip, TripLabels, save_dataset

SHORT_ROUTES = (
    RouteProfile("short_a", "city_0", "city_1", (
        Segment(120.0, 8.3, 0.0), Segment(200.0, 13.9, 0.01), Segment(120.0, 13.9, -0.03),
    )),
    RouteProfile("short_b", "city_2", "city_3", (
        Segment(120.0, 11.1, -0.025), Segment(200.0, 16.7, 0.0), Segment(120.0, 16.7, -0.015),
    )),
)


def _tiny_grid() -> list[ScenarioConfig]:
    return [
        ScenarioConfig(VEHICLES[vehicle], STYLE_PROFILES[style], f"{style}_driver", route, occupancy, aux, noise_seed=n)
        for vehicle in ("bmw_i3", "vw_id4")
        for style in STYLES
        for occupancy in (1, 5)
        for aux in (0, 1500)
        for route in SHORT_ROUTES
        for n in range(2)
    ]


@pytest.fixture
def make_trip():
    """Build a schema-valid trip of ``n`` samples; channel overrides go in as keywords."""

    def factory(trip_id: str = "trip-1", n: int = 6, labels: TripLabels | None = None, **channels) -> Trip:
        t = np.arange(n, dtype=float)
        consumed = np.cumsum(np.full(n, 2.0)) - 2.0
        columns = {
            "capacity_wh": np.full(n, 40000.0),
            "soc_pct": 100.0 - consumed / 400.0,
            "energy_consumed_wh": consumed,
            "energy_regen_wh": np.zeros(n),
            "consumption_avg_mwh": np.where(t > 0, 1000.0 * consumed / np.maximum(t, 1.0) * 3600.0, 0.0),
        }
        columns.update({name: np.asarray(values, dtype=float) for name, values in channels.items()})
        return Trip(trip_id, t, columns, labels or TripLabels(style="moderate", vehicle="bmw_i3"))

    return factory


@pytest.fixture(scope="session")
def tiny_grid():
    """96 short trips: 2 vehicles x 3 styles x 2 occupancies x 2 aux levels x 2 routes x 2 seeds."""
    return _tiny_grid()


@pytest.fixture(scope="session")
def tiny_dataset(tiny_grid):
    return generate_dataset(tiny_grid, master_seed=7)


@pytest.fixture(scope="session")
def tiny_data_dir(tiny_dataset, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("tiny")
    save_dataset(tiny_dataset, out_dir)
    return out_dir
