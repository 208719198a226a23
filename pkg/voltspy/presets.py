"""Synthetic analogs of the simulated and field fleets: vehicles, drivers, cities, routes.

Numbers are plausible published-spec ballparks, not reproductions of any
simulator's configuration.
"""

from dataclasses import asdict, dataclass
from typing import Any

OCCUPANT_MASS_KG = 75.0
AUX_LEVELS_W = (0, 500, 1000, 1500)
FULL_AUX_LEVELS_W = (0, 750, 1500)
OCCUPANCIES = (1, 2, 3, 4, 5)


class PresetError(ValueError):
    """Raised when a preset violates its physical ranges."""


@dataclass(frozen=True)
class VehicleParams:
    name: str
    mass_kg: float
    drag_area_m2: float
    rolling_coeff: float
    efficiency: float
    regen_efficiency: float
    capacity_wh: float
    wheel_radius_m: float = 0.33
    gear_ratio: float = 9.7
    soh_pct: float = 100.0

    def __post_init__(self) -> None:
        for name in ("mass_kg", "drag_area_m2", "rolling_coeff", "capacity_wh", "wheel_radius_m", "gear_ratio"):
            if getattr(self, name) <= 0:
                raise PresetError(f"{self.name}: {name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.efficiency <= 1.0:
            raise PresetError(f"{self.name}: efficiency must be within (0, 1], got {self.efficiency}")
        if not 0.0 <= self.regen_efficiency < 1.0:
            raise PresetError(f"{self.name}: regen_efficiency must be within [0, 1), got {self.regen_efficiency}")
        if not 0.0 < self.soh_pct <= 100.0:
            raise PresetError(f"{self.name}: soh_pct must be within (0, 100], got {self.soh_pct}")

    @property
    def actual_capacity_wh(self) -> float:
        return self.capacity_wh * self.soh_pct / 100.0


@dataclass(frozen=True)
class DriverProfile:
    style: str
    speed_multiplier: float
    aggressiveness: float
    noise_amplitude: float

    def __post_init__(self) -> None:
        if self.speed_multiplier <= 0 or self.aggressiveness <= 0 or self.noise_amplitude < 0:
            raise PresetError(f"driver profile out of range: {self}")


@dataclass(frozen=True)
class Segment:
    length_m: float
    speed_limit_ms: float
    slope_rad: float

    def reversed(self) -> "Segment":
        return Segment(self.length_m, self.speed_limit_ms, -self.slope_rad)


@dataclass(frozen=True)
class RouteProfile:
    route_id: str
    origin: str
    destination: str
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if len(self.segments) < 2:
            raise PresetError(f"route {self.route_id} needs at least 2 segments")
        if any(s.length_m <= 0 or s.speed_limit_ms < 0 for s in self.segments):
            raise PresetError(f"route {self.route_id} has an invalid segment")

    @property
    def length_m(self) -> float:
        return sum(s.length_m for s in self.segments)

    @property
    def start_signature(self) -> tuple[float, float]:
        return (self.segments[0].speed_limit_ms, self.segments[0].slope_rad)

    @property
    def end_signature(self) -> tuple[float, float]:
        return (self.segments[-1].speed_limit_ms, self.segments[-1].slope_rad)


# ── Vehicles ─────────────────────────────────────────────────────────

VEHICLES: dict[str, VehicleParams] = {
    v.name: v for v in (
        VehicleParams("bmw_i3", 1345.0, 0.69, 0.0085, 0.90, 0.65, 37900.0, 0.35, 9.7),
        VehicleParams("vw_id3", 1805.0, 0.63, 0.0090, 0.91, 0.70, 58000.0, 0.34, 11.5),
        VehicleParams("vw_id4", 2124.0, 0.72, 0.0100, 0.90, 0.68, 77000.0, 0.36, 11.5),
        VehicleParams("vw_eup", 1235.0, 0.64, 0.0095, 0.88, 0.60, 32300.0, 0.29, 8.2),
        VehicleParams("generic_suv", 2400.0, 0.92, 0.0110, 0.87, 0.62, 90000.0, 0.37, 9.0),
        VehicleParams("nissan_leaf_eplus", 1748.0, 0.64, 0.0095, 0.90, 0.66, 62000.0, 0.32, 8.2, 93.0),
        VehicleParams("dacia_spring", 970.0, 0.74, 0.0110, 0.86, 0.55, 26800.0, 0.28, 9.3, 97.0),
    )
}
SIMULATED_FLEET = ("bmw_i3", "vw_id3", "vw_id4", "vw_eup", "generic_suv")
FIELD_FLEET = ("nissan_leaf_eplus", "dacia_spring")

# ── Drivers ──────────────────────────────────────────────────────────

STYLE_PROFILES: dict[str, DriverProfile] = {
    "aggressive": DriverProfile("aggressive", 1.22, 2.8, 0.06),
    "moderate": DriverProfile("moderate", 1.00, 1.6, 0.04),
    "defensive": DriverProfile("defensive", 0.80, 0.9, 0.02),
}

FIELD_DRIVERS: dict[str, DriverProfile] = {
    "driver_a": DriverProfile("aggressive", 1.15, 2.4, 0.06),
    "driver_b": DriverProfile("moderate", 1.04, 1.8, 0.035),
    "driver_c": DriverProfile("moderate", 0.94, 1.2, 0.05),
    "driver_d": DriverProfile("defensive", 0.84, 0.8, 0.02),
}

# ── Cities and routes ────────────────────────────────────────────────

# Access road leaving each city; arriving uses the same road downhill/uphill reversed.
CITY_ACCESS: dict[str, Segment] = {
    "city_0": Segment(700.0, 8.3, 0.000),
    "city_1": Segment(900.0, 13.9, 0.030),
    "city_2": Segment(600.0, 11.1, -0.025),
    "city_3": Segment(1000.0, 16.7, 0.015),
    "city_4": Segment(800.0, 9.7, 0.045),
    "city_5": Segment(750.0, 19.4, -0.010),
    "city_6": Segment(650.0, 12.5, -0.040),
    "city_7": Segment(950.0, 15.3, 0.005),
    "city_8": Segment(850.0, 22.2, 0.020),
    "city_9": Segment(700.0, 10.0, -0.015),
}

_ROUTE_TABLE = (
    ("city_0", "city_1", ((1500.0, 16.7, 0.010), (1200.0, 13.9, -0.005))),
    ("city_2", "city_3", ((1800.0, 19.4, 0.000),)),
    ("city_4", "city_5", ((1300.0, 13.9, -0.020), (900.0, 16.7, 0.000))),
    ("city_6", "city_7", ((2000.0, 22.2, 0.005),)),
    ("city_8", "city_9", ((1100.0, 16.7, -0.010), (800.0, 11.1, 0.010))),
    ("city_1", "city_4", ((1600.0, 19.4, 0.015),)),
    ("city_3", "city_0", ((1400.0, 13.9, 0.000), (700.0, 16.7, -0.015))),
    ("city_5", "city_2", ((1700.0, 16.7, 0.010),)),
    ("city_7", "city_6", ((1900.0, 22.2, -0.005),)),
    ("city_9", "city_8", ((1000.0, 13.9, 0.010), (900.0, 16.7, 0.000))),
    ("city_0", "city_5", ((2100.0, 19.4, -0.005),)),
    ("city_2", "city_7", ((1200.0, 16.7, 0.020), (800.0, 13.9, 0.000))),
    ("city_4", "city_9", ((1500.0, 13.9, -0.010),)),
    ("city_6", "city_1", ((1300.0, 19.4, 0.000), (600.0, 11.1, 0.010))),
    ("city_8", "city_3", ((1800.0, 22.2, -0.010),)),
    ("city_1", "city_0", ((1200.0, 13.9, 0.005), (1500.0, 16.7, -0.010))),
    ("city_3", "city_2", ((1800.0, 19.4, 0.000),)),
    ("city_5", "city_4", ((900.0, 16.7, 0.000), (1300.0, 13.9, 0.020))),
    ("city_7", "city_8", ((1600.0, 19.4, 0.010),)),
    ("city_9", "city_6", ((1400.0, 16.7, 0.000), (500.0, 11.1, -0.020))),
    ("city_2", "city_9", ((2000.0, 19.4, 0.005),)),
)


def _route(index: int) -> RouteProfile:
    origin, destination, middle = _ROUTE_TABLE[index]
    segments = (
        CITY_ACCESS[origin],
        *(Segment(*values) for values in middle),
        CITY_ACCESS[destination].reversed(),
    )
    return RouteProfile(f"route_{index:02d}", origin, destination, segments)


ROUTES: tuple[RouteProfile, ...] = tuple(_route(i) for i in range(len(_ROUTE_TABLE)))
DESK_ROUTES = ROUTES[:7]


def presets_document(routes: tuple[RouteProfile, ...] = ROUTES) -> dict[str, Any]:
    """JSON-ready description of every preset, labelled as synthetic analogs."""
    return {
        "note": "synthetic analogs; not reproductions of any published dataset",
        "occupant_mass_kg": OCCUPANT_MASS_KG,
        "aux_levels_w": list(AUX_LEVELS_W),
        "vehicles": {name: asdict(v) for name, v in VEHICLES.items()},
        "style_profiles": {name: asdict(p) for name, p in STYLE_PROFILES.items()},
        "field_drivers": {name: asdict(p) for name, p in FIELD_DRIVERS.items()},
        "routes": {
            r.route_id: {"origin": r.origin, "destination": r.destination,
                         "segments": [asdict(s) for s in r.segments]}
            for r in routes
        },
    }
