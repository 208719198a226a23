"""Seeded generator of labelled battery traces over a vehicle / driver / route grid."""

import bisect
import json
import logging
import math
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
from numba import njit

from voltspy.presets import (
    AUX_LEVELS_W,
    DESK_ROUTES,
    FIELD_DRIVERS,
    FIELD_FLEET,
    FULL_AUX_LEVELS_W,
    OCCUPANCIES,
    OCCUPANT_MASS_KG,
    ROUTES,
    SIMULATED_FLEET,
    STYLE_PROFILES,
    VEHICLES,
    DriverProfile,
    RouteProfile,
    VehicleParams,
    presets_document,
)
from voltspy.telemetry import STYLES, Dataset, Trip, TripLabels

logger = logging.getLogger(__name__)

AIR_DENSITY = 1.225
GRAVITY = 9.81

DEFAULT_SAMPLE_PERIOD_S = 1.0
DEFAULT_MAX_DURATION_S = 1800.0
NOISE_TIME_CONSTANT_S = 5.0
SPEED_GAIN = 0.8
BRAKE_SHARE = 1.6
ARRIVAL_TOLERANCE_M = 1.0
MIN_MOTOR_SPEED = 0.5  # rad/s; torque reported as 0 below this

SCALES = ("desk", "full", "field")
DESK_NOISE_SEEDS = 3
FULL_NOISE_SEEDS = 9
FIELD_AUX_LEVELS_W = (0, 500)
PRESETS_FILENAME = "presets.json"


class SynthError(ValueError):
    """Raised on an invalid scenario, an empty grid, or a trip that would run the battery flat."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines one synthetic trip."""

    vehicle: VehicleParams
    driver: DriverProfile
    driver_id: str
    route: RouteProfile
    occupancy: int = 1
    aux_w: int = 0
    sample_period_s: float = DEFAULT_SAMPLE_PERIOD_S
    noise_seed: int = 0
    max_duration_s: float = DEFAULT_MAX_DURATION_S
    extras: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.occupancy <= 5:
            raise SynthError(f"occupancy must be within [1, 5], got {self.occupancy}")
        if self.aux_w < 0:
            raise SynthError(f"aux_w must be non-negative, got {self.aux_w}")
        if self.sample_period_s <= 0:
            raise SynthError(f"sample_period_s must be positive, got {self.sample_period_s}")
        if self.max_duration_s < self.sample_period_s:
            raise SynthError(f"max_duration_s must cover at least one period, got {self.max_duration_s}")
        if self.noise_seed < 0:
            raise SynthError(f"noise_seed must be non-negative, got {self.noise_seed}")

    @property
    def total_mass_kg(self) -> float:
        return self.vehicle.mass_kg + OCCUPANT_MASS_KG * self.occupancy

    @property
    def trip_id(self) -> str:
        return (
            f"{self.vehicle.name}-{self.driver_id}-{self.route.route_id}"
            f"-o{self.occupancy}-a{self.aux_w}-n{self.noise_seed}"
        )

    @property
    def labels(self) -> TripLabels:
        return TripLabels(
            driver=self.driver_id,
            vehicle=self.vehicle.name,
            style=self.driver.style,
            occupancy=self.occupancy,
            aux_w=self.aux_w,
            origin=self.route.origin,
            destination=self.route.destination,
        )


# ── Longitudinal dynamics ────────────────────────────────────────────


def traction_power(v, a, slope, vp: VehicleParams, total_mass: float):
    """Power at the wheels in W (negative while decelerating or descending)."""
    v = np.asarray(v, dtype=float)
    return (
        total_mass * np.asarray(a, dtype=float) * v
        + 0.5 * AIR_DENSITY * vp.drag_area_m2 * v ** 3
        + vp.rolling_coeff * total_mass * GRAVITY * v
        + total_mass * GRAVITY * np.sin(slope) * v
    )


def instantaneous_power(v, a, slope, vp: VehicleParams, total_mass: float, aux_w: float):
    """
    Battery-side power in W for scalars or equal-length arrays.

    Positive traction is drawn through the drivetrain efficiency, negative
    traction is recovered at the regen efficiency; auxiliary load is added on
    top. The cap keeping cumulative regen below cumulative consumption is
    applied at integration time.
    """
    if np.any(np.asarray(v) < 0):
        raise SynthError("speed must be non-negative")
    traction = traction_power(v, a, slope, vp, total_mass)
    power = np.where(traction >= 0, traction / vp.efficiency, vp.regen_efficiency * traction) + aux_w
    return float(power) if np.ndim(power) == 0 else power


@njit(cache=True)
def _integrate_energy(power, period):
    n = power.shape[0]
    consumed = np.zeros(n)
    regen = np.zeros(n)
    drawn = 0.0
    recovered = 0.0
    for i in range(1, n):
        step = 0.5 * (power[i - 1] + power[i]) * period / 3600.0
        if step >= 0.0:
            drawn += step
        else:
            recovered = min(recovered - step, drawn)
        consumed[i] = drawn
        regen[i] = recovered
    return consumed, regen


# ── Speed profile ────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class SpeedProfile:
    t: np.ndarray
    v: np.ndarray
    a: np.ndarray
    slope: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


@lru_cache(maxsize=2048)
def speed_profile(
    route: RouteProfile, driver: DriverProfile, period: float, max_duration_s: float, seed: int,
) -> SpeedProfile:
    """
    Drive ``route`` with a target-speed controller.

    The target is the segment limit scaled by the driver's multiplier and an
    Ornstein-Uhlenbeck noise factor, capped near the end so the car can stop
    at the driver's planning deceleration. The result depends only on the
    arguments, so every vehicle / occupancy / aux variant reuses it.
    """
    rng = np.random.default_rng(seed)
    boundaries = list(np.cumsum([s.length_m for s in route.segments]))
    limits = [s.speed_limit_ms for s in route.segments]
    slopes = [s.slope_rad for s in route.segments]
    total = boundaries[-1]

    n_max = int(math.floor(max_duration_s / period + 1e-9)) + 1
    decay = math.exp(-period / NOISE_TIME_CONSTANT_S)
    shocks = rng.standard_normal(n_max) * math.sqrt(1.0 - decay ** 2)
    accel_limit = driver.aggressiveness
    brake_limit = BRAKE_SHARE * driver.aggressiveness
    planning = 0.5 * brake_limit

    v = np.zeros(n_max)
    a = np.zeros(n_max)
    grade = np.zeros(n_max)
    position = 0.0
    noise = 0.0
    count = n_max
    for i in range(n_max):
        index = min(bisect.bisect_right(boundaries, position), len(boundaries) - 1)
        grade[i] = slopes[index]
        remaining = total - position
        if remaining <= ARRIVAL_TOLERANCE_M or i == n_max - 1:
            count = i + 1
            break
        noise = noise * decay + shocks[i]
        target = limits[index] * driver.speed_multiplier * max(0.0, 1.0 + driver.noise_amplitude * noise)
        target = min(target, math.sqrt(2.0 * planning * remaining))
        accel = min(max(SPEED_GAIN * (target - v[i]), -brake_limit), accel_limit)
        v_next = max(0.0, v[i] + accel * period)
        a[i] = (v_next - v[i]) / period
        v[i + 1] = v_next
        position += 0.5 * (v[i] + v_next) * period

    arrays = [np.arange(count) * period, v[:count], a[:count], grade[:count]]
    for array in arrays:
        array.setflags(write=False)
    return SpeedProfile(*arrays)


# ── Trips and datasets ───────────────────────────────────────────────


def profile_seed(master_seed: int, cfg: ScenarioConfig) -> int:
    """Per-config seed; depends on the route, the driver and the noise index only."""
    if master_seed < 0:
        raise SynthError(f"master seed must be non-negative, got {master_seed}")
    key = [
        master_seed,
        cfg.noise_seed,
        zlib.crc32(cfg.route.route_id.encode()),
        zlib.crc32(cfg.driver_id.encode()),
    ]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def generate_trip(cfg: ScenarioConfig, master_seed: int | None = None) -> Trip:
    """
    Simulate one trip. Without ``master_seed`` the speed noise is seeded by
    ``cfg.noise_seed`` directly.
    """
    seed = cfg.noise_seed if master_seed is None else profile_seed(master_seed, cfg)
    profile = speed_profile(cfg.route, cfg.driver, cfg.sample_period_s, cfg.max_duration_s, seed)
    vp = cfg.vehicle
    power = np.atleast_1d(
        instantaneous_power(profile.v, profile.a, profile.slope, vp, cfg.total_mass_kg, cfg.aux_w)
    )
    consumed, regen = _integrate_energy(power, cfg.sample_period_s)
    net = consumed - regen
    capacity = vp.actual_capacity_wh
    if net.max() > capacity:
        raise SynthError(
            f"trip {cfg.trip_id} needs {net.max():.0f} Wh but {vp.name} holds {capacity:.0f} Wh; "
            f"use a vehicle preset with a larger capacity_wh"
        )
    hours = profile.t / 3600.0
    with np.errstate(divide="ignore", invalid="ignore"):
        average = np.where(hours > 0, 1000.0 * net / hours, 0.0)

    channels = {
        "capacity_wh": np.full(len(profile), capacity),
        "soc_pct": np.clip(100.0 * (1.0 - net / capacity), 0.0, 100.0),
        "energy_consumed_wh": consumed,
        "energy_regen_wh": regen,
        "consumption_avg_mwh": average,
    }
    if cfg.extras:
        channels.update(_drivetrain_channels(profile, cfg, power))
    return Trip(cfg.trip_id, profile.t, channels, cfg.labels)


def _drivetrain_channels(profile: SpeedProfile, cfg: ScenarioConfig, power: np.ndarray) -> dict[str, np.ndarray]:
    vp = cfg.vehicle
    motor_speed = profile.v / vp.wheel_radius_m * vp.gear_ratio
    traction = traction_power(profile.v, profile.a, profile.slope, vp, cfg.total_mass_kg)
    safe_speed = np.where(motor_speed > MIN_MOTOR_SPEED, motor_speed, 1.0)
    return {
        "soh_pct": np.full(len(profile), vp.soh_pct),
        "motor_power_w": power - cfg.aux_w,
        "torque_nm": np.where(motor_speed > MIN_MOTOR_SPEED, traction / safe_speed, 0.0),
        "rpm": motor_speed * 60.0 / (2.0 * math.pi),
    }


def generate_dataset(grid: Iterable[ScenarioConfig], master_seed: int = 42) -> Dataset:
    """One trip per config, each with a seed derived from ``master_seed``."""
    configs = list(grid)
    if not configs:
        raise SynthError("scenario grid is empty")
    seen: set[str] = set()
    for cfg in configs:
        if cfg.trip_id in seen:
            raise SynthError(f"duplicate trip id {cfg.trip_id!r} in grid")
        seen.add(cfg.trip_id)

    trips = []
    for position, cfg in enumerate(configs, start=1):
        trips.append(generate_trip(cfg, master_seed))
        if position % 1000 == 0:
            logger.debug("Generated trips=%d of=%d", position, len(configs))
    logger.info(
        "Generated dataset trips=%d samples=%d master_seed=%d",
        len(trips), sum(len(t) for t in trips), master_seed,
    )
    return Dataset(tuple(trips))


# ── Grids ────────────────────────────────────────────────────────────


def desk_grid() -> list[ScenarioConfig]:
    """5 vehicles x 3 styles x 5 occupancies x 4 aux levels x 7 routes x 3 noise seeds."""
    return [
        ScenarioConfig(VEHICLES[vehicle], STYLE_PROFILES[style], f"{style}_driver", route, occupancy, aux, noise_seed=n)
        for vehicle in SIMULATED_FLEET
        for style in STYLES
        for occupancy in OCCUPANCIES
        for aux in AUX_LEVELS_W
        for route in DESK_ROUTES
        for n in range(DESK_NOISE_SEEDS)
    ]


def full_grid() -> list[ScenarioConfig]:
    """5 vehicles x 3 styles x 5 occupancies x 3 aux levels x 21 routes x 9 wind/traffic seeds."""
    return [
        ScenarioConfig(VEHICLES[vehicle], STYLE_PROFILES[style], f"{style}_driver", route, occupancy, aux, noise_seed=n)
        for vehicle in SIMULATED_FLEET
        for style in STYLES
        for occupancy in OCCUPANCIES
        for aux in FULL_AUX_LEVELS_W
        for route in ROUTES
        for n in range(FULL_NOISE_SEEDS)
    ]


def field_grid() -> list[ScenarioConfig]:
    """Four named drivers on two field vehicles over the 7 desk routes, with drivetrain extras."""
    return [
        ScenarioConfig(VEHICLES[vehicle], profile, driver_id, route, 1, aux, noise_seed=n, extras=True)
        for vehicle in FIELD_FLEET
        for driver_id, profile in FIELD_DRIVERS.items()
        for aux in FIELD_AUX_LEVELS_W
        for route in DESK_ROUTES
        for n in range(DESK_NOISE_SEEDS)
    ]


def grid_for_scale(scale: str) -> list[ScenarioConfig]:
    if scale == "desk":
        return desk_grid()
    if scale == "full":
        return full_grid()
    if scale == "field":
        return field_grid()
    raise SynthError(f"scale must be one of {SCALES}, got {scale!r}")


def write_presets(path: str | Path) -> Path:
    """Write every preset as sorted, indented JSON."""
    path = Path(path)
    path.write_text(json.dumps(presets_document(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def distinct_signatures(routes: Iterable[RouteProfile]) -> bool:
    """True when no two routes share both their start and end signature."""
    seen: set[tuple] = set()
    for route in routes:
        key = (route.start_signature, route.end_signature)
        if key in seen:
            return False
        seen.add(key)
    return True
