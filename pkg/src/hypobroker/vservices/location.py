"""Location service family. The global namespace passes provider fixes
through untouched; the random namespace replaces them with uniform draws
over the whole globe; the fuzzy namespace displaces them by an offset
drawn uniformly over a disk of configurable radius.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from ..errors import NoFixAvailable
from .base import ServiceInstance

EARTH_RADIUS_M = 6371000.0

LOCATION_MODES = ("global", "random", "fuzzy")
DEFAULT_FUZZ_RADIUS_M = 250.0


@dataclass(frozen=True)
class LocationFix:
    latitude: float
    longitude: float
    accuracy: float
    timestamp: int

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")
        if not self.accuracy > 0:
            raise ValueError("accuracy must be > 0")

    def to_payload(self) -> dict:
        return {
            "latitude": self.latitude,
            "longitude": self.longitude,
            "accuracy": self.accuracy,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "LocationFix":
        return cls(
            latitude=float(payload["latitude"]),
            longitude=float(payload["longitude"]),
            accuracy=float(payload["accuracy"]),
            timestamp=int(payload["timestamp"]),
        )


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def _displace(fix: LocationFix, distance_m: float, bearing_rad: float) -> LocationFix:
    phi1 = math.radians(fix.latitude)
    lam1 = math.radians(fix.longitude)
    delta = distance_m / EARTH_RADIUS_M
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(bearing_rad)
    )
    lam2 = lam1 + math.atan2(
        math.sin(bearing_rad) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    # normalize longitude to [-180, 180]
    lon = math.degrees(lam2)
    lon = (lon + 180.0) % 360.0 - 180.0
    return LocationFix(
        latitude=math.degrees(phi2),
        longitude=lon,
        accuracy=fix.accuracy,
        timestamp=fix.timestamp,
    )


def transform_location(
    mode: str,
    fix: LocationFix,
    rng: random.Random,
    fuzz_radius_m: float = DEFAULT_FUZZ_RADIUS_M,
) -> LocationFix:
    """Apply a namespace's semantics to one provider fix.

    global: identity. random: coordinates drawn uniformly over the valid
    ranges, timestamp preserved. fuzzy: offset drawn uniformly over the
    disk of radius ``fuzz_radius_m`` (r = R * sqrt(u)), timestamp and
    accuracy preserved. Deterministic given the rng state.
    """
    if mode == "global":
        return fix
    if mode == "random":
        return LocationFix(
            latitude=rng.uniform(-90.0, 90.0),
            longitude=rng.uniform(-180.0, 180.0),
            accuracy=fix.accuracy,
            timestamp=fix.timestamp,
        )
    if mode == "fuzzy":
        if not fuzz_radius_m > 0:
            raise ValueError("fuzz_radius_m must be > 0")
        distance = fuzz_radius_m * math.sqrt(rng.random())
        bearing = rng.uniform(0.0, 2.0 * math.pi)
        return _displace(fix, distance, bearing)
    raise ValueError(f"unknown location mode {mode!r}")


class LocationInstance(ServiceInstance):
    family = "location"
    exports = ("get_last_location", "get_stats")

    def __init__(
        self,
        name: str,
        namespace: int,
        mode: str = "global",
        rng: random.Random | None = None,
        fuzz_radius_m: float = DEFAULT_FUZZ_RADIUS_M,
    ):
        super().__init__(name, namespace)
        if mode not in LOCATION_MODES:
            raise ValueError(f"unknown location mode {mode!r}")
        self.mode = mode
        self.fuzz_radius_m = float(fuzz_radius_m)
        self._rng = rng or random.Random()
        self._last: LocationFix | None = None
        self._updates = 0

    def on_fix(self, fix: LocationFix) -> None:
        """Provider callback: transform and keep the fix as this
        namespace's last location."""
        with self._lock:
            self._last = transform_location(self.mode, fix, self._rng, self.fuzz_radius_m)
            self._updates += 1

    @property
    def update_count(self) -> int:
        return self._updates

    def op_get_last_location(self, sender, payload: dict) -> dict:
        if self._last is None:
            raise NoFixAvailable(f"{self.name}/{self.namespace} has no fix yet")
        return self._last.to_payload()

    def op_get_stats(self, sender, payload: dict) -> dict:
        return {"updates": self._updates}
