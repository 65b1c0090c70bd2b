"""Sensor service family. Namespace semantics randomize a fixed subset of
channels and pass every other channel through bit-identical: the motion
variant overwrites gyro, magnetic, and orientation; the light variant
overwrites only light.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..errors import NoFixAvailable
from .base import ServiceInstance

# channel name -> vector arity; every frame carries all nine
CHANNEL_ARITY = {
    "acceleration": 3,
    "magnetic": 3,
    "orientation": 3,
    "gyro": 3,
    "temperature": 1,
    "distance": 1,
    "light": 1,
    "pressure": 1,
    "humidity": 1,
}

SENSOR_MODES = ("global", "motion_randomized", "light_randomized")

MOTION_CHANNELS = ("gyro", "magnetic", "orientation")
LIGHT_CHANNELS = ("light",)

DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "gyro": (-10.0, 10.0),
    "magnetic": (-100.0, 100.0),
    "orientation": (0.0, 360.0),
    "light": (0.0, 1000.0),
}


@dataclass(frozen=True)
class SensorFrame:
    channels: dict[str, tuple[float, ...]]
    timestamp: int

    def __post_init__(self) -> None:
        missing = set(CHANNEL_ARITY) - set(self.channels)
        extra = set(self.channels) - set(CHANNEL_ARITY)
        if missing or extra:
            raise ValueError(f"frame channels wrong: missing={sorted(missing)} extra={sorted(extra)}")
        for name, values in self.channels.items():
            if len(values) != CHANNEL_ARITY[name]:
                raise ValueError(f"channel {name!r} expects {CHANNEL_ARITY[name]} values, got {len(values)}")

    def to_payload(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "channels": {name: list(values) for name, values in self.channels.items()},
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SensorFrame":
        return cls(
            channels={name: tuple(float(v) for v in values) for name, values in payload["channels"].items()},
            timestamp=int(payload["timestamp"]),
        )


def transform_sensor_frame(
    mode: str,
    frame: SensorFrame,
    rng: random.Random,
    ranges: dict[str, tuple[float, float]] | None = None,
) -> SensorFrame:
    """Apply a namespace's semantics to one frame. Channels outside the
    mode's randomization set are passed through untouched; the timestamp is
    always preserved."""
    if mode == "global":
        return frame
    if mode == "motion_randomized":
        targets = MOTION_CHANNELS
    elif mode == "light_randomized":
        targets = LIGHT_CHANNELS
    else:
        raise ValueError(f"unknown sensor mode {mode!r}")
    bounds = {**DEFAULT_RANGES, **(ranges or {})}
    channels = dict(frame.channels)
    for name in targets:
        lo, hi = bounds[name]
        channels[name] = tuple(rng.uniform(lo, hi) for _ in range(CHANNEL_ARITY[name]))
    return SensorFrame(channels=channels, timestamp=frame.timestamp)


class SensorInstance(ServiceInstance):
    family = "sensors"
    exports = ("get_last_frame", "get_stats")

    def __init__(
        self,
        name: str,
        namespace: int,
        mode: str = "global",
        rng: random.Random | None = None,
        ranges: dict[str, tuple[float, float]] | None = None,
    ):
        super().__init__(name, namespace)
        if mode not in SENSOR_MODES:
            raise ValueError(f"unknown sensor mode {mode!r}")
        self.mode = mode
        self.ranges = dict(ranges or {})
        self._rng = rng or random.Random()
        self._last: SensorFrame | None = None
        self._updates = 0

    def on_frame(self, frame: SensorFrame) -> None:
        with self._lock:
            self._last = transform_sensor_frame(self.mode, frame, self._rng, self.ranges)
            self._updates += 1

    @property
    def update_count(self) -> int:
        return self._updates

    def op_get_last_frame(self, sender, payload: dict) -> dict:
        if self._last is None:
            raise NoFixAvailable(f"{self.name}/{self.namespace} has no frame yet")
        return self._last.to_payload()

    def op_get_stats(self, sender, payload: dict) -> dict:
        return {"updates": self._updates}
