"""Provider fan-out. Location providers, the sensor pipeline, and the
window manager each assume a single downstream service; once a family is
virtualized they must deliver to every namespace instance, which is what
the hub does.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from typing import IO, Iterable, Iterator

from ..errors import BadRequest
from .ime import ImeInstance
from .location import LocationFix, LocationInstance
from .sensors import CHANNEL_ARITY, SensorFrame, SensorInstance

log = logging.getLogger("hypobroker.provider")


class ProviderHub:
    """Delivers every provider event to every attached instance of the
    matching family, in attach order, exactly once per event. Timestamps
    must be nondecreasing per stream."""

    def __init__(self):
        self._lock = threading.Lock()
        self.location_instances: list[LocationInstance] = []
        self.sensor_instances: list[SensorInstance] = []
        self.ime_instances: list[ImeInstance] = []
        self._last_fix_ts: int | None = None
        self._last_frame_ts: int | None = None

    def attach(self, instance) -> None:
        if isinstance(instance, LocationInstance):
            self.location_instances.append(instance)
        elif isinstance(instance, SensorInstance):
            self.sensor_instances.append(instance)
        elif isinstance(instance, ImeInstance):
            self.ime_instances.append(instance)

    def publish_fix(self, fix: LocationFix) -> None:
        with self._lock:
            if self._last_fix_ts is not None and fix.timestamp < self._last_fix_ts:
                raise ValueError(
                    f"fix timestamp went backwards: {fix.timestamp} < {self._last_fix_ts}"
                )
            self._last_fix_ts = fix.timestamp
            for instance in self.location_instances:
                instance.on_fix(fix)

    def publish_frame(self, frame: SensorFrame) -> None:
        with self._lock:
            if self._last_frame_ts is not None and frame.timestamp < self._last_frame_ts:
                raise ValueError(
                    f"frame timestamp went backwards: {frame.timestamp} < {self._last_frame_ts}"
                )
            self._last_frame_ts = frame.timestamp
            for instance in self.sensor_instances:
                instance.on_frame(frame)

    def push_focus(self, activity_id: str) -> None:
        with self._lock:
            for instance in self.ime_instances:
                instance.push_focus(activity_id)

    def apply_event(self, event: dict) -> None:
        kind = event.get("type")
        if kind == "fix":
            self.publish_fix(LocationFix.from_payload(event))
        elif kind == "frame":
            self.publish_frame(SensorFrame.from_payload(event))
        elif kind == "focus":
            activity = event.get("activity_id")
            if not isinstance(activity, str):
                raise BadRequest("focus event needs a string 'activity_id'")
            self.push_focus(activity)
        else:
            raise BadRequest(f"unknown provider event type {kind!r}")


def read_replay(lines: Iterable[str] | IO[str]) -> Iterator[dict]:
    """Yield provider events from a replay stream, one JSON object per
    line; blank lines are skipped. Raises BadRequest with the line number
    on malformed input."""
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BadRequest(f"replay line {lineno}: {exc}") from None
        if not isinstance(event, dict):
            raise BadRequest(f"replay line {lineno}: expected a JSON object")
        yield event


class SyntheticProvider(threading.Thread):
    """Scripted stand-in for real hardware: wanders around a base
    coordinate and emits a plausible steady sensor frame every interval."""

    def __init__(
        self,
        hub: ProviderHub,
        interval_s: float = 1.0,
        seed: int = 0,
        base_lat: float = 43.0481,
        base_lon: float = -76.1474,
    ):
        super().__init__(daemon=True, name="synthetic-provider")
        self.hub = hub
        self.interval_s = interval_s
        self._rng = random.Random(seed)
        self._lat = base_lat
        self._lon = base_lon
        self._stop = threading.Event()

    def stop(self) -> None:
        self._stop.set()

    def step(self, timestamp_ms: int | None = None) -> None:
        ts = timestamp_ms if timestamp_ms is not None else int(time.time() * 1000)
        self._lat = max(-90.0, min(90.0, self._lat + self._rng.uniform(-1e-4, 1e-4)))
        self._lon = max(-180.0, min(180.0, self._lon + self._rng.uniform(-1e-4, 1e-4)))
        self.hub.publish_fix(
            LocationFix(latitude=self._lat, longitude=self._lon, accuracy=5.0, timestamp=ts)
        )
        jitter = self._rng.uniform
        channels = {
            "acceleration": (jitter(-0.05, 0.05), jitter(-0.05, 0.05), 9.81 + jitter(-0.02, 0.02)),
            "magnetic": (22.0 + jitter(-0.5, 0.5), -4.0 + jitter(-0.5, 0.5), 41.0 + jitter(-0.5, 0.5)),
            "orientation": (
                (180.0 + jitter(-1.0, 1.0)) % 360.0,
                jitter(-1.0, 1.0),
                jitter(-1.0, 1.0),
            ),
            "gyro": (jitter(-0.01, 0.01), jitter(-0.01, 0.01), jitter(-0.01, 0.01)),
            "temperature": (21.0 + jitter(-0.1, 0.1),),
            "distance": (100.0,),
            "light": (320.0 + jitter(-5.0, 5.0),),
            "pressure": (1013.0 + jitter(-0.2, 0.2),),
            "humidity": (45.0 + jitter(-0.5, 0.5),),
        }
        self.hub.publish_frame(SensorFrame(channels=channels, timestamp=ts))

    def run(self) -> None:
        while not self._stop.is_set():
            try:
                self.step()
            except Exception:
                log.exception("synthetic provider step failed")
            self._stop.wait(self.interval_s)
