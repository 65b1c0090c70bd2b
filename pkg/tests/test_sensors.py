"""Sensor family tests. The per-channel diff oracle compares input and
output channel by channel and classifies each as passthrough or changed."""

import random

import pytest

from hypobroker.vservices.provider import ProviderHub
from hypobroker.vservices.sensors import (
    CHANNEL_ARITY,
    SensorFrame,
    SensorInstance,
    transform_sensor_frame,
)

MOTION = {"gyro", "magnetic", "orientation"}
LIGHT = {"light"}
ALL = set(CHANNEL_ARITY)


def make_frame(ts=1000, rng=None):
    rng = rng or random.Random(0)
    channels = {
        name: tuple(round(rng.uniform(-5, 5), 6) for _ in range(arity))
        for name, arity in CHANNEL_ARITY.items()
    }
    return SensorFrame(channels=channels, timestamp=ts)


def diff_channels(before: SensorFrame, after: SensorFrame) -> set:
    """Oracle: the set of channels whose values are not bit-identical."""
    return {name for name in CHANNEL_ARITY if before.channels[name] != after.channels[name]}


def test_frame_validation():
    with pytest.raises(ValueError):
        SensorFrame(channels={"gyro": (1.0, 2.0, 3.0)}, timestamp=0)
    bad = {name: tuple([0.0] * arity) for name, arity in CHANNEL_ARITY.items()}
    bad["light"] = (1.0, 2.0)
    with pytest.raises(ValueError):
        SensorFrame(channels=bad, timestamp=0)


def test_global_mode_is_identity():
    frame = make_frame()
    out = transform_sensor_frame("global", frame, random.Random(1))
    assert out == frame
    assert diff_channels(frame, out) == set()


def test_motion_randomized_changes_exactly_the_motion_channels():
    rng = random.Random(3)
    frame_rng = random.Random(10)
    for i in range(1000):
        frame = make_frame(ts=1000 + i, rng=frame_rng)
        out = transform_sensor_frame("motion_randomized", frame, rng)
        assert diff_channels(frame, out) == MOTION
        assert out.timestamp == frame.timestamp


def test_light_randomized_is_the_exact_complement_on_light():
    rng = random.Random(4)
    frame_rng = random.Random(11)
    for i in range(1000):
        frame = make_frame(ts=1000 + i, rng=frame_rng)
        out = transform_sensor_frame("light_randomized", frame, rng)
        assert diff_channels(frame, out) == LIGHT
        assert out.timestamp == frame.timestamp


def test_randomized_values_respect_configured_ranges():
    rng = random.Random(5)
    ranges = {"gyro": (-1.0, 1.0), "magnetic": (-2.0, 2.0), "orientation": (0.0, 10.0)}
    for _ in range(200):
        out = transform_sensor_frame("motion_randomized", make_frame(), rng, ranges)
        for name, (lo, hi) in ranges.items():
            assert all(lo <= v <= hi for v in out.channels[name])


def test_seeded_determinism():
    frame = make_frame()
    a = transform_sensor_frame("motion_randomized", frame, random.Random(9))
    b = transform_sensor_frame("motion_randomized", frame, random.Random(9))
    assert a == b


def test_instance_fanout_and_counters():
    hub = ProviderHub()
    instances = [
        SensorInstance("sensors", 0, mode="global"),
        SensorInstance("sensors", 1, mode="motion_randomized", rng=random.Random(1)),
        SensorInstance("sensors", 2, mode="light_randomized", rng=random.Random(2)),
    ]
    for inst in instances:
        hub.attach(inst)
    frame = make_frame()
    hub.publish_frame(frame)
    assert [inst.update_count for inst in instances] == [1, 1, 1]
    global_out = SensorFrame.from_payload(instances[0].dispatch(None, "get_last_frame", {}))
    assert global_out == frame
    motion_out = SensorFrame.from_payload(instances[1].dispatch(None, "get_last_frame", {}))
    assert diff_channels(frame, motion_out) == MOTION
    light_out = SensorFrame.from_payload(instances[2].dispatch(None, "get_last_frame", {}))
    assert diff_channels(frame, light_out) == LIGHT


def test_payload_roundtrip():
    frame = make_frame()
    assert SensorFrame.from_payload(frame.to_payload()) == frame
