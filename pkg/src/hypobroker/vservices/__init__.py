"""Virtual service plugins. Every namespace instance of a family answers
the same method set with the same payload shapes; only the values differ
according to the instance's semantics."""

from .base import ServiceInstance
from .ime import ImeDescriptor, ImeInstance
from .location import LocationFix, LocationInstance, haversine_m, transform_location
from .provider import ProviderHub, SyntheticProvider, read_replay
from .sensors import SensorFrame, SensorInstance, transform_sensor_frame
from .subscriber import (
    PhoneInstance,
    SubinfoInstance,
    SubscriberDirectory,
    SubscriberRecord,
    luhn_valid,
)

__all__ = [
    "ServiceInstance",
    "ImeDescriptor",
    "ImeInstance",
    "LocationFix",
    "LocationInstance",
    "haversine_m",
    "transform_location",
    "ProviderHub",
    "SyntheticProvider",
    "read_replay",
    "SensorFrame",
    "SensorInstance",
    "transform_sensor_frame",
    "PhoneInstance",
    "SubinfoInstance",
    "SubscriberDirectory",
    "SubscriberRecord",
    "luhn_valid",
]
