"""Subscriber information family: the hidden subscriber-info service plus
the phone service that can also hand out the device id. Both read the same
per-namespace record, so isolating a uid on only one of them demonstrably
leaks the real identifier through the other.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError, NoSuchField
from .base import ServiceInstance

SUBSCRIBER_FIELDS = ("device_id", "line1_number", "voicemail_number")


def luhn_valid(digits: str) -> bool:
    if not digits.isdigit():
        return False
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = int(ch)
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


@dataclass(frozen=True)
class SubscriberRecord:
    device_id: str
    line1_number: str
    voicemail_number: str

    def __post_init__(self) -> None:
        if len(self.device_id) != 15 or not luhn_valid(self.device_id):
            raise ConfigError(f"device_id {self.device_id!r} is not a Luhn-valid 15-digit IMEI")
        if not self.line1_number or not self.voicemail_number:
            raise ConfigError("subscriber record fields must be non-empty")

    def field(self, name: str) -> str:
        if name not in SUBSCRIBER_FIELDS:
            raise NoSuchField(f"unknown subscriber field {name!r}")
        return getattr(self, name)


class SubscriberDirectory:
    """Namespace -> record binding shared by the subinfo and phone
    families."""

    def __init__(self):
        self._records: dict[int, SubscriberRecord] = {}

    def bind(self, namespace: int, record: SubscriberRecord) -> None:
        if namespace in self._records:
            raise ConfigError(f"subscriber record for namespace {namespace} already bound")
        self._records[namespace] = record

    def record(self, namespace: int) -> SubscriberRecord:
        try:
            return self._records[namespace]
        except KeyError:
            raise ConfigError(f"no subscriber record bound for namespace {namespace}") from None

    def has(self, namespace: int) -> bool:
        return namespace in self._records


class SubinfoInstance(ServiceInstance):
    family = "subinfo"
    exports = ("get_subscriber_field",)

    def __init__(self, name: str, namespace: int, directory: SubscriberDirectory):
        super().__init__(name, namespace)
        self._directory = directory

    def op_get_subscriber_field(self, sender, payload: dict) -> dict:
        field_name = payload.get("field")
        record = self._directory.record(self.namespace)
        return {"field": field_name, "value": record.field(field_name)}


class PhoneInstance(ServiceInstance):
    """Second door to the device id: an isolation boundary that covers
    subinfo but not phone still hands out the real value here."""

    family = "phone"
    exports = ("get_device_id",)

    def __init__(self, name: str, namespace: int, directory: SubscriberDirectory):
        super().__init__(name, namespace)
        self._directory = directory

    def op_get_device_id(self, sender, payload: dict) -> dict:
        return {"device_id": self._directory.record(self.namespace).device_id}
