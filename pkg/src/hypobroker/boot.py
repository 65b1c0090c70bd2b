"""Boot-time instantiation. Every namespace instance is declared in the
boot manifest and started when the broker comes up; nothing is created
lazily, so an instance is always running whether or not a client is
assigned to it.

Manifest grammar, one instance per line::

    name namespace plugin key=value ...
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import ConfigError
from .hypovisor import Registry
from .vservices.ime import DEFAULT_IMES, ImeDescriptor, ImeInstance
from .vservices.location import DEFAULT_FUZZ_RADIUS_M, LocationInstance
from .vservices.provider import ProviderHub
from .vservices.sensors import DEFAULT_RANGES, SensorInstance
from .vservices.subscriber import (
    PhoneInstance,
    SubinfoInstance,
    SubscriberDirectory,
    SubscriberRecord,
)

PLUGINS = ("location", "subinfo", "phone", "sensors", "ime")


@dataclass(frozen=True)
class BootEntry:
    name: str
    namespace: int
    plugin: str
    params: dict[str, str] = field(default_factory=dict)
    line: int = 0


def parse_boot_manifest(text: str) -> list[BootEntry]:
    entries: list[BootEntry] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3 or not parts[1].isdigit():
            raise ConfigError(f"boot manifest line {lineno}: expected 'name namespace plugin ...'")
        name, namespace, plugin = parts[0], int(parts[1]), parts[2]
        if plugin not in PLUGINS:
            raise ConfigError(f"boot manifest line {lineno}: unknown plugin {plugin!r}")
        params: dict[str, str] = {}
        for item in parts[3:]:
            if "=" not in item:
                raise ConfigError(f"boot manifest line {lineno}: expected key=value, got {item!r}")
            key, _, value = item.partition("=")
            params[key] = value
        entries.append(BootEntry(name, namespace, plugin, params, lineno))
    return entries


def _parse_range(value: str) -> tuple[float, float]:
    lo, sep, hi = value.partition(":")
    if not sep:
        raise ConfigError(f"range {value!r} must be 'lo:hi'")
    return float(lo), float(hi)


def _parse_imes(value: str) -> tuple[ImeDescriptor, ...]:
    # ime_id:display_name:builtin|thirdparty, comma separated
    descriptors = []
    for item in value.split(","):
        fields = item.split(":")
        if len(fields) != 3 or fields[2] not in ("builtin", "thirdparty"):
            raise ConfigError(f"ime descriptor {item!r} must be 'id:name:builtin|thirdparty'")
        descriptors.append(ImeDescriptor(fields[0], fields[1], fields[2] == "builtin"))
    return tuple(descriptors)


class PluginLibrary:
    """Builds service instances from boot entries and wires provider
    fan-out. One library backs one broker; the subscriber directory is
    shared so the subinfo and phone families stay in lockstep."""

    def __init__(self, hub: ProviderHub, seed: int = 0):
        self.hub = hub
        self.seed = seed
        self.directory = SubscriberDirectory()

    def _rng(self, name: str, namespace: int) -> random.Random:
        return random.Random(f"{self.seed}:{name}:{namespace}")

    def build(self, name: str, namespace: int, plugin: str, params: dict[str, str]):
        if plugin == "location":
            instance = LocationInstance(
                name,
                namespace,
                mode=params.get("mode", "global"),
                rng=self._rng(name, namespace),
                fuzz_radius_m=float(params.get("fuzz_radius_m", DEFAULT_FUZZ_RADIUS_M)),
            )
        elif plugin == "sensors":
            ranges = {
                channel: _parse_range(params[channel])
                for channel in DEFAULT_RANGES
                if channel in params
            }
            instance = SensorInstance(
                name,
                namespace,
                mode=params.get("mode", "global"),
                rng=self._rng(name, namespace),
                ranges=ranges,
            )
        elif plugin == "subinfo":
            self._bind_record(namespace, params)
            instance = SubinfoInstance(name, namespace, self.directory)
        elif plugin == "phone":
            if params:
                self._bind_record(namespace, params)
            instance = PhoneInstance(name, namespace, self.directory)
        elif plugin == "ime":
            installed = (
                _parse_imes(params["imes"])
                if "imes" in params
                else tuple(ImeDescriptor(*d) for d in DEFAULT_IMES)
            )
            instance = ImeInstance(name, namespace, mode=params.get("mode", "global"), installed=installed)
        else:
            raise ConfigError(f"unknown plugin {plugin!r}")
        self.hub.attach(instance)
        return instance

    def _bind_record(self, namespace: int, params: dict[str, str]) -> None:
        try:
            record = SubscriberRecord(
                device_id=params["device_id"],
                line1_number=params["line1_number"],
                voicemail_number=params["voicemail_number"],
            )
        except KeyError as exc:
            raise ConfigError(f"subscriber plugin missing parameter {exc}") from None
        if not self.directory.has(namespace):
            self.directory.bind(namespace, record)


def boot_registry(entries: list[BootEntry], registry: Registry, library: PluginLibrary) -> None:
    """Instantiate every manifest entry and register it. Global instances
    must precede virtual ones for the same name, and phone namespaces need
    a subscriber record bound by a subinfo entry."""
    for entry in entries:
        try:
            instance = library.build(entry.name, entry.namespace, entry.plugin, entry.params)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"boot manifest line {entry.line}: {exc}") from exc
        registry.register(entry.name, entry.namespace, instance)
    for namespace in {e.namespace for e in entries if e.plugin == "phone"}:
        if not library.directory.has(namespace):
            raise ConfigError(f"phone namespace {namespace} has no subscriber record bound")
