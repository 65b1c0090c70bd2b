"""Service directory and the per-request namespace resolution at its core:
every lookup consults the live policy and hands back the record of the
instance the caller is assigned to, falling back to the global instance
when the assigned one is missing.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Any, Protocol

from .errors import AlreadyRegistered, GlobalMissing, NoSuchService
from .macguard import SecurityLabel
from .policy import GLOBAL_NAMESPACE, PolicySet, lookup_rule

log = logging.getLogger("hypobroker.hypovisor")

ServiceKey = int


class ServiceEndpoint(Protocol):
    def dispatch(self, sender: Any, method: str, payload: dict) -> dict: ...


@dataclass(frozen=True)
class ServiceRecord:
    name: str
    namespace: int
    key: ServiceKey
    endpoint: ServiceEndpoint
    owner_label: SecurityLabel


def resolve_namespace(policy: PolicySet, uid: int, name: str) -> int:
    """Namespace the policy assigns to (uid, name); global when unassigned.
    Pure function of its arguments."""
    return lookup_rule(policy, uid, name)


class Registry:
    """Directory of registered service instances, keyed by (name, namespace).

    The global instance (namespace 0) of a name must be registered before
    any virtual instance of it. Registration serializes; resolution reads
    immutable records and may run concurrently.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._by_key: dict[ServiceKey, ServiceRecord] = {}
        self._by_name_ns: dict[tuple[str, int], ServiceRecord] = {}
        self._next_key: ServiceKey = 1

    def register(
        self,
        name: str,
        namespace: int,
        endpoint: ServiceEndpoint,
        owner_label: SecurityLabel = SecurityLabel.SYSTEM,
    ) -> ServiceRecord:
        if namespace < 0:
            raise ValueError("namespace must be >= 0")
        with self._lock:
            if (name, namespace) in self._by_name_ns:
                raise AlreadyRegistered(f"{name!r} namespace {namespace} already registered")
            if namespace != GLOBAL_NAMESPACE and (name, GLOBAL_NAMESPACE) not in self._by_name_ns:
                raise GlobalMissing(f"{name!r} has no global instance yet")
            record = ServiceRecord(
                name=name,
                namespace=namespace,
                key=self._next_key,
                endpoint=endpoint,
                owner_label=owner_label,
            )
            self._next_key += 1
            self._by_key[record.key] = record
            self._by_name_ns[(name, namespace)] = record
            return record

    def record_for_key(self, key: ServiceKey) -> ServiceRecord | None:
        return self._by_key.get(key)

    def record_for(self, name: str, namespace: int) -> ServiceRecord | None:
        return self._by_name_ns.get((name, namespace))

    def has_name(self, name: str) -> bool:
        return (name, GLOBAL_NAMESPACE) in self._by_name_ns

    def resolve(self, policy: PolicySet, uid: int, name: str) -> tuple[ServiceRecord, bool]:
        """Record for the namespace resolved from the policy, plus whether
        a fallback to the global instance happened because the assigned
        namespace is not registered (a configuration error, warned once
        per occurrence rather than failing the caller)."""
        if not self.has_name(name):
            raise NoSuchService(f"no service named {name!r}")
        namespace = resolve_namespace(policy, uid, name)
        record = self._by_name_ns.get((name, namespace))
        if record is not None:
            return record, False
        log.warning(
            "uid %d assigned to unregistered namespace %d of %r; falling back to global",
            uid,
            namespace,
            name,
        )
        return self._by_name_ns[(name, GLOBAL_NAMESPACE)], True

    def snapshot(self) -> list[tuple[str, int]]:
        with self._lock:
            return sorted((r.name, r.namespace) for r in self._by_key.values())

    def records(self) -> list[ServiceRecord]:
        with self._lock:
            return sorted(self._by_key.values(), key=lambda r: (r.name, r.namespace))

    def __len__(self) -> int:
        return len(self._by_key)
