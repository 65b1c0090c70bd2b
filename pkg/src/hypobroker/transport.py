"""Message-bus core: client identities, per-client capability tables, and
the broker that stamps every transaction with its trusted sender, enforces
handle unforgeability, and guards handle transfers between clients.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import (
    AuthRejected,
    BadHandle,
    BadRequest,
    BrokerError,
    NoSuchRecipient,
    PermissionDenied,
    ServiceUnavailable,
)
from .hypovisor import Registry, ServiceEndpoint, ServiceKey
from .macguard import Decision, SecurityLabel, TransferRule, check_transfer
from .policy import PolicyStore

log = logging.getLogger("hypobroker.transport")

# Handle 0 is pre-granted in every table and always refers to the registry.
REGISTRY_HANDLE = 0
REGISTRY_KEY: ServiceKey = 0


@dataclass(frozen=True)
class ClientIdentity:
    """Trusted identity stamped onto every transaction. The label comes
    from the broker's client manifest at connect time, never from the
    client itself."""

    uid: int
    label: SecurityLabel

    def __post_init__(self) -> None:
        if self.uid < 0:
            raise ValueError("uid must be >= 0")


@dataclass(frozen=True)
class Transaction:
    sender: ClientIdentity
    handle: int
    method: str
    payload: dict


class CapabilityTable:
    """Per-client map from local handles to registry keys. Handles are
    allocated densely, never reused within a session, and carry no meaning
    outside their owning client."""

    def __init__(self, owner: ClientIdentity):
        self.owner = owner
        self._entries: dict[int, ServiceKey] = {REGISTRY_HANDLE: REGISTRY_KEY}
        self._next_handle = 1

    def grant(self, key: ServiceKey) -> int:
        handle = self._next_handle
        self._next_handle += 1
        self._entries[handle] = key
        return handle

    def lookup(self, handle: int) -> ServiceKey:
        try:
            return self._entries[handle]
        except (KeyError, TypeError):
            raise BadHandle(f"handle {handle!r} not in table of uid {self.owner.uid}") from None

    def snapshot(self) -> dict[int, ServiceKey]:
        return dict(self._entries)

    def __contains__(self, handle: int) -> bool:
        return handle in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class TransferResult:
    """Outcome of a transfer attempt. A deny is a policy outcome, not an
    error; the recipient handle is returned to the sender for out-of-band
    hand-off when allowed."""

    decision: Decision
    recipient_uid: int
    recipient_handle: int | None = None

    @property
    def allowed(self) -> bool:
        return self.decision is Decision.ALLOW


class ClientSession:
    """One connected client. All bus traffic flows through the owning
    broker, which is the only mutator of the capability table."""

    def __init__(self, broker: "Broker", identity: ClientIdentity, session_id: int):
        self.broker = broker
        self.identity = identity
        self.session_id = session_id
        self.table = CapabilityTable(identity)
        self.alive = True

    def transact(self, handle: int, method: str, payload: dict | None = None) -> dict:
        return self.broker.transact(self, handle, method, payload or {})

    def get_service(self, name: str) -> int:
        return self.broker.get_service(self, name)

    def transfer_handle(self, recipient_uid: int, handle: int) -> TransferResult:
        return self.broker.transfer_handle(self, recipient_uid, handle)

    def close(self) -> None:
        self.broker.disconnect(self)


# Endpoint factory signature for registrations arriving over the wire:
# (name, namespace, plugin, params) -> endpoint.
EndpointFactory = Callable[[str, int, str, dict], ServiceEndpoint]


class Broker:
    """The dispatch point every capability passes through.

    Composes the service registry, the live policy store, and the transfer
    ruleset. Capability tables are mutated only here, under one lock, so a
    table mutation and a concurrent transact serialize in some order.
    """

    def __init__(
        self,
        registry: Registry,
        policy_store: PolicyStore,
        ruleset: list[TransferRule],
        client_manifest: dict[str, ClientIdentity],
        endpoint_factory: EndpointFactory | None = None,
    ):
        self.registry = registry
        self.policy_store = policy_store
        self.ruleset = ruleset
        self._manifest = dict(client_manifest)
        self._endpoint_factory = endpoint_factory
        self._lock = threading.RLock()
        self._sessions: dict[int, ClientSession] = {}
        self._session_ids = itertools.count(1)
        self._lookup_counts: dict[tuple[int, str], int] = {}
        self._listeners: list[Callable[[dict], None]] = []
        policy_store.subscribe(lambda ps: self._emit({"type": "policy", "version": ps.version}))

    # -- sessions ------------------------------------------------------------

    def connect(self, token: str) -> ClientSession:
        identity = self._manifest.get(token)
        if identity is None:
            raise AuthRejected("unknown connect token")
        with self._lock:
            session = ClientSession(self, identity, next(self._session_ids))
            self._sessions[session.session_id] = session
        log.debug("uid %d connected (session %d)", identity.uid, session.session_id)
        return session

    def disconnect(self, session: ClientSession) -> None:
        with self._lock:
            session.alive = False
            self._sessions.pop(session.session_id, None)

    def live_sessions(self) -> list[ClientSession]:
        with self._lock:
            return [s for s in self._sessions.values() if s.alive]

    def identities(self) -> list[ClientIdentity]:
        return sorted(set(self._manifest.values()), key=lambda i: i.uid)

    def lookup_count(self, uid: int, service: str | None = None) -> int:
        with self._lock:
            if service is not None:
                return self._lookup_counts.get((uid, service), 0)
            return sum(n for (u, _), n in self._lookup_counts.items() if u == uid)

    # -- events ----------------------------------------------------------------

    def subscribe(self, listener: Callable[[dict], None]) -> None:
        self._listeners.append(listener)

    def _emit(self, event: dict) -> None:
        for listener in list(self._listeners):
            try:
                listener(event)
            except Exception:
                log.exception("event listener failed")

    # -- bus operations --------------------------------------------------------

    def transact(self, session: ClientSession, handle: int, method: str, payload: dict) -> dict:
        with self._lock:
            key = session.table.lookup(handle)
        if key == REGISTRY_KEY:
            return self._registry_dispatch(session, method, payload)
        record = self.registry.record_for_key(key)
        if record is None:
            raise ServiceUnavailable(f"service for key {key} is gone")
        txn = Transaction(sender=session.identity, handle=handle, method=method, payload=payload)
        try:
            return record.endpoint.dispatch(txn.sender, txn.method, txn.payload)
        except BrokerError:
            raise
        except Exception as exc:
            log.exception("endpoint %s/%d failed", record.name, record.namespace)
            raise ServiceUnavailable(f"endpoint {record.name}/{record.namespace} failed: {exc}") from exc

    def get_service(self, session: ClientSession, name: str) -> int:
        # Fresh policy snapshot on every call: updates take effect on the
        # next lookup, and the lookup cost scales with policy size.
        policy = self.policy_store.current
        record, fallback = self.registry.resolve(policy, session.identity.uid, name)
        with self._lock:
            handle = session.table.grant(record.key)
            count_key = (session.identity.uid, name)
            self._lookup_counts[count_key] = self._lookup_counts.get(count_key, 0) + 1
            count = self._lookup_counts[count_key]
        self._emit(
            {
                "type": "lookup",
                "uid": session.identity.uid,
                "service": name,
                "namespace": record.namespace,
                "fallback": fallback,
                "count": count,
            }
        )
        return handle

    def add_service(
        self,
        session: ClientSession,
        name: str,
        namespace: int,
        endpoint: ServiceEndpoint,
    ) -> ServiceKey:
        if session.identity.label is not SecurityLabel.SYSTEM:
            raise PermissionDenied("add_service requires the system label")
        record = self.registry.register(name, namespace, endpoint, owner_label=session.identity.label)
        return record.key

    def list_services(self, session: ClientSession) -> list[tuple[str, int]]:
        if session.identity.label is not SecurityLabel.SYSTEM:
            raise PermissionDenied("list_services requires the system label")
        return self.registry.snapshot()

    def transfer_handle(self, session: ClientSession, recipient_uid: int, handle: int) -> TransferResult:
        with self._lock:
            key = session.table.lookup(handle)
            recipients = sorted(
                (s for s in self._sessions.values() if s.alive and s.identity.uid == recipient_uid),
                key=lambda s: s.session_id,
            )
            if not recipients:
                raise NoSuchRecipient(f"uid {recipient_uid} has no live session")
            recipient = recipients[0]
            owner_label = self._owner_label(key)
            decision = check_transfer(session.identity.label, recipient.identity.label, owner_label, self.ruleset)
            if decision is Decision.DENY:
                return TransferResult(decision=Decision.DENY, recipient_uid=recipient_uid)
            new_handle = recipient.table.grant(key)
        return TransferResult(
            decision=Decision.ALLOW,
            recipient_uid=recipient_uid,
            recipient_handle=new_handle,
        )

    def _owner_label(self, key: ServiceKey) -> SecurityLabel:
        if key == REGISTRY_KEY:
            return SecurityLabel.SYSTEM
        record = self.registry.record_for_key(key)
        if record is None:
            raise ServiceUnavailable(f"service for key {key} is gone")
        return record.owner_label

    # -- handle-0 methods --------------------------------------------------------

    def _registry_dispatch(self, session: ClientSession, method: str, payload: dict) -> dict:
        if method == "get_service":
            name = payload.get("name")
            if not isinstance(name, str):
                raise BadRequest("get_service payload needs a string 'name'")
            return {"handle": self.get_service(session, name)}
        if method == "list_services":
            return {"services": [[name, ns] for name, ns in self.list_services(session)]}
        if method == "transfer_handle":
            recipient_uid = payload.get("recipient_uid")
            handle = payload.get("handle")
            if not isinstance(recipient_uid, int) or isinstance(recipient_uid, bool):
                raise BadRequest("transfer_handle payload needs an integer 'recipient_uid'")
            result = self.transfer_handle(session, recipient_uid, handle)
            return {
                "decision": result.decision.value,
                "recipient_handle": result.recipient_handle,
            }
        if method == "add_service":
            return self._add_service_from_wire(session, payload)
        raise BadRequest(f"registry has no method {method!r}")

    def _add_service_from_wire(self, session: ClientSession, payload: dict) -> dict:
        if session.identity.label is not SecurityLabel.SYSTEM:
            raise PermissionDenied("add_service requires the system label")
        if self._endpoint_factory is None:
            raise BadRequest("this broker does not accept wire registrations")
        name = payload.get("name")
        namespace = payload.get("namespace")
        plugin = payload.get("plugin")
        params = payload.get("params") or {}
        if not isinstance(name, str) or not isinstance(namespace, int) or not isinstance(plugin, str):
            raise BadRequest("add_service payload needs name, namespace, plugin")
        endpoint = self._endpoint_factory(name, namespace, plugin, dict(params))
        key = self.add_service(session, name, namespace, endpoint)
        return {"name": name, "namespace": namespace, "key": key}
