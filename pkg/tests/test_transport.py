"""Broker transport tests: sessions, capability tables, unforgeability,
and transfer guarding. The unforgeability property drives randomized call
sequences and tracks the authoritative set of granted handles on the
side."""

import random

import pytest

from hypobroker.errors import (
    AuthRejected,
    BadHandle,
    NoSuchRecipient,
    PermissionDenied,
    ServiceUnavailable,
)
from hypobroker.hypovisor import Registry
from hypobroker.macguard import DEFAULT_RULESET, Decision, SecurityLabel
from hypobroker.policy import PolicyRule, PolicySet, PolicyStore, SetRule
from hypobroker.transport import Broker, ClientIdentity, REGISTRY_HANDLE


class Echo:
    def dispatch(self, sender, method, payload):
        return {"method": method, "uid": sender.uid}


class Broken:
    def dispatch(self, sender, method, payload):
        raise RuntimeError("boom")


MANIFEST = {
    "tok-system": ClientIdentity(1000, SecurityLabel.SYSTEM),
    "tok-a": ClientIdentity(10001, SecurityLabel.UNTRUSTED_APP),
    "tok-b": ClientIdentity(10002, SecurityLabel.UNTRUSTED_APP),
    "tok-t": ClientIdentity(10010, SecurityLabel.TRUSTED_APP),
}


def make_broker(policy=None, with_app_service=False):
    registry = Registry()
    registry.register("location", 0, Echo())
    registry.register("location", 1, Echo())
    registry.register("sensors", 0, Echo())
    if with_app_service:
        # boot-time registration with a non-system owner; the client-facing
        # add_service path always stamps the (system) caller label
        registry.register("appshare", 0, Echo(), owner_label=SecurityLabel.UNTRUSTED_APP)
    store = PolicyStore(initial=policy or PolicySet())
    return Broker(registry=registry, policy_store=store, ruleset=list(DEFAULT_RULESET), client_manifest=MANIFEST)


# -- connect --------------------------------------------------------------------


def test_connect_known_tokens():
    broker = make_broker()
    session = broker.connect("tok-system")
    assert session.identity == ClientIdentity(1000, SecurityLabel.SYSTEM)
    assert session.table.snapshot() == {0: 0}  # only the registry handle


def test_connect_unknown_token():
    broker = make_broker()
    with pytest.raises(AuthRejected):
        broker.connect("nope")


def test_duplicate_sessions_per_uid_allowed():
    broker = make_broker()
    first = broker.connect("tok-a")
    second = broker.connect("tok-a")
    assert first.session_id != second.session_id
    assert {s.session_id for s in broker.live_sessions()} == {first.session_id, second.session_id}


# -- transact / unforgeability -----------------------------------------------------


def test_transact_requires_granted_handle():
    broker = make_broker()
    session = broker.connect("tok-a")
    with pytest.raises(BadHandle):
        session.transact(7, "anything")
    assert session.table.snapshot() == {0: 0}


def test_transact_routes_to_endpoint_with_stamped_sender():
    broker = make_broker()
    session = broker.connect("tok-a")
    handle = session.get_service("location")
    reply = session.transact(handle, "ping")
    assert reply == {"method": "ping", "uid": 10001}


def test_get_service_via_handle_zero():
    broker = make_broker()
    session = broker.connect("tok-a")
    reply = session.transact(REGISTRY_HANDLE, "get_service", {"name": "location"})
    handle = reply["handle"]
    assert handle in session.table
    assert session.transact(handle, "x")["uid"] == 10001


def test_handles_are_dense_and_client_local():
    broker = make_broker()
    a = broker.connect("tok-a")
    b = broker.connect("tok-b")
    ha1 = a.get_service("location")
    ha2 = a.get_service("sensors")
    hb1 = b.get_service("sensors")
    assert (ha1, ha2) == (1, 2)
    # same integer in b's table, but it maps to b's own grant, not a's
    assert hb1 == 1
    assert a.table.lookup(hb1) == a.table.lookup(ha1)
    assert b.table.lookup(hb1) == a.table.lookup(ha2)


def test_endpoint_fault_maps_to_service_unavailable():
    broker = make_broker()
    system = broker.connect("tok-system")
    broker.add_service(system, "flaky", 0, Broken())
    session = broker.connect("tok-a")
    handle = session.get_service("flaky")
    with pytest.raises(ServiceUnavailable):
        session.transact(handle, "x")


def test_add_service_requires_system():
    broker = make_broker()
    session = broker.connect("tok-a")
    with pytest.raises(PermissionDenied):
        broker.add_service(session, "thing", 0, Echo())
    system = broker.connect("tok-system")
    key = broker.add_service(system, "thing", 0, Echo())
    assert broker.registry.record_for_key(key).owner_label is SecurityLabel.SYSTEM


def test_list_services_requires_system():
    broker = make_broker()
    session = broker.connect("tok-a")
    with pytest.raises(PermissionDenied):
        broker.list_services(session)
    system = broker.connect("tok-system")
    assert broker.list_services(system) == [("location", 0), ("location", 1), ("sensors", 0)]


# -- transfers -----------------------------------------------------------------------


def test_untrusted_to_untrusted_system_handle_denied():
    broker = make_broker()
    a = broker.connect("tok-a")
    b = broker.connect("tok-b")
    handle = a.get_service("location")
    before = b.table.snapshot()
    result = a.transfer_handle(10002, handle)
    assert result.decision is Decision.DENY
    assert result.recipient_handle is None
    assert b.table.snapshot() == before  # bit-identical after a deny


def test_untrusted_to_untrusted_app_service_allowed():
    broker = make_broker(with_app_service=True)
    a = broker.connect("tok-a")
    b = broker.connect("tok-b")
    handle = a.get_service("appshare")
    result = a.transfer_handle(10002, handle)
    assert result.allowed
    assert b.table.lookup(result.recipient_handle) == a.table.lookup(handle)
    assert b.transact(result.recipient_handle, "hello")["uid"] == 10002


def test_trusted_to_untrusted_system_handle_allowed_by_default_ruleset():
    broker = make_broker()
    t = broker.connect("tok-t")
    b = broker.connect("tok-b")
    handle = t.get_service("location")
    result = t.transfer_handle(10002, handle)
    assert result.allowed
    assert b.transact(result.recipient_handle, "hello")["uid"] == 10002


def test_transfer_to_absent_recipient():
    broker = make_broker()
    a = broker.connect("tok-a")
    handle = a.get_service("location")
    with pytest.raises(NoSuchRecipient):
        a.transfer_handle(99999, handle)


def test_transfer_of_unheld_handle_is_bad_handle():
    broker = make_broker()
    a = broker.connect("tok-a")
    broker.connect("tok-b")
    with pytest.raises(BadHandle):
        a.transfer_handle(10002, 12)


def test_disconnect_removes_recipient():
    broker = make_broker()
    a = broker.connect("tok-a")
    b = broker.connect("tok-b")
    handle = a.get_service("location")
    b.close()
    with pytest.raises(NoSuchRecipient):
        a.transfer_handle(10002, handle)


# -- unforgeability property --------------------------------------------------------


def test_unforgeability_random_sequences():
    """No sequence of transact/transfer calls grants a capability that
    get_service or an allowed transfer did not create; every BadHandle
    leaves tables unchanged."""
    rng = random.Random(1234)
    for _ in range(30):
        broker = make_broker(with_app_service=True)
        sessions = [broker.connect(t) for t in ("tok-a", "tok-b", "tok-t", "tok-system")]
        # authoritative view: handle -> key granted by legitimate paths only
        expected = {s.session_id: {0: 0} for s in sessions}
        names = ["location", "sensors", "appshare", "nope"]
        for _ in range(120):
            s = rng.choice(sessions)
            op = rng.random()
            if op < 0.35:
                name = rng.choice(names)
                try:
                    handle = s.get_service(name)
                except Exception:
                    assert name == "nope"
                    continue
                key = s.table.lookup(handle)
                assert handle not in expected[s.session_id]
                expected[s.session_id][handle] = key
            elif op < 0.70:
                handle = rng.randrange(0, 8)
                before = {sid: dict(t) for sid, t in expected.items()}
                if handle in expected[s.session_id]:
                    # registry capabilities (key 0, possibly re-granted via
                    # transfer) speak the registry protocol, not "ping"
                    if expected[s.session_id][handle] != 0:
                        s.transact(handle, "ping")
                else:
                    with pytest.raises(BadHandle):
                        s.transact(handle, "ping")
                    assert {x.session_id: x.table.snapshot() for x in sessions} == before
            else:
                recipient = rng.choice(sessions)
                handle = rng.randrange(0, 8)
                if handle not in expected[s.session_id]:
                    with pytest.raises(BadHandle):
                        s.transfer_handle(recipient.identity.uid, handle)
                    continue
                result = s.transfer_handle(recipient.identity.uid, handle)
                if result.allowed:
                    target = min(
                        (x for x in sessions if x.identity.uid == recipient.identity.uid),
                        key=lambda x: x.session_id,
                    )
                    expected[target.session_id][result.recipient_handle] = expected[s.session_id][handle]
                # deny adds nothing
            for x in sessions:
                assert x.table.snapshot() == expected[x.session_id], "table drifted from granted set"
