"""Socket transport tests: framing, connect handshake, dispatch, and
error mapping over a live unix-socket bus."""

import json
import socket
import struct

import pytest

from hypobroker.errors import AuthRejected, BadHandle, NoSuchService, PermissionDenied
from hypobroker.vservices.location import LocationFix
from hypobroker.wire import BusClient, parse_endpoint


def test_parse_endpoint():
    assert parse_endpoint("unix:/tmp/x.sock") == ("unix", "/tmp/x.sock")
    assert parse_endpoint("/tmp/x.sock") == ("unix", "/tmp/x.sock")
    assert parse_endpoint("tcp:127.0.0.1:7801") == ("tcp", "127.0.0.1", "7801")


def test_connect_and_transact_over_socket(live_daemon):
    with BusClient(live_daemon.config.listen, "tok-maps") as client:
        assert client.uid == 10001
        assert client.label == "untrusted_app"
        live_daemon.hub.publish_fix(LocationFix(43.0, -76.0, 5.0, 1000))
        handle = client.get_service("location")
        reply = client.transact(handle, "get_last_location")
        assert reply["latitude"] == 43.0


def test_unknown_token_rejected(live_daemon):
    with pytest.raises(AuthRejected):
        BusClient(live_daemon.config.listen, "tok-wrong")


def test_bad_handle_over_socket(live_daemon):
    with BusClient(live_daemon.config.listen, "tok-maps") as client:
        with pytest.raises(BadHandle):
            client.transact(42, "anything")


def test_unknown_service_over_socket(live_daemon):
    with BusClient(live_daemon.config.listen, "tok-maps") as client:
        with pytest.raises(NoSuchService):
            client.get_service("wifi")


def test_list_services_permission_over_socket(live_daemon):
    with BusClient(live_daemon.config.listen, "tok-maps") as client:
        with pytest.raises(PermissionDenied):
            client.list_services()
    with BusClient(live_daemon.config.listen, "tok-system") as system:
        services = system.list_services()
        assert ("location", 0) in services and len(services) == 12


def test_transfer_over_socket(live_daemon):
    with BusClient(live_daemon.config.listen, "tok-maps") as a, \
         BusClient(live_daemon.config.listen, "tok-game") as b:
        handle = a.get_service("location")
        result = a.transfer_handle(b.uid, handle)
        assert result == {"decision": "deny", "recipient_handle": None}
    with BusClient(live_daemon.config.listen, "tok-bank") as t, \
         BusClient(live_daemon.config.listen, "tok-game") as b:
        handle = t.get_service("location")
        result = t.transfer_handle(b.uid, handle)
        assert result["decision"] == "allow"
        live_daemon.hub.publish_fix(LocationFix(10.0, 20.0, 5.0, 99999999))
        assert b.transact(result["recipient_handle"], "get_stats")["updates"] >= 1


def test_add_service_over_wire(live_daemon):
    with BusClient(live_daemon.config.listen, "tok-maps") as client:
        with pytest.raises(PermissionDenied):
            client.transact(0, "add_service", {"name": "x", "namespace": 0, "plugin": "location"})
    with BusClient(live_daemon.config.listen, "tok-system") as system:
        reply = system.transact(
            0, "add_service",
            {"name": "location2", "namespace": 0, "plugin": "location", "params": {"mode": "global"}},
        )
        assert reply["name"] == "location2"
        handle = system.get_service("location2")
        assert handle in range(1, 100)


def test_raw_frame_handshake_requires_connect_first(live_daemon):
    endpoint = parse_endpoint(live_daemon.config.listen)
    sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    sock.connect(endpoint[1])
    body = json.dumps({"handle": 1, "method": "get_service", "payload": {}}).encode()
    sock.sendall(struct.pack(">I", len(body)) + body)
    header = sock.recv(4)
    (length,) = struct.unpack(">I", header)
    reply = json.loads(sock.recv(length))
    assert reply["status"] == "bad_request"
    sock.close()


def test_concurrent_clients_are_isolated(live_daemon):
    clients = [BusClient(live_daemon.config.listen, "tok-maps") for _ in range(4)]
    try:
        handles = [c.get_service("sensors") for c in clients]
        assert handles == [1, 1, 1, 1]  # dense per client, independent tables
    finally:
        for c in clients:
            c.close()
