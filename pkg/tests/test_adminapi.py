"""Admin HTTP API tests against a live daemon."""

import http.client
import json
import threading
import urllib.error
import urllib.request

import pytest


def api(daemon, method, path, body=None, token=""):
    url = f"http://{daemon.admin.address}{path}"
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(url, data=data, method=method)
    request.add_header("Content-Type", "application/json")
    if token:
        request.add_header("Authorization", f"Bearer {token}")
    with urllib.request.urlopen(request, timeout=5.0) as response:
        return json.loads(response.read().decode())


def test_get_services(live_daemon):
    reply = api(live_daemon, "GET", "/v1/services")
    assert {"name": "location", "namespace": 2} in reply["services"]
    assert len(reply["services"]) == 12


def test_get_clients(live_daemon):
    reply = api(live_daemon, "GET", "/v1/clients")
    uids = {c["uid"]: c for c in reply["clients"]}
    assert uids[10001]["label"] == "untrusted_app"
    assert uids[1000]["label"] == "system"


def test_get_groups(live_daemon):
    reply = api(live_daemon, "GET", "/v1/groups")
    names = {g["name"]: g for g in reply["groups"]}
    assert names["Untrusted"]["bindings"] == [
        {"service": "location", "namespace": 2},
        {"service": "phone", "namespace": 1},
        {"service": "subinfo", "namespace": 1},
    ]


def test_policy_crud_roundtrip(live_daemon):
    assert api(live_daemon, "GET", "/v1/policy") == {"version": 0, "rules": []}
    v1 = api(live_daemon, "PUT", "/v1/policy/rules", {"uid": 10001, "service": "location", "namespace": 1})
    assert v1 == {"version": 1}
    shown = api(live_daemon, "GET", "/v1/policy")
    assert shown["rules"] == [{"uid": 10001, "service": "location", "namespace": 1}]
    v2 = api(live_daemon, "DELETE", "/v1/policy/rules/10001/location")
    assert v2 == {"version": 2}
    assert api(live_daemon, "GET", "/v1/policy")["rules"] == []


def test_assign_group_and_global(live_daemon):
    api(live_daemon, "POST", "/v1/policy/assign", {"uid": 10001, "group": "Untrusted"})
    rules = api(live_daemon, "GET", "/v1/policy")["rules"]
    assert {(r["service"], r["namespace"]) for r in rules} == {("location", 2), ("subinfo", 1), ("phone", 1)}
    api(live_daemon, "POST", "/v1/policy/assign", {"uid": 10001, "group": "Global"})
    assert api(live_daemon, "GET", "/v1/policy")["rules"] == []


def test_assign_unknown_group_is_404(live_daemon):
    with pytest.raises(urllib.error.HTTPError) as exc:
        api(live_daemon, "POST", "/v1/policy/assign", {"uid": 10001, "group": "Nope"})
    assert exc.value.code == 404
    assert json.loads(exc.value.read())["error"] == "no_such_group"


def test_policy_edits_persist_to_nspolicy_file(live_daemon):
    api(live_daemon, "PUT", "/v1/policy/rules", {"uid": 42, "service": "phone", "namespace": 1})
    path = live_daemon.config.resolve(live_daemon.config.nspolicy)
    assert path.read_text() == "42 phone 1\n"


def test_api_edits_change_lookup_behavior(live_daemon):
    broker = live_daemon.broker
    session = broker.connect("tok-maps")

    def resolved_namespace():
        seen = {}
        broker.subscribe(lambda e: seen.update(e) if e.get("type") == "lookup" else None)
        session.get_service("location")
        return seen["namespace"]

    api(live_daemon, "PUT", "/v1/policy/rules", {"uid": 10001, "service": "location", "namespace": 1})
    assert resolved_namespace() == 1


def test_provider_injection(live_daemon):
    events = [
        {"type": "fix", "latitude": 1.0, "longitude": 2.0, "accuracy": 3.0, "timestamp": 10},
        {"type": "focus", "activity_id": "a1"},
    ]
    reply = api(live_daemon, "POST", "/v1/provider/events", {"events": events})
    assert reply == {"applied": 2}
    assert live_daemon.hub.location_instances[0].update_count == 1
    assert live_daemon.hub.ime_instances[0].current_focus == "a1"


def test_events_stream_hello_and_policy_event(live_daemon):
    host, port = live_daemon.admin.address.split(":")
    conn = http.client.HTTPConnection(host, int(port), timeout=5.0)
    conn.request("GET", "/v1/events")
    response = conn.getresponse()
    assert response.headers["Content-Type"] == "text/event-stream"

    lines = []

    def read_some():
        try:
            while sum(1 for l in lines if l.startswith("data: ")) < 2:
                raw = response.fp.readline()
                if not raw:
                    break
                lines.append(raw.decode().rstrip("\n"))
        except OSError:
            pass

    reader = threading.Thread(target=read_some, daemon=True)
    reader.start()
    # hello event arrives immediately; a policy edit must stream afterwards
    api(live_daemon, "PUT", "/v1/policy/rules", {"uid": 7, "service": "ime", "namespace": 1})
    reader.join(timeout=5.0)
    conn.close()
    text = "\n".join(lines)
    assert "event: policy" in text
    datas = [json.loads(l[len("data: "):]) for l in lines if l.startswith("data: ")]
    assert any(d.get("version") == 0 for d in datas)  # hello snapshot
    assert any(d.get("version") == 1 for d in datas)  # the applied edit


def test_admin_token_enforced(tmp_path):
    from hypobroker.config import load_config, write_demo_tree
    from hypobroker.daemon import Daemon

    config_path = write_demo_tree(tmp_path / "demo", listen=f"unix:{tmp_path}/bus.sock")
    config = load_config(config_path)
    config.provider = "none"
    config.admin = "127.0.0.1:0"
    config.admin_token = "sekrit"
    daemon = Daemon(config)
    daemon.start()
    try:
        with pytest.raises(urllib.error.HTTPError) as exc:
            api(daemon, "GET", "/v1/services")
        assert exc.value.code == 401
        reply = api(daemon, "GET", "/v1/services", token="sekrit")
        assert len(reply["services"]) == 12
    finally:
        daemon.stop()
