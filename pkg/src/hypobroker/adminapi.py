"""Admin HTTP API. This is the trusted configuration surface the policy
console drives: read the registry, clients, groups, and live policy;
apply rule updates; subscribe to a server-sent event stream of policy
versions and lookup activity. Loopback-bound by default; a bearer token
can be required with ``--admin-token``.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlparse

from .errors import BrokerError, NoSuchGroup
from .policy import AssignGroup, ClearUid, PolicyRule, RemoveRule, SetRule
from .transport import Broker
from .vservices.provider import ProviderHub

log = logging.getLogger("hypobroker.adminapi")

# Reserved container name: assigning it clears every rule for the uid.
GLOBAL_CONTAINER = "Global"


class EventFanout:
    """Broadcasts broker events to any number of SSE subscribers."""

    def __init__(self, broker: Broker):
        self._lock = threading.Lock()
        self._queues: list[queue.Queue] = []
        broker.subscribe(self.publish)

    def publish(self, event: dict) -> None:
        with self._lock:
            for q in self._queues:
                q.put(event)

    def attach(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._queues.append(q)
        return q

    def detach(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._queues:
                self._queues.remove(q)


class AdminServer:
    def __init__(
        self,
        broker: Broker,
        hub: ProviderHub,
        host: str = "127.0.0.1",
        port: int = 7800,
        token: str = "",
        console_dir: Path | None = None,
    ):
        self.broker = broker
        self.hub = hub
        self.token = token
        self.console_dir = console_dir
        self.events = EventFanout(broker)

        server = self

        class _Handler(_AdminHandler):
            admin = server

        class _Server(ThreadingHTTPServer):
            daemon_threads = True

        self._server = _Server((host, port), _Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True, name="admin-http")
        self._thread.start()
        log.info("admin api on http://%s", self.address)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class _AdminHandler(BaseHTTPRequestHandler):
    admin: AdminServer
    protocol_version = "HTTP/1.1"

    # -- plumbing -------------------------------------------------------------

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, PUT, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Authorization")

    def _send_json(self, obj, status: int = 200) -> None:
        data = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error_json(self, status: int, code: str, message: str) -> None:
        self._send_json({"error": code, "message": message}, status=status)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        data = self.rfile.read(length)
        body = json.loads(data.decode("utf-8"))
        if not isinstance(body, dict):
            raise ValueError("body must be a JSON object")
        return body

    def _authorized(self) -> bool:
        if not self.admin.token:
            return True
        header = self.headers.get("Authorization", "")
        return header == f"Bearer {self.admin.token}"

    # -- dispatch -------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        self._route("GET")

    def do_PUT(self):
        self._route("PUT")

    def do_POST(self):
        self._route("POST")

    def do_DELETE(self):
        self._route("DELETE")

    def _route(self, verb: str) -> None:
        if not self._authorized():
            self._send_error_json(401, "unauthorized", "missing or bad bearer token")
            return
        path = urlparse(self.path).path
        try:
            if verb == "GET" and path == "/v1/services":
                self._get_services()
            elif verb == "GET" and path == "/v1/clients":
                self._get_clients()
            elif verb == "GET" and path == "/v1/policy":
                self._get_policy()
            elif verb == "GET" and path == "/v1/groups":
                self._get_groups()
            elif verb == "GET" and path == "/v1/events":
                self._stream_events()
            elif verb == "PUT" and path == "/v1/policy/rules":
                self._put_rule()
            elif verb == "DELETE" and path.startswith("/v1/policy/rules/"):
                self._delete_rule(path)
            elif verb == "POST" and path == "/v1/policy/assign":
                self._post_assign()
            elif verb == "POST" and path == "/v1/provider/events":
                self._post_provider_events()
            elif verb == "GET" and self.admin.console_dir is not None:
                self._serve_console(path)
            else:
                self._send_error_json(404, "not_found", f"no route for {verb} {path}")
        except NoSuchGroup as exc:
            self._send_error_json(404, exc.status, str(exc))
        except BrokerError as exc:
            self._send_error_json(400, exc.status, str(exc))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            self._send_error_json(400, "bad_request", str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass

    # -- routes ---------------------------------------------------------------

    def _get_services(self) -> None:
        snapshot = self.admin.broker.registry.snapshot()
        self._send_json({"services": [{"name": name, "namespace": ns} for name, ns in snapshot]})

    def _get_clients(self) -> None:
        broker = self.admin.broker
        live = broker.live_sessions()
        clients = []
        for identity in broker.identities():
            clients.append(
                {
                    "uid": identity.uid,
                    "label": identity.label.value,
                    "sessions": sum(1 for s in live if s.identity.uid == identity.uid),
                    "lookups": broker.lookup_count(identity.uid),
                }
            )
        self._send_json({"clients": clients})

    def _get_policy(self) -> None:
        current = self.admin.broker.policy_store.current
        rules = sorted(current.rules, key=lambda r: (r.uid, r.service_name))
        self._send_json(
            {
                "version": current.version,
                "rules": [
                    {"uid": r.uid, "service": r.service_name, "namespace": r.namespace} for r in rules
                ],
            }
        )

    def _get_groups(self) -> None:
        groups = self.admin.broker.policy_store.groups
        self._send_json(
            {
                "groups": [
                    {
                        "name": group.group_name,
                        "bindings": [
                            {"service": service, "namespace": ns}
                            for service, ns in sorted(group.bindings)
                        ],
                    }
                    for group in sorted(groups.values(), key=lambda g: g.group_name)
                ]
            }
        )

    def _put_rule(self) -> None:
        body = self._read_body()
        rule = PolicyRule(
            uid=int(body["uid"]),
            service_name=str(body["service"]),
            namespace=int(body["namespace"]),
        )
        new = self.admin.broker.policy_store.apply(SetRule(rule))
        self._send_json({"version": new.version})

    def _delete_rule(self, path: str) -> None:
        parts = path.split("/")
        # /v1/policy/rules/{uid}/{service}
        if len(parts) != 6 or not parts[4].isdigit():
            self._send_error_json(404, "not_found", "expected /v1/policy/rules/{uid}/{service}")
            return
        uid, service = int(parts[4]), parts[5]
        new = self.admin.broker.policy_store.apply(RemoveRule(uid=uid, service_name=service))
        self._send_json({"version": new.version})

    def _post_assign(self) -> None:
        body = self._read_body()
        uid = int(body["uid"])
        group = body.get("group")
        store = self.admin.broker.policy_store
        if group is None or group == GLOBAL_CONTAINER:
            new = store.apply(ClearUid(uid=uid))
        else:
            new = store.apply(AssignGroup(uid=uid, group_name=str(group)))
        self._send_json({"version": new.version})

    def _post_provider_events(self) -> None:
        body = self._read_body()
        events = body.get("events")
        if not isinstance(events, list):
            raise ValueError("body needs an 'events' array")
        for event in events:
            self.admin.hub.apply_event(event)
        self._send_json({"applied": len(events)})

    def _stream_events(self) -> None:
        q = self.admin.events.attach()
        current = self.admin.broker.policy_store.current
        try:
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            self._write_sse("policy", {"type": "policy", "version": current.version})
            while True:
                try:
                    event = q.get(timeout=15.0)
                except queue.Empty:
                    self.wfile.write(b": ping\n\n")
                    self.wfile.flush()
                    continue
                self._write_sse(event.get("type", "event"), event)
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.admin.events.detach(q)

    def _write_sse(self, kind: str, event: dict) -> None:
        blob = json.dumps(event)
        self.wfile.write(f"event: {kind}\ndata: {blob}\n\n".encode("utf-8"))
        self.wfile.flush()

    def _serve_console(self, path: str) -> None:
        base = self.admin.console_dir
        if path in ("/", "/index.html", "/console", "/console/"):
            rel = "index.html"
        elif path.startswith("/console/"):
            rel = path[len("/console/"):]
        else:
            rel = path.lstrip("/")
        target = (base / rel).resolve()
        if base.resolve() not in target.parents and target != base.resolve():
            self._send_error_json(404, "not_found", "no such file")
            return
        if not target.is_file():
            self._send_error_json(404, "not_found", f"no route for GET {path}")
            return
        content_types = {
            ".html": "text/html",
            ".js": "application/javascript",
            ".css": "text/css",
            ".map": "application/json",
        }
        data = target.read_bytes()
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", content_types.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
