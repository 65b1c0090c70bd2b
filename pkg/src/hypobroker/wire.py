"""Socket transport: length-prefixed JSON frames.

Requests are ``{handle, method, payload}`` and replies ``{status,
payload}``. The first frame on a fresh connection must be a connect
addressed to handle 0 carrying the client's token; the broker binds the
connection to the manifest identity and every later frame is dispatched
with that stamped sender.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading
from pathlib import Path

from .errors import AuthRejected, BadRequest, BrokerError, error_for_status
from .transport import Broker, ClientSession, REGISTRY_HANDLE

log = logging.getLogger("hypobroker.wire")

_LEN = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


def write_frame(sock: socket.socket, body: dict) -> None:
    data = json.dumps(body, separators=(",", ":")).encode("utf-8")
    if len(data) > MAX_FRAME:
        raise BadRequest(f"frame of {len(data)} bytes exceeds limit")
    sock.sendall(_LEN.pack(len(data)) + data)


def read_frame(sock: socket.socket) -> dict | None:
    """Read one frame, or None on clean EOF at a frame boundary."""
    header = _read_exactly(sock, _LEN.size)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME:
        raise BadRequest(f"frame of {length} bytes exceeds limit")
    data = _read_exactly(sock, length)
    if data is None:
        raise BadRequest("connection closed mid-frame")
    body = json.loads(data.decode("utf-8"))
    if not isinstance(body, dict):
        raise BadRequest("frame body must be a JSON object")
    return body


def _read_exactly(sock: socket.socket, n: int) -> bytes | None:
    chunks = bytearray()
    while len(chunks) < n:
        chunk = sock.recv(n - len(chunks))
        if not chunk:
            if chunks:
                raise BadRequest("connection closed mid-frame")
            return None
        chunks.extend(chunk)
    return bytes(chunks)


def parse_endpoint(spec: str) -> tuple[str, ...]:
    """``unix:/path`` or ``tcp:host:port``; a bare path means unix."""
    if spec.startswith("unix:"):
        return ("unix", spec[len("unix:"):])
    if spec.startswith("tcp:"):
        host, _, port = spec[len("tcp:"):].rpartition(":")
        if not host or not port.isdigit():
            raise BadRequest(f"bad tcp endpoint {spec!r}")
        return ("tcp", host, port)
    return ("unix", spec)


# -- server --------------------------------------------------------------------


class _BusHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        broker: Broker = self.server.broker  # type: ignore[attr-defined]
        session: ClientSession | None = None
        sock = self.request
        try:
            while True:
                try:
                    frame = read_frame(sock)
                except (BadRequest, json.JSONDecodeError, OSError) as exc:
                    if session is not None or not isinstance(exc, OSError):
                        log.debug("dropping connection: %s", exc)
                    return
                if frame is None:
                    return
                if session is None:
                    session = self._connect(sock, broker, frame)
                    if session is None:
                        return
                    continue
                self._serve_frame(sock, broker, session, frame)
        finally:
            if session is not None:
                broker.disconnect(session)

    def _connect(self, sock, broker: Broker, frame: dict) -> ClientSession | None:
        method = frame.get("method")
        token = (frame.get("payload") or {}).get("token")
        if frame.get("handle") != REGISTRY_HANDLE or method != "connect" or not isinstance(token, str):
            write_frame(sock, {"status": BadRequest.status, "payload": {"message": "expected connect frame"}})
            return None
        try:
            session = broker.connect(token)
        except AuthRejected as exc:
            write_frame(sock, {"status": exc.status, "payload": {"message": str(exc)}})
            return None
        write_frame(
            sock,
            {
                "status": "ok",
                "payload": {"uid": session.identity.uid, "label": session.identity.label.value},
            },
        )
        return session

    def _serve_frame(self, sock, broker: Broker, session: ClientSession, frame: dict) -> None:
        handle = frame.get("handle")
        method = frame.get("method")
        payload = frame.get("payload") or {}
        if not isinstance(method, str) or not isinstance(payload, dict):
            write_frame(sock, {"status": BadRequest.status, "payload": {"message": "malformed request"}})
            return
        try:
            reply = broker.transact(session, handle, method, payload)
            write_frame(sock, {"status": "ok", "payload": reply})
        except BrokerError as exc:
            write_frame(sock, {"status": exc.status, "payload": {"message": str(exc)}})


class BusServer:
    """Threaded socket server fronting one broker."""

    def __init__(self, broker: Broker, endpoint: str):
        self.endpoint = parse_endpoint(endpoint)
        if self.endpoint[0] == "unix":
            path = Path(self.endpoint[1])
            if path.exists():
                path.unlink()

            class _Server(socketserver.ThreadingUnixStreamServer):
                daemon_threads = True

            self._server = _Server(str(path), _BusHandler)
        else:
            class _Server(socketserver.ThreadingTCPServer):
                daemon_threads = True
                allow_reuse_address = True

            self._server = _Server((self.endpoint[1], int(self.endpoint[2])), _BusHandler)
        self._server.broker = broker  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        if self.endpoint[0] == "unix":
            return f"unix:{self.endpoint[1]}"
        host, port = self._server.server_address[:2]
        return f"tcp:{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True, name="bus-server")
        self._thread.start()
        log.info("bus listening on %s", self.address)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self.endpoint[0] == "unix":
            Path(self.endpoint[1]).unlink(missing_ok=True)


# -- client --------------------------------------------------------------------


class BusClient:
    """Blocking client for the frame protocol. Raises the same error types
    the in-process API does, mapped back from the reply status."""

    def __init__(self, endpoint: str, token: str, timeout: float = 10.0):
        parsed = parse_endpoint(endpoint)
        if parsed[0] == "unix":
            self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            self._sock.settimeout(timeout)
            self._sock.connect(parsed[1])
        else:
            self._sock = socket.create_connection((parsed[1], int(parsed[2])), timeout=timeout)
        self._lock = threading.Lock()
        reply = self._roundtrip({"handle": REGISTRY_HANDLE, "method": "connect", "payload": {"token": token}})
        self.uid = reply["uid"]
        self.label = reply["label"]

    def _roundtrip(self, frame: dict) -> dict:
        with self._lock:
            write_frame(self._sock, frame)
            reply = read_frame(self._sock)
        if reply is None:
            raise ConnectionError("bus connection closed")
        status = reply.get("status", "error")
        payload = reply.get("payload") or {}
        if status != "ok":
            raise error_for_status(status, payload.get("message", ""))
        return payload

    def transact(self, handle: int, method: str, payload: dict | None = None) -> dict:
        return self._roundtrip({"handle": handle, "method": method, "payload": payload or {}})

    def get_service(self, name: str) -> int:
        return self.transact(REGISTRY_HANDLE, "get_service", {"name": name})["handle"]

    def list_services(self) -> list[tuple[str, int]]:
        reply = self.transact(REGISTRY_HANDLE, "list_services")
        return [(name, ns) for name, ns in reply["services"]]

    def transfer_handle(self, recipient_uid: int, handle: int) -> dict:
        return self.transact(
            REGISTRY_HANDLE, "transfer_handle", {"recipient_uid": recipient_uid, "handle": handle}
        )

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "BusClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
