"""Newline-delimited canonical-document protocol between nodes and clients.

Request:  {"op": str, "params": map, "request_id": str}
Response: {"request_id": str, "ok": true, "result": ...}
          {"request_id": str|null, "ok": false, "error": {"code": str, "message": str}}

Ops: head, fetch, lookup, submit, plus sync (ask the node to pull from a peer).
"""

from __future__ import annotations

import itertools
import logging
import socket
import socketserver
import threading
import time
from typing import Any, Callable

from ..content_id import ContentIdError, Fingerprint
from ..identity import KeyPair, canonical_bytes, parse_canonical
from .ledger import LedgerError, LedgerRecord, make_record
from .node import NodeState, RegistryError

log = logging.getLogger(__name__)

MAX_LINE = 16 * 1024 * 1024
MAX_FETCH = 1000


class RemoteError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class NodeUnreachable(ConnectionError):
    pass


class BadRequest(Exception):
    pass


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


def _int_param(params: dict, name: str, default: int | None = None) -> int:
    value = params.get(name, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise BadRequest(f"param {name} must be an integer")
    return value


class Dispatcher:
    def __init__(self, node: NodeState, client_factory: Callable[[str], Any] | None = None):
        self.node = node
        self.client_factory = client_factory or RemoteNode

    def handle_line(self, line: bytes) -> bytes:
        request_id = None
        try:
            try:
                request = parse_canonical(line)
            except (ValueError, TypeError, UnicodeDecodeError) as exc:
                raise BadRequest(f"unparseable request: {exc}") from exc
            if not isinstance(request, dict):
                raise BadRequest("request must be a map")
            request_id = request.get("request_id")
            if not isinstance(request_id, str):
                request_id = None
                raise BadRequest("request_id must be a string")
            op, params = request.get("op"), request.get("params", {})
            if not isinstance(params, dict):
                raise BadRequest("params must be a map")
            handler = getattr(self, f"op_{op}", None) if isinstance(op, str) else None
            if handler is None:
                raise BadRequest(f"unknown op {op!r}")
            response = {"request_id": request_id, "ok": True, "result": handler(params)}
        except BadRequest as exc:
            response = _error(request_id, "bad_request", str(exc))
        except RegistryError as exc:
            response = _error(request_id, exc.code, str(exc))
        except Exception as exc:  # never let one request take the server down
            log.exception("request failed")
            response = _error(request_id, "internal", f"{type(exc).__name__}: {exc}")
        return canonical_bytes(response) + b"\n"

    def op_head(self, params: dict) -> dict:
        return self.node.head()

    def op_fetch(self, params: dict) -> dict:
        origin = params.get("origin", self.node.node_id)
        if not isinstance(origin, str):
            raise BadRequest("origin must be a string")
        start = _int_param(params, "start", 0)
        end = _int_param(params, "end", start + MAX_FETCH)
        end = min(end, start + MAX_FETCH)
        return {"origin": origin, "records": [r.to_document() for r in self.node.fetch(origin, start, end)]}

    def op_lookup(self, params: dict) -> dict:
        try:
            probe = Fingerprint.from_hex(params.get("fingerprint"))
        except (ContentIdError, AttributeError) as exc:
            raise BadRequest(f"bad fingerprint: {exc}") from exc
        max_distance = _int_param(params, "max_distance", 0)
        return {"hits": [h.to_document() for h in self.node.lookup(probe, max_distance)]}

    def op_submit(self, params: dict) -> dict:
        try:
            record = LedgerRecord.from_document(params.get("record"))
        except LedgerError as exc:
            raise BadRequest(str(exc)) from exc
        accepted = self.node.submit(record)
        return {"seq": accepted.seq, "record_hash": accepted.record_hash}

    def op_sync(self, params: dict) -> dict:
        peer = params.get("peer")
        if not isinstance(peer, str):
            raise BadRequest("peer must be host:port")
        result = self.node.sync(self.client_factory(peer))
        return {"added": result.added, "chains": result.chains}


def _error(request_id: str | None, code: str, message: str) -> dict:
    return {"request_id": request_id, "ok": False, "error": {"code": code, "message": message}}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        dispatcher: Dispatcher = self.server.dispatcher  # type: ignore[attr-defined]
        while True:
            try:
                line = self.rfile.readline(MAX_LINE)
            except OSError:
                return
            if not line:
                return
            if not line.strip():
                continue
            try:
                self.wfile.write(dispatcher.handle_line(line.strip()))
                self.wfile.flush()
            except OSError:
                return


class NodeServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128

    def __init__(self, node: NodeState, endpoint: str = "127.0.0.1:0"):
        super().__init__(parse_endpoint(endpoint), _Handler)
        self.node = node
        self.dispatcher = Dispatcher(node)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "NodeServer":
        self._thread = threading.Thread(target=self.serve_forever, args=(0.05,), daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "NodeServer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()


def serve(node: NodeState, endpoint: str, background: bool = False) -> NodeServer:
    server = NodeServer(node, endpoint)
    if background:
        return server.start()
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return server


class RemoteNode:
    """Client for one node. Opens a fresh connection per request."""

    _ids = itertools.count()

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.address = parse_endpoint(endpoint)
        self.timeout = timeout

    def call(self, op: str, **params: Any) -> Any:
        request_id = f"req-{next(self._ids)}"
        payload = canonical_bytes({"op": op, "params": params, "request_id": request_id}) + b"\n"
        try:
            with socket.create_connection(self.address, timeout=self.timeout) as sock:
                sock.sendall(payload)
                with sock.makefile("rb") as fh:
                    line = fh.readline(MAX_LINE)
        except OSError as exc:
            raise NodeUnreachable(f"cannot reach node at {self.endpoint}: {exc}") from exc
        if not line:
            raise NodeUnreachable(f"node at {self.endpoint} closed the connection")
        try:
            response = parse_canonical(line)
        except (ValueError, TypeError, UnicodeDecodeError) as exc:
            raise RemoteError("bad_response", f"unparseable response: {exc}") from exc
        if not isinstance(response, dict) or "ok" not in response:
            raise RemoteError("bad_response", "response is not a protocol document")
        if response.get("request_id") != request_id:
            raise RemoteError("bad_response", "response request_id does not match")
        if not response["ok"]:
            err = response.get("error") or {}
            raise RemoteError(str(err.get("code", "unknown")), str(err.get("message", "")))
        return response.get("result")

    def head(self) -> dict:
        return self.call("head")

    def fetch(self, origin: str, start: int, end: int) -> list[LedgerRecord]:
        result = self.call("fetch", origin=origin, start=start, end=end)
        try:
            return [LedgerRecord.from_document(doc) for doc in result["records"]]
        except (LedgerError, KeyError, TypeError) as exc:
            raise RemoteError("bad_response", f"malformed records: {exc}") from exc

    def lookup(self, probe: Fingerprint | str, max_distance: int) -> list[dict]:
        return self.call("lookup", fingerprint=str(probe), max_distance=max_distance)["hits"]

    def submit(self, record: LedgerRecord) -> dict:
        return self.call("submit", record=record.to_document())

    def sync(self, peer: str) -> dict:
        return self.call("sync", peer=peer)


def query_head(endpoint: str) -> dict:
    return RemoteNode(endpoint).head()


def query_lookup(endpoint: str, probe: Fingerprint | str, max_distance: int) -> list[dict]:
    return RemoteNode(endpoint).lookup(probe, max_distance)


def fetch_records(endpoint: str, origin: str, start: int, end: int) -> list[LedgerRecord]:
    return RemoteNode(endpoint).fetch(origin, start, end)


def submit_payload(
    client: RemoteNode,
    payload_type: str,
    payload: dict,
    signer: KeyPair,
    timestamp: int,
    retries: int = 5,
) -> dict:
    """Sign a record against the node's current head and submit it.

    Retries when another writer got there first.
    """
    for attempt in range(retries):
        head = client.head()
        node_id = head["node_id"]
        length = head["chains"][node_id]["length"]
        prev = head["head_hash"] or "0" * 64
        record = make_record(node_id, length, prev, payload_type, payload, signer, timestamp)
        try:
            return client.submit(record)
        except RemoteError as exc:
            if exc.code != "stale_head" or attempt == retries - 1:
                raise
            time.sleep(0.01 * (attempt + 1))
    raise RemoteError("stale_head", "gave up after retries")
