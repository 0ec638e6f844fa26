"""A federation node: its own chain, mirrors of peers' chains, and sync."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from ..content_id import Fingerprint
from ..identity import KeyPair, generate_keypair, keypair_from_hex
from ..storage import read_document, write_document
from .ledger import (
    LedgerError,
    LedgerRecord,
    head_hash,
    make_record,
    read_chain,
    verify_chain,
    write_chain_line,
)
from .view import Hit, RegistryView, check_payload, lookup, materialize

FETCH_PAGE = 500


class RegistryError(Exception):
    code = "registry_error"


class StaleHead(RegistryError):
    code = "stale_head"


class AuthorizationError(RegistryError):
    code = "unauthorized"


class InvalidRecord(RegistryError):
    code = "invalid_record"


class SyncError(RegistryError):
    code = "sync_failed"


class RecordSource(Protocol):
    """What sync needs from a peer, local or over the wire."""

    def head(self) -> dict: ...

    def fetch(self, origin: str, start: int, end: int) -> list[LedgerRecord]: ...


@dataclass
class SyncResult:
    added: int
    chains: dict[str, int] = field(default_factory=dict)


class NodeState:
    """Single writer, many readers.

    Writes (submit, sync) hold ``_write_lock``; readers take the current
    immutable view snapshot, swapped in whole after each write.
    """

    def __init__(self, key: KeyPair | None = None, data_dir: str | Path | None = None,
                 known_peers: list[str] | None = None):
        self.key = key or generate_keypair()
        self.node_id = self.key.actor
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.known_peers = list(known_peers or [])
        self.chains: dict[str, list[LedgerRecord]] = {self.node_id: []}
        self._write_lock = threading.RLock()
        self._view: RegistryView | None = None
        if self.data_dir is not None:
            self._load()

    # -- persistence --

    @classmethod
    def open(cls, data_dir: str | Path) -> "NodeState":
        """Load (or create) a node whose key and chains live under data_dir."""
        data_dir = Path(data_dir)
        key_file = data_dir / "node.key"
        if key_file.exists():
            key = keypair_from_hex(read_document(key_file)["secret_key"])
        else:
            key = generate_keypair()
            data_dir.mkdir(parents=True, exist_ok=True)
            write_document(key_file, {"secret_key": key.secret_key.hex()}, mode=0o600)
        return cls(key, data_dir)

    def _chain_file(self, origin: str) -> Path:
        assert self.data_dir is not None
        return self.data_dir / "chains" / f"{origin.removeprefix('arc:')}.jsonl"

    def _load(self) -> None:
        chain_dir = self.data_dir / "chains"
        if not chain_dir.exists():
            return
        for path in sorted(chain_dir.glob("*.jsonl")):
            origin = "arc:" + path.stem
            chain = read_chain(path)
            report = verify_chain(chain, node=origin)
            if not report.valid:
                raise LedgerError(f"stored chain {path.name} is corrupt at seq {report.first_bad_seq}")
            self.chains[origin] = chain

    def _persist(self, origin: str, records: list[LedgerRecord]) -> None:
        if self.data_dir is None:
            return
        path = self._chain_file(origin)
        path.parent.mkdir(parents=True, exist_ok=True)
        for record in records:
            write_chain_line(path, record)

    # -- reads --

    @property
    def chain(self) -> list[LedgerRecord]:
        return self.chains[self.node_id]

    def records(self) -> list[LedgerRecord]:
        return [r for origin in sorted(self.chains) for r in self.chains[origin]]

    def view(self) -> RegistryView:
        snapshot = self._view
        if snapshot is None:
            with self._write_lock:
                if self._view is None:
                    self._view = materialize(self.records())
                snapshot = self._view
        return snapshot

    def lookup(self, probe: Fingerprint, max_distance: int) -> list[Hit]:
        return lookup(self.view(), probe, max_distance)

    def head(self) -> dict:
        with self._write_lock:
            chains = {
                origin: {"length": len(c), "head_hash": c[-1].record_hash if c else None}
                for origin, c in sorted(self.chains.items())
            }
        own = chains[self.node_id]
        return {
            "node_id": self.node_id,
            "seq": own["length"] - 1 if own["length"] else None,
            "head_hash": own["head_hash"],
            "chains": chains,
        }

    def fetch(self, origin: str, start: int, end: int) -> list[LedgerRecord]:
        chain = self.chains.get(origin, [])
        start = max(0, start)
        return list(chain[start:max(start, end)])

    # -- writes --

    def submit(self, record: LedgerRecord) -> LedgerRecord:
        """Accept a pre-signed record that extends this node's own chain."""
        with self._write_lock:
            own = self.chain
            if record.node != self.node_id:
                raise InvalidRecord("record is addressed to another node's chain")
            if record.seq != len(own) or record.prev_hash != head_hash(own):
                raise StaleHead(f"chain head is seq {len(own) - 1}; record has seq {record.seq}")
            if not record.valid_alone():
                raise InvalidRecord("record is malformed or its signature fails")
            try:
                item = check_payload(record)
            except ValueError as exc:
                raise InvalidRecord(str(exc)) from exc
            if record.payload_type == "license_revoke":
                token = self.view().tokens.get(item.token_id)
                # unknown tokens are accepted; materialize decides once the issue arrives
                if token is not None and token.issuer != item.issuer:
                    raise AuthorizationError("only the issuing party may revoke a license")
            self._persist(self.node_id, [record])
            own.append(record)
            self._view = None
            return record

    def append(self, payload_type: str, payload: dict, signer: KeyPair, time: int) -> LedgerRecord:
        with self._write_lock:
            record = make_record(
                self.node_id, len(self.chain), head_hash(self.chain), payload_type, payload, signer, time
            )
            return self.submit(record)

    def sync(self, remote: RecordSource) -> SyncResult:
        return sync(self, remote)


def append(node: NodeState, payload_type: str, payload: dict, signer: KeyPair, time: int) -> LedgerRecord:
    return node.append(payload_type, payload, signer, time)


def _fetch_all(remote: RecordSource, origin: str, start: int, end: int) -> list[LedgerRecord]:
    out: list[LedgerRecord] = []
    while start + len(out) < end:
        lo = start + len(out)
        page = remote.fetch(origin, lo, min(end, lo + FETCH_PAGE))
        if not page:
            raise SyncError(f"peer returned no records for {origin} from seq {lo}")
        out.extend(page)
    return out[: end - start]


def sync(local: NodeState, remote: RecordSource) -> SyncResult:
    """Pull every chain the remote knows that extends what we hold.

    All fetched suffixes are verified before anything is stored; one bad
    chain aborts the whole sync and leaves local state untouched.
    """
    try:
        remote_head = remote.head()
        remote_chains = remote_head["chains"]
        if not isinstance(remote_chains, dict):
            raise SyncError("peer head has no chain listing")
    except SyncError:
        raise
    except Exception as exc:
        raise SyncError(f"could not read peer head: {exc}") from exc

    with local._write_lock:
        staged: dict[str, list[LedgerRecord]] = {}
        for origin in sorted(remote_chains):
            info = remote_chains[origin]
            try:
                length, their_head = int(info["length"]), info["head_hash"]
            except (KeyError, TypeError, ValueError) as exc:
                raise SyncError(f"bad head entry for {origin}") from exc
            ours = local.chains.get(origin, [])
            if length <= len(ours):
                if length and ours[length - 1].record_hash != their_head:
                    raise SyncError(f"peer disagrees with our copy of {origin} (fork)")
                continue
            if origin == local.node_id:
                raise SyncError("peer claims records on our own chain that we never wrote")
            try:
                fetched = _fetch_all(remote, origin, len(ours), length)
            except SyncError:
                raise
            except Exception as exc:
                raise SyncError(f"fetch of {origin} failed: {exc}") from exc
            report = verify_chain(ours + fetched, node=origin)
            if not report.valid:
                raise SyncError(f"peer chain {origin} invalid at seq {report.first_bad_seq}: {report.reason}")
            if fetched[-1].record_hash != their_head:
                raise SyncError(f"peer chain {origin} does not end at its advertised head")
            staged[origin] = fetched

        for origin, fetched in staged.items():
            local._persist(origin, fetched)
            local.chains.setdefault(origin, []).extend(fetched)
        if staged:
            local._view = None
        return SyncResult(
            added=sum(len(f) for f in staged.values()),
            chains={o: len(f) for o, f in staged.items()},
        )
