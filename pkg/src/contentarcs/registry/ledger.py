"""Hash-chained, signed ledger records and chain verification."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable

from ..identity import (
    KeyPair,
    actor_id,
    canonical_bytes,
    hexdigest,
    is_actor_id,
    parse_canonical,
    public_key_from_hex,
    sign,
    verify,
)

GENESIS = "0" * 64
PAYLOAD_TYPES = ("manifest_registration", "license_issue", "license_revoke", "payment")
_FIELDS = ("node", "seq", "prev_hash", "timestamp", "payload_type", "payload", "signer", "signer_key", "signature")


class LedgerError(ValueError):
    pass


@dataclass(frozen=True)
class LedgerRecord:
    """One link of a node's chain.

    ``node`` names the chain the record belongs to and ``signer_key`` lets a
    verifier check the signature without a key directory. The signature
    covers every other field, so any edit is caught at this record.
    """

    node: str
    seq: int
    prev_hash: str
    timestamp: int
    payload_type: str
    payload: Any
    signer: str
    signer_key: str
    signature: str

    def unsigned(self) -> dict:
        return {
            "node": self.node,
            "payload": self.payload,
            "payload_type": self.payload_type,
            "prev_hash": self.prev_hash,
            "seq": self.seq,
            "signer": self.signer,
            "signer_key": self.signer_key,
            "timestamp": self.timestamp,
        }

    def to_document(self) -> dict:
        return dict(self.unsigned(), signature=self.signature)

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.to_document())

    @cached_property
    def record_hash(self) -> str:
        return hexdigest(self.to_bytes())

    def signature_ok(self) -> bool:
        try:
            key = public_key_from_hex(self.signer_key)
            sig = bytes.fromhex(self.signature)
            message = canonical_bytes(self.unsigned())
        except (ValueError, TypeError):
            return False
        return actor_id(key) == self.signer and verify(message, sig, key)

    def well_formed(self) -> bool:
        return (
            is_actor_id(self.node)
            and is_actor_id(self.signer)
            and _is_int(self.seq)
            and self.seq >= 0
            and _is_int(self.timestamp)
            and isinstance(self.prev_hash, str)
            and len(self.prev_hash) == 64
            and self.payload_type in PAYLOAD_TYPES
            and isinstance(self.payload, dict)
        )

    def valid_alone(self) -> bool:
        return self.well_formed() and self.signature_ok()

    @classmethod
    def from_document(cls, doc: Any) -> "LedgerRecord":
        if not isinstance(doc, dict) or set(doc) != set(_FIELDS):
            raise LedgerError("malformed ledger record")
        return cls(**{f: doc[f] for f in _FIELDS})


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def make_record(
    node: str,
    seq: int,
    prev_hash: str,
    payload_type: str,
    payload: dict,
    signer: KeyPair,
    timestamp: int,
) -> LedgerRecord:
    if payload_type not in PAYLOAD_TYPES:
        raise LedgerError(f"unknown payload type {payload_type!r}")
    draft = LedgerRecord(
        node=node,
        seq=seq,
        prev_hash=prev_hash,
        timestamp=timestamp,
        payload_type=payload_type,
        payload=payload,
        signer=signer.actor,
        signer_key=signer.public_key.hex(),
        signature="",
    )
    sig = sign(canonical_bytes(draft.unsigned()), signer)
    return replace(draft, signature=sig.hex())


@dataclass
class ChainReport:
    valid: bool
    first_bad_seq: int | None = None
    reason: str = ""


def verify_chain(chain: list[LedgerRecord], node: str | None = None) -> ChainReport:
    """Check numbering, hash links and signatures.

    ``first_bad_seq`` is the list position of the first offending record.
    """
    prev = GENESIS
    owner = node if node is not None else (chain[0].node if chain else None)
    for position, record in enumerate(chain):
        if not record.well_formed():
            return ChainReport(False, position, "malformed record")
        if record.node != owner:
            return ChainReport(False, position, "record belongs to another chain")
        if record.seq != position:
            return ChainReport(False, position, f"seq {record.seq} at position {position}")
        if record.prev_hash != prev:
            return ChainReport(False, position, "prev_hash does not link")
        if not record.signature_ok():
            return ChainReport(False, position, "bad signature")
        prev = record.record_hash
    return ChainReport(True)


def head_hash(chain: list[LedgerRecord]) -> str:
    return chain[-1].record_hash if chain else GENESIS


def write_chain_line(path: Path, record: LedgerRecord) -> None:
    with open(path, "ab") as fh:
        fh.write(record.to_bytes() + b"\n")


def read_chain(path: Path) -> list[LedgerRecord]:
    if not path.exists():
        return []
    return [
        LedgerRecord.from_document(parse_canonical(line))
        for line in path.read_bytes().splitlines()
        if line.strip()
    ]


def records_hashes(records: Iterable[LedgerRecord]) -> set[str]:
    return {r.record_hash for r in records}
