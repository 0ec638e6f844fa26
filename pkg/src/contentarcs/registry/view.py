"""Materialized registry state: a pure fold over a set of ledger records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from ..content_id import ContentIdError, Fingerprint, FingerprintIndex
from ..identity import is_actor_id
from ..provenance import Manifest, ProvenanceError, check_integrity, extract_training_mining
from ..rights import LicenseToken, PolicyError, RevocationRecord
from .ledger import LedgerRecord

PAYMENT_CAUSES = ("license_duty", "attribution_royalty")


@dataclass(frozen=True)
class Entry:
    content_key: str
    manifest: Manifest
    record_hash: str
    registered_at: int

    @property
    def manifest_id(self) -> str:
        return self.manifest.manifest_id

    @property
    def owner(self) -> str:
        return self.manifest.signer


@dataclass
class RegistryView:
    entries: dict[str, list[Entry]] = field(default_factory=dict)
    tokens: dict[str, LicenseToken] = field(default_factory=dict)
    revoked: set[str] = field(default_factory=set)
    pending_revocations: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    payments: list[dict] = field(default_factory=list)
    quarantine: list[tuple[str, str]] = field(default_factory=list)
    indexes: dict[str, FingerprintIndex] = field(default_factory=dict)
    record_count: int = 0

    def license_status(self, token_id: str) -> str | None:
        if token_id not in self.tokens:
            return None
        return "revoked" if token_id in self.revoked else "active"

    def all_entries(self) -> list[Entry]:
        return [e for key in sorted(self.entries) for e in self.entries[key]]

    def licenses_for(self, entry: Entry) -> list[LicenseToken]:
        keys = {entry.manifest_id, entry.content_key}
        found = [t for t in self.tokens.values() if t.policy.targets() & keys]
        return sorted(found, key=lambda t: t.token_id)

    def to_document(self) -> dict:
        return {
            "entries": {
                key: [{"manifest_id": e.manifest_id, "record_hash": e.record_hash} for e in items]
                for key, items in sorted(self.entries.items())
            },
            "licenses": {tid: self.license_status(tid) for tid in sorted(self.tokens)},
            "payments": self.payments,
            "quarantine": [list(q) for q in self.quarantine],
            "record_count": self.record_count,
        }


def _registration(record: LedgerRecord) -> tuple[str, Manifest]:
    if set(record.payload) != {"manifest"}:
        raise ValueError("registration payload must be {manifest}")
    manifest = Manifest.from_document(record.payload["manifest"])
    failures = check_integrity(manifest)
    if failures:
        raise ValueError("manifest fails integrity: " + ",".join(failures))
    extract_training_mining(manifest)  # raises on ambiguous consent
    key = manifest.soft_fingerprint()
    if key is None:
        raise ValueError("manifest has no soft-binding fingerprint")
    Fingerprint.from_hex(key)
    if manifest.signer != record.signer:
        raise ValueError("registrant is not the manifest signer")
    return key, manifest


def _issue(record: LedgerRecord) -> LicenseToken:
    if set(record.payload) != {"token"}:
        raise ValueError("license_issue payload must be {token}")
    token = LicenseToken.from_document(record.payload["token"])
    if not token.verify():
        raise ValueError("license token signature does not verify")
    if token.issuer != record.signer:
        raise ValueError("license issued by someone other than the record signer")
    if not is_actor_id(token.holder):
        raise ValueError("license holder is not an actor id")
    return token


def _revoke(record: LedgerRecord) -> RevocationRecord:
    if set(record.payload) != {"revocation"}:
        raise ValueError("license_revoke payload must be {revocation}")
    rev = RevocationRecord.from_document(record.payload["revocation"])
    if not rev.verify():
        raise ValueError("revocation signature does not verify")
    if rev.issuer != record.signer:
        raise ValueError("revocation submitted by someone other than its signer")
    return rev


def _payment(record: LedgerRecord) -> dict:
    if set(record.payload) != {"payment"}:
        raise ValueError("payment payload must be {payment}")
    p = record.payload["payment"]
    if not isinstance(p, dict) or set(p) != {"payer", "payee", "amount", "cause", "reference"}:
        raise ValueError("malformed payment event")
    if not (is_actor_id(p["payer"]) and is_actor_id(p["payee"])):
        raise ValueError("payment parties must be actor ids")
    if isinstance(p["amount"], bool) or not isinstance(p["amount"], int) or p["amount"] <= 0:
        raise ValueError("payment amount must be a positive integer")
    if p["cause"] not in PAYMENT_CAUSES:
        raise ValueError("unknown payment cause")
    if p["payer"] != record.signer:
        raise ValueError("payment not signed by payer")
    return p


def check_payload(record: LedgerRecord) -> Any:
    """Type-specific payload check; raises ValueError describing the defect."""
    try:
        return {
            "manifest_registration": _registration,
            "license_issue": _issue,
            "license_revoke": _revoke,
            "payment": _payment,
        }[record.payload_type](record)
    except (ProvenanceError, PolicyError, ContentIdError, KeyError, TypeError) as exc:
        raise ValueError(str(exc)) from exc


_VALIDATED: dict[str, tuple[bool, Any]] = {}
_VALIDATED_CAP = 100_000


def validate_record(record: LedgerRecord) -> Any:
    """Signature plus payload check, memoized by record hash.

    The result depends only on the record's bytes, so the cache cannot
    change what materialize computes.
    """
    key = record.record_hash
    cached = _VALIDATED.get(key)
    if cached is None:
        try:
            if not record.valid_alone():
                raise ValueError("record is malformed or its signature fails")
            cached = (True, check_payload(record))
        except ValueError as exc:
            cached = (False, str(exc))
        if len(_VALIDATED) >= _VALIDATED_CAP:
            _VALIDATED.clear()
        _VALIDATED[key] = cached
    ok, item = cached
    if not ok:
        raise ValueError(item)
    return item


def fold_order(records: Iterable[LedgerRecord]) -> list[LedgerRecord]:
    unique = {r.record_hash: r for r in records}
    return sorted(unique.values(), key=lambda r: (r.timestamp, r.record_hash))


def materialize(records: Iterable[LedgerRecord]) -> RegistryView:
    """Fold a record set into a view.

    Arrival order is irrelevant: records are deduplicated by hash and folded
    by (timestamp, record_hash). A token is revoked iff some valid
    revocation signed by its issuer exists anywhere in the set. Invalid
    records are quarantined with the reason.
    """
    view = RegistryView()
    for record in fold_order(records):
        view.record_count += 1
        try:
            item = validate_record(record)
        except ValueError as exc:
            view.quarantine.append((record.record_hash, str(exc)))
            continue
        kind = record.payload_type
        if kind == "manifest_registration":
            key, manifest = item
            view.entries.setdefault(key, []).append(
                Entry(key, manifest, record.record_hash, record.timestamp)
            )
        elif kind == "license_issue":
            view.tokens.setdefault(item.token_id, item)
        elif kind == "license_revoke":
            view.pending_revocations.setdefault(item.token_id, []).append((item.issuer, record.record_hash))
        else:
            view.payments.append(dict(item, record_hash=record.record_hash))

    for token_id in sorted(view.pending_revocations):
        token = view.tokens.get(token_id)
        if token is None:
            continue  # inert until the issue record shows up
        for revoker, record_hash in view.pending_revocations[token_id]:
            if revoker == token.issuer:
                view.revoked.add(token_id)
            else:
                view.quarantine.append((record_hash, f"revocation of {token_id} by non-issuer {revoker}"))

    for key in sorted(view.entries):
        fp = Fingerprint.from_hex(key)
        view.indexes.setdefault(fp.algorithm, FingerprintIndex()).insert(fp, key)
    return view


@dataclass
class Hit:
    entry: Entry
    distance: int
    training_mining: dict[str, str] | None
    licenses: list[tuple[LicenseToken, str]]

    @property
    def active_licenses(self) -> list[str]:
        return [t.token_id for t, status in self.licenses if status == "active"]

    def to_document(self) -> dict:
        return {
            "content_key": self.entry.content_key,
            "distance": self.distance,
            "manifest_id": self.entry.manifest_id,
            "manifest": self.entry.manifest.to_document(),
            "owner": self.entry.owner,
            "record_hash": self.entry.record_hash,
            "registered_at": self.entry.registered_at,
            "training_mining": self.training_mining,
            "licenses": [
                {"token": t.to_document(), "status": status} for t, status in self.licenses
            ],
        }


def lookup(view: RegistryView, probe: Fingerprint, max_distance: int) -> list[Hit]:
    index = view.indexes.get(probe.algorithm)
    if index is None:
        return []
    hits = []
    for key, distance in index.query(probe, max_distance):
        for entry in view.entries[key]:
            licenses = [(t, view.license_status(t.token_id)) for t in view.licenses_for(entry)]
            hits.append(Hit(entry, distance, extract_training_mining(entry.manifest), licenses))
    return hits


def registration_payload(manifest: Manifest) -> dict:
    return {"manifest": manifest.to_document()}


def issue_payload(token: LicenseToken) -> dict:
    return {"token": token.to_document()}


def revoke_payload(revocation: RevocationRecord) -> dict:
    return {"revocation": revocation.to_document()}


def payment_payload(event: Any) -> dict:
    doc = event.to_document() if hasattr(event, "to_document") else dict(event)
    return {"payment": doc}
