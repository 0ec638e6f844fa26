"""Signed manifests binding assertions to asset bytes, and their ingredient graph."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .identity import (
    KeyPair,
    Signature,
    actor_id,
    canonical_bytes,
    hexdigest,
    parse_canonical,
    public_key_from_hex,
    sign,
    verify,
)
from .storage import atomic_write

ASSERTION_KINDS = ("hash_binding", "soft_binding", "creation_info", "training_mining", "ingredient")
TRAINING_CATEGORIES = ("data_mining", "ai_training", "ai_generative_training", "ai_inference")
TRAINING_VALUES = ("allowed", "not_allowed", "constrained")
FAILURES = (
    "hash_mismatch",
    "bad_signature",
    "bad_assertion_digest",
    "untrusted_signer",
    "missing_hash_binding",
)
SIDECAR_SUFFIX = ".arcm"


class ProvenanceError(ValueError):
    pass


class ProvenanceCycleError(ProvenanceError):
    def __init__(self, cycle: list[str]):
        super().__init__("provenance cycle: " + " -> ".join(cycle))
        self.cycle = cycle


class AmbiguousConsentError(ProvenanceError):
    pass


@dataclass(frozen=True)
class Assertion:
    kind: str
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in ASSERTION_KINDS:
            raise ProvenanceError(f"unknown assertion kind {self.kind!r}")
        _check_payload(self.kind, self.payload)

    def to_document(self) -> dict:
        return {"kind": self.kind, "payload": self.payload}

    def digest(self) -> str:
        return hexdigest(canonical_bytes(self.to_document()))

    @classmethod
    def from_document(cls, doc: dict) -> "Assertion":
        if not isinstance(doc, dict) or set(doc) != {"kind", "payload"}:
            raise ProvenanceError("assertion must have exactly kind and payload")
        return cls(doc["kind"], doc["payload"])


def _is_hex(text: Any, length: int | None = None) -> bool:
    if not isinstance(text, str) or text != text.lower():
        return False
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        return False
    return length is None or len(raw) == length


def _check_payload(kind: str, payload: Any) -> None:
    if not isinstance(payload, dict):
        raise ProvenanceError(f"{kind} payload must be a map")
    if kind == "hash_binding":
        if payload.get("alg") != "sha256" or not _is_hex(payload.get("hash"), 32):
            raise ProvenanceError("hash_binding needs alg=sha256 and a 32-byte hex hash")
    elif kind == "soft_binding":
        if "fingerprint" not in payload and "watermark" not in payload:
            raise ProvenanceError("soft_binding needs a fingerprint and/or watermark id")
        if "watermark" in payload and not _is_hex(payload["watermark"], 8):
            raise ProvenanceError("watermark id must be 16 hex chars")
    elif kind == "training_mining":
        entries = payload.get("entries")
        if not isinstance(entries, dict) or set(entries) != set(TRAINING_CATEGORIES):
            raise ProvenanceError("training_mining must list all four categories")
        if any(v not in TRAINING_VALUES for v in entries.values()):
            raise ProvenanceError("training_mining values must be allowed/not_allowed/constrained")
    elif kind == "ingredient":
        if not isinstance(payload.get("manifest_id"), str):
            raise ProvenanceError("ingredient needs a manifest_id reference")


def hash_binding(asset: bytes) -> Assertion:
    return Assertion("hash_binding", {"alg": "sha256", "hash": hexdigest(asset)})


def soft_binding(fingerprint: str | None = None, watermark: int | None = None) -> Assertion:
    payload: dict = {}
    if fingerprint is not None:
        payload["fingerprint"] = str(fingerprint)
    if watermark is not None:
        payload["watermark"] = f"{watermark:016x}"
    return Assertion("soft_binding", payload)


def training_mining(entries: dict[str, str] | None = None, **kw: str) -> Assertion:
    merged = dict(entries or {}, **kw)
    return Assertion("training_mining", {"entries": merged})


def ingredient(manifest_id: str, relationship: str = "parentOf") -> Assertion:
    return Assertion("ingredient", {"manifest_id": manifest_id, "relationship": relationship})


def creation_info(**fields: Any) -> Assertion:
    return Assertion("creation_info", dict(fields))


@dataclass(frozen=True)
class Claim:
    assertion_digests: tuple[str, ...]
    claim_generator: str
    timestamp: int
    signer: str
    signer_key: str

    def to_document(self) -> dict:
        return {
            "assertions": list(self.assertion_digests),
            "claim_generator": self.claim_generator,
            "signer": self.signer,
            "signer_key": self.signer_key,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "Claim":
        expected = {"assertions", "claim_generator", "signer", "signer_key", "timestamp"}
        if not isinstance(doc, dict) or set(doc) != expected:
            raise ProvenanceError("malformed claim")
        return cls(
            tuple(doc["assertions"]),
            doc["claim_generator"],
            doc["timestamp"],
            doc["signer"],
            doc["signer_key"],
        )

    def manifest_id(self) -> str:
        return "urn:arc:" + hexdigest(canonical_bytes(self.to_document()))[:32]


@dataclass(frozen=True)
class Manifest:
    manifest_id: str
    assertions: tuple[Assertion, ...]
    claim: Claim
    signature: Signature

    @property
    def signer(self) -> str:
        return self.claim.signer

    def by_kind(self, kind: str) -> list[Assertion]:
        return [a for a in self.assertions if a.kind == kind]

    def soft_fingerprint(self) -> str | None:
        for a in self.by_kind("soft_binding"):
            if "fingerprint" in a.payload:
                return a.payload["fingerprint"]
        return None

    def ingredient_ids(self) -> list[str]:
        return [a.payload["manifest_id"] for a in self.by_kind("ingredient")]

    def to_document(self) -> dict:
        return {
            "manifest_id": self.manifest_id,
            "assertions": [a.to_document() for a in self.assertions],
            "claim": self.claim.to_document(),
            "signature": self.signature.hex(),
        }

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.to_document())

    @classmethod
    def from_document(cls, doc: dict) -> "Manifest":
        if not isinstance(doc, dict) or set(doc) != {"manifest_id", "assertions", "claim", "signature"}:
            raise ProvenanceError("malformed manifest")
        claim = Claim.from_document(doc["claim"])
        if not _is_hex(doc["signature"], 64):
            raise ProvenanceError("signature must be 64 hex bytes")
        return cls(
            manifest_id=doc["manifest_id"],
            assertions=tuple(Assertion.from_document(a) for a in doc["assertions"]),
            claim=claim,
            signature=Signature(bytes.fromhex(doc["signature"]), claim.signer),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Manifest":
        return cls.from_document(parse_canonical(data))


def create_manifest(
    asset: bytes,
    assertions: Iterable[Assertion],
    signer: KeyPair,
    generator: str,
    timestamp: int,
) -> Manifest:
    extra = list(assertions)
    if any(a.kind == "hash_binding" for a in extra):
        raise ProvenanceError("hash_binding is added automatically; do not pass one")
    if timestamp < 0:
        raise ProvenanceError("timestamp must be non-negative")
    all_assertions = (hash_binding(asset), *extra)
    claim = Claim(
        assertion_digests=tuple(a.digest() for a in all_assertions),
        claim_generator=generator,
        timestamp=timestamp,
        signer=signer.actor,
        signer_key=signer.public_key.hex(),
    )
    signature = sign(canonical_bytes(claim.to_document()), signer)
    return Manifest(claim.manifest_id(), all_assertions, claim, signature)


@dataclass
class ValidationReport:
    valid: bool
    failures: list[str] = field(default_factory=list)


def check_integrity(manifest: Manifest) -> list[str]:
    """Signature and assertion-digest checks that need no asset bytes."""
    failures = []
    claim = manifest.claim
    try:
        key = public_key_from_hex(claim.signer_key)
        signed_ok = (
            actor_id(key) == claim.signer
            and verify(canonical_bytes(claim.to_document()), manifest.signature, key)
            # the id is derived from the signed claim, so a renamed manifest is unsigned
            and manifest.manifest_id == claim.manifest_id()
        )
    except (ValueError, TypeError):
        signed_ok = False
    if not signed_ok:
        failures.append("bad_signature")
    digests = [a.digest() for a in manifest.assertions]
    if digests != list(claim.assertion_digests):
        failures.append("bad_assertion_digest")
    if len(manifest.by_kind("hash_binding")) != 1:
        failures.append("missing_hash_binding")
    return failures


def validate_manifest(
    asset: bytes, manifest: Manifest, trust_anchors: Iterable[bytes] = ()
) -> ValidationReport:
    failures = check_integrity(manifest)
    bindings = manifest.by_kind("hash_binding")
    if len(bindings) == 1 and bindings[0].payload["hash"] != hexdigest(asset):
        failures.append("hash_mismatch")
    anchors = {bytes(k).hex() for k in trust_anchors}
    if manifest.claim.signer_key not in anchors:
        failures.append("untrusted_signer")
    failures.sort(key=FAILURES.index)
    return ValidationReport(valid=not failures, failures=failures)


def extract_training_mining(manifest: Manifest) -> dict[str, str] | None:
    found = manifest.by_kind("training_mining")
    if len(found) > 1:
        raise AmbiguousConsentError(f"{manifest.manifest_id} carries {len(found)} training_mining assertions")
    if not found:
        return None
    return dict(found[0].payload["entries"])


@dataclass
class ProvenanceGraph:
    nodes: list[str]
    edges: list[tuple[str, str]]
    order: list[str]
    warnings: list[str] = field(default_factory=list)


def provenance_graph(manifests: Iterable[Manifest]) -> ProvenanceGraph:
    """Edge A -> B when A lists B as an ingredient.

    ``order`` is topological with ingredients first; ties go to the smaller
    manifest id. Dangling references become warnings, cycles raise.
    """
    by_id = {m.manifest_id: m for m in manifests}
    nodes = sorted(by_id)
    edges: list[tuple[str, str]] = []
    warnings: list[str] = []
    for mid in nodes:
        for ref in sorted(set(by_id[mid].ingredient_ids())):
            if ref in by_id:
                edges.append((mid, ref))
            else:
                warnings.append(f"{mid} references unknown ingredient {ref}")

    pending = {n: 0 for n in nodes}
    users: dict[str, list[str]] = {n: [] for n in nodes}
    for src, dst in edges:
        pending[src] += 1
        users[dst].append(src)
    ready = [n for n in nodes if pending[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for user in users[n]:
            pending[user] -= 1
            if pending[user] == 0:
                heapq.heappush(ready, user)
    if len(order) != len(nodes):
        raise ProvenanceCycleError(_find_cycle({n for n in nodes if pending[n] > 0}, edges))
    return ProvenanceGraph(nodes, edges, order, warnings)


def _find_cycle(stuck: set[str], edges: list[tuple[str, str]]) -> list[str]:
    succ: dict[str, list[str]] = {}
    for src, dst in edges:
        if src in stuck and dst in stuck:
            succ.setdefault(src, []).append(dst)
    node = min(stuck)
    seen: list[str] = []
    while node not in seen:
        seen.append(node)
        node = min(succ[node])
    return seen[seen.index(node):] + [node]


def sidecar_path(asset_path: str | Path) -> Path:
    return Path(asset_path).with_suffix(SIDECAR_SUFFIX)


def write_sidecar(asset_path: str | Path, manifest: Manifest) -> Path:
    path = sidecar_path(asset_path)
    atomic_write(path, manifest.to_bytes())
    return path


def read_sidecar(asset_path: str | Path) -> Manifest:
    return Manifest.from_bytes(sidecar_path(asset_path).read_bytes())
