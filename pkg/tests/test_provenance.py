import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from contentarcs.identity import hexdigest
from contentarcs.provenance import (
    AmbiguousConsentError,
    Assertion,
    Manifest,
    ProvenanceCycleError,
    ProvenanceError,
    create_manifest,
    creation_info,
    extract_training_mining,
    hash_binding,
    ingredient,
    provenance_graph,
    read_sidecar,
    sidecar_path,
    soft_binding,
    training_mining,
    validate_manifest,
    write_sidecar,
)

from conftest import seeded_key

ALL_NOT = {c: "not_allowed" for c in ("data_mining", "ai_training", "ai_generative_training", "ai_inference")}
ALL_OK = {c: "allowed" for c in ALL_NOT}


def make(asset=b"asset", extra=(), key=None, ts=1_700_000_000):
    return create_manifest(asset, list(extra), key or seeded_key(1), "test-gen/1.0", ts)


def test_empty_asset_hash_binding():
    m = make(b"")
    (binding,) = m.by_kind("hash_binding")
    assert binding.payload["hash"] == hexdigest(b"")
    assert binding.payload["hash"] == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_create_then_validate(alice):
    m = make(b"pixels", [soft_binding("phash64:8000000000000000"), creation_info(tool="x")], alice)
    report = validate_manifest(b"pixels", m, {alice.public_key})
    assert report.valid and report.failures == []


def test_manifest_id_is_claim_derived(alice):
    m = make(key=alice)
    assert m.manifest_id.startswith("urn:arc:") and len(m.manifest_id) == 8 + 32
    assert m.manifest_id == m.claim.manifest_id()


def test_training_mining_roundtrip():
    m = make(extra=[training_mining(ALL_NOT)])
    assert extract_training_mining(m) == ALL_NOT


def test_training_mining_absent():
    assert extract_training_mining(make()) is None


def test_training_mining_all_allowed():
    assert extract_training_mining(make(extra=[training_mining(ALL_OK)])) == ALL_OK


def test_training_mining_conflict_is_error():
    m = make(extra=[training_mining(ALL_OK), training_mining(ALL_NOT)])
    with pytest.raises(AmbiguousConsentError):
        extract_training_mining(m)


def test_training_mining_requires_all_categories():
    with pytest.raises(ProvenanceError):
        training_mining({"ai_training": "allowed"})


def test_caller_hash_binding_rejected():
    with pytest.raises(ProvenanceError):
        make(extra=[hash_binding(b"asset")])


def test_negative_timestamp_rejected():
    with pytest.raises(ProvenanceError):
        make(ts=-1)


def test_flipped_asset_byte_is_hash_mismatch(alice):
    m = make(b"abcdef", key=alice)
    report = validate_manifest(b"abcdeg", m, {alice.public_key})
    assert not report.valid and "hash_mismatch" in report.failures


def test_untrusted_signer_is_separate(alice, bob):
    m = make(key=alice)
    report = validate_manifest(b"asset", m, {bob.public_key})
    assert report.failures == ["untrusted_signer"]


def test_bad_signature_detected(alice):
    m = make(key=alice)
    sig = bytearray(m.signature.bytes)
    sig[0] ^= 1
    forged = replace(m, signature=replace(m.signature, bytes=bytes(sig)))
    assert validate_manifest(b"asset", forged, {alice.public_key}).failures == ["bad_signature"]


def test_missing_hash_binding_detected(alice):
    m = make(key=alice, extra=[creation_info(a=1)])
    stripped = replace(m, assertions=m.assertions[1:])
    failures = validate_manifest(b"asset", stripped, {alice.public_key}).failures
    assert "missing_hash_binding" in failures and "bad_assertion_digest" in failures


def test_renamed_manifest_detected(alice):
    m = make(key=alice)
    renamed = replace(m, manifest_id="urn:arc:" + "0" * 32)
    assert "bad_signature" in validate_manifest(b"asset", renamed, {alice.public_key}).failures


@given(st.data())
def test_reordering_assertions_breaks_validation(data):
    key = seeded_key(4)
    extra = [creation_info(i=i) for i in range(data.draw(st.integers(2, 5)))]
    m = make(b"x", extra, key)
    i, j = data.draw(st.lists(st.integers(0, len(m.assertions) - 1), min_size=2, max_size=2, unique=True))
    items = list(m.assertions)
    items[i], items[j] = items[j], items[i]
    report = validate_manifest(b"x", replace(m, assertions=tuple(items)), {key.public_key})
    assert {"bad_assertion_digest", "bad_signature"} & set(report.failures)


def test_any_assertion_mutation_detected(alice):
    rnd = random.Random(3)
    m = make(b"y", [creation_info(note="hello world"), soft_binding("phash64:0123456789abcdef")], alice)
    for _ in range(200):
        idx = rnd.randrange(len(m.assertions))
        doc = m.assertions[idx].to_document()
        # mutate one character of the serialized payload value
        payload = dict(doc["payload"])
        field = rnd.choice(sorted(payload))
        value = payload[field]
        pos = rnd.randrange(len(value))
        payload[field] = value[:pos] + chr((ord(value[pos]) + 1) % 0x7F or 0x30) + value[pos + 1:]
        tampered = list(m.assertions)
        tampered[idx] = Assertion.__new__(Assertion)
        object.__setattr__(tampered[idx], "kind", doc["kind"])
        object.__setattr__(tampered[idx], "payload", payload)
        report = validate_manifest(b"y", replace(m, assertions=tuple(tampered)), {alice.public_key})
        assert {"bad_assertion_digest", "bad_signature"} & set(report.failures)


def test_random_asset_bit_flips_always_hash_mismatch():
    rnd = random.Random(17)
    key = seeded_key(9)
    for _ in range(1000):
        asset = rnd.randbytes(rnd.randint(1, 256))
        m = create_manifest(asset, [], key, "gen", rnd.randint(0, 2**31))
        bit = rnd.randrange(len(asset) * 8)
        flipped = bytearray(asset)
        flipped[bit // 8] ^= 1 << (bit % 8)
        assert "hash_mismatch" in validate_manifest(bytes(flipped), m, {key.public_key}).failures


def test_document_roundtrip(alice):
    m = make(extra=[training_mining(ALL_OK), ingredient("urn:arc:" + "1" * 32)], key=alice)
    again = Manifest.from_bytes(m.to_bytes())
    assert again == m
    assert validate_manifest(b"asset", again, {alice.public_key}).valid


def test_sidecar_files(tmp_path, alice):
    asset = tmp_path / "photo.pgm"
    asset.write_bytes(b"P5\n1 1\n255\n\x00")
    m = make(asset.read_bytes(), key=alice)
    path = write_sidecar(asset, m)
    assert path == sidecar_path(asset) == tmp_path / "photo.arcm"
    assert read_sidecar(asset) == m
    assert not list(tmp_path.glob("*.tmp"))


# -- provenance graph --


def test_graph_single_node():
    m = make()
    g = provenance_graph([m])
    assert g.nodes == [m.manifest_id] and g.edges == [] and g.order == [m.manifest_id]


def test_graph_chain_order():
    c = make(b"c")
    b = make(b"b", [ingredient(c.manifest_id)])
    a = make(b"a", [ingredient(b.manifest_id)])
    g = provenance_graph([a, c, b])
    assert g.order == [c.manifest_id, b.manifest_id, a.manifest_id]
    assert sorted(g.edges) == sorted([(a.manifest_id, b.manifest_id), (b.manifest_id, c.manifest_id)])


def test_graph_ties_broken_by_id():
    parts = [make(bytes([i])) for i in range(5)]
    top = make(b"top", [ingredient(p.manifest_id) for p in parts])
    g = provenance_graph([top, *parts])
    assert g.order[:-1] == sorted(p.manifest_id for p in parts)
    assert g.order[-1] == top.manifest_id


def test_graph_cycle_is_error():
    # ids are content-derived, so a real mutual reference needs forged ids
    a, b = make(b"a"), make(b"b")
    a2 = replace(a, assertions=a.assertions + (ingredient(b.manifest_id),))
    b2 = replace(b, assertions=b.assertions + (ingredient(a.manifest_id),))
    with pytest.raises(ProvenanceCycleError) as err:
        provenance_graph([a2, b2])
    assert set(err.value.cycle) == {a.manifest_id, b.manifest_id}


def test_graph_dangling_reference_warns():
    a = make(b"a", [ingredient("urn:arc:" + "f" * 32)])
    g = provenance_graph([a])
    assert g.edges == [] and len(g.warnings) == 1
