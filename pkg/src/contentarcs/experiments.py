"""Seeded experiment harnesses used by scripts/ and the acceptance suite."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

import numpy as np

from .content_id import Fingerprint, collision_probability
from .identity import KeyPair, canonical_bytes, generate_keypair
from .provenance import create_manifest, soft_binding, training_mining, validate_manifest
from .registry import NodeState, issue_payload, registration_payload, revoke_payload, verify_chain
from .registry.ledger import LedgerRecord
from .rights import Policy, Rule, issue_license, revoke_license


@dataclass
class CollisionResult:
    trials: int
    n_assets: int
    bits: int
    frequency: float
    predicted: float


def collision_experiment(n_assets: int = 4096, bits: int = 24, trials: int = 2000, seed: int = 0) -> CollisionResult:
    """Draw n uniform ids per trial and count trials with any repeat."""
    rng = np.random.default_rng(seed)
    space = 2**bits
    hits = 0
    for _ in range(trials):
        draws = np.sort(rng.integers(0, space, size=n_assets))
        hits += bool((draws[1:] == draws[:-1]).any())
    return CollisionResult(trials, n_assets, bits, hits / trials, collision_probability(n_assets, bits))


def key_from(rnd: random.Random) -> KeyPair:
    return generate_keypair(rnd.randbytes(32))


def random_manifest_record_payload(rnd: random.Random, creator: KeyPair, timestamp: int, fingerprint: str | None = None):
    fp = fingerprint or Fingerprint.from_int("phash64", rnd.getrandbits(64)).hex()
    consent = rnd.choice(["allowed", "not_allowed", "constrained"])
    assertions = [soft_binding(fp)]
    if rnd.random() < 0.5:
        assertions.append(training_mining({c: consent for c in
                                           ("data_mining", "ai_training", "ai_generative_training", "ai_inference")}))
    manifest = create_manifest(rnd.randbytes(16), assertions, creator, "experiments/1", timestamp)
    return manifest


def tamper_manifest_campaign(trials: int = 1000, seed: int = 0) -> tuple[int, int]:
    """(detected, trials) for one random asset bit flip per manifest."""
    rnd = random.Random(seed)
    detected = 0
    for _ in range(trials):
        key = key_from(rnd)
        asset = rnd.randbytes(rnd.randint(1, 512))
        manifest = create_manifest(asset, [], key, "tamper", rnd.randint(0, 2**31))
        bit = rnd.randrange(len(asset) * 8)
        flipped = bytearray(asset)
        flipped[bit // 8] ^= 1 << (bit % 8)
        report = validate_manifest(bytes(flipped), manifest, {key.public_key})
        detected += (not report.valid) and "hash_mismatch" in report.failures
    return detected, trials


def _mutate_value(value, rnd: random.Random):
    if isinstance(value, bool):
        return not value
    if isinstance(value, int):
        return value + rnd.choice([-1, 1]) * rnd.randint(1, 1000)
    if isinstance(value, str):
        if not value:
            return "x"
        pos = rnd.randrange(len(value))
        alphabet = "0123456789abcdef" if all(c in "0123456789abcdef" for c in value) else "abcdefghijklmnopqrstuvwxyz:"
        choice = rnd.choice([c for c in alphabet if c != value[pos]])
        return value[:pos] + choice + value[pos + 1:]
    if isinstance(value, list):
        if not value:
            return [0]
        i = rnd.randrange(len(value))
        return value[:i] + [_mutate_value(value[i], rnd)] + value[i + 1:]
    if isinstance(value, dict):
        if not value:
            return {"x": 0}
        k = rnd.choice(sorted(value))
        return dict(value, **{k: _mutate_value(value[k], rnd)})
    return "x"


def build_chain(length: int, seed: int) -> tuple[NodeState, list[LedgerRecord]]:
    rnd = random.Random(seed)
    node = NodeState(key_from(rnd))
    creator = key_from(rnd)
    for t in range(length):
        manifest = random_manifest_record_payload(rnd, creator, t)
        node.append("manifest_registration", registration_payload(manifest), creator, t)
    return node, list(node.chain)


def tamper_chain_campaign(trials: int = 1000, seed: int = 0, length: int = 8) -> tuple[int, int]:
    """(correctly located, trials) over random single-field edits and swaps."""
    rnd = random.Random(seed)
    _, chain = build_chain(length, seed)
    node_id = chain[0].node
    fields = ["seq", "prev_hash", "timestamp", "payload_type", "payload", "signer", "signer_key", "signature", "node"]
    located = 0
    for _ in range(trials):
        k = rnd.randrange(length)
        tampered = list(chain)
        if rnd.random() < 0.1 and k < length - 1:
            tampered[k], tampered[k + 1] = tampered[k + 1], tampered[k]
        else:
            name = rnd.choice(fields)
            if name == "payload_type":
                new = rnd.choice(["license_issue", "license_revoke", "payment"])
            else:
                new = _mutate_value(getattr(chain[k], name), rnd)
            tampered[k] = replace(chain[k], **{name: new})
        report = verify_chain(tampered, node=node_id)
        located += (not report.valid) and report.first_bad_seq == k
    return located, trials


@dataclass
class ConvergenceTrace:
    views: list[bytes]
    revocation_monotone: bool
    syncs: int
    ops: int
    revoked: int
    statuses: dict[str, str] = field(default_factory=dict)


def plan_operations(n_ops: int, seed: int):
    """A fixed workload: (node index, kind, args) with legitimate actors only."""
    rnd = random.Random(seed)
    creators = [key_from(rnd) for _ in range(3)]
    holders = [key_from(rnd).actor for _ in range(3)]
    registered: list[tuple[str, KeyPair]] = []
    issued: list[tuple[str, KeyPair]] = []
    plan = []
    for t in range(n_ops):
        node = rnd.randrange(3)
        roll = rnd.random()
        if roll < 0.4 or not registered:
            creator = rnd.choice(creators)
            manifest = random_manifest_record_payload(rnd, creator, t)
            registered.append((manifest.manifest_id, creator))
            plan.append((node, "manifest_registration", registration_payload(manifest), creator, t))
        elif roll < 0.75 or not issued:
            target, owner = rnd.choice(registered)
            holder = rnd.choice(holders)
            policy = Policy(f"urn:policy:{t}", permissions=(Rule("ai_training", target, owner.actor, holder),))
            token = issue_license(policy, owner, holder, t)
            issued.append((token.token_id, owner))
            plan.append((node, "license_issue", issue_payload(token), owner, t))
        else:
            token_id, owner = rnd.choice(issued)
            plan.append((node, "license_revoke", revoke_payload(revoke_license(token_id, owner, t)), owner, t))
    return plan


def run_convergence(plan, schedule_seed: int, node_seed: int = 99, sync_prob: float = 0.5) -> ConvergenceTrace:
    rnd = random.Random(schedule_seed)
    node_rnd = random.Random(node_seed)
    nodes = [NodeState(key_from(node_rnd)) for _ in range(3)]
    seen_revoked: list[set[str]] = [set() for _ in nodes]
    monotone = True
    syncs = 0

    def observe() -> None:
        nonlocal monotone
        for i, n in enumerate(nodes):
            now = n.view().revoked
            if not seen_revoked[i] <= now:
                monotone = False
            seen_revoked[i] = set(now)

    for node_idx, kind, payload, signer, t in plan:
        nodes[node_idx].append(kind, payload, signer, t)
        observe()
        while rnd.random() < sync_prob:
            a, b = rnd.sample(range(3), 2)
            nodes[a].sync(nodes[b])
            syncs += 1
            observe()

    # gossip until nobody learns anything new
    while True:
        added = 0
        pairs = [(a, b) for a in range(3) for b in range(3) if a != b]
        rnd.shuffle(pairs)
        for a, b in pairs:
            added += nodes[a].sync(nodes[b]).added
            syncs += 1
            observe()
        if not added:
            break

    views = [canonical_bytes(n.view().to_document()) for n in nodes]
    final = nodes[0].view()
    return ConvergenceTrace(
        views=views,
        revocation_monotone=monotone,
        syncs=syncs,
        ops=len(plan),
        revoked=len(final.revoked),
        statuses={t: final.license_status(t) for t in sorted(final.tokens)},
    )


__all__ = [
    "CollisionResult",
    "ConvergenceTrace",
    "build_chain",
    "collision_experiment",
    "plan_operations",
    "run_convergence",
    "tamper_chain_campaign",
    "tamper_manifest_campaign",
]
