"""Regenerate fixtures/: netpbm images, policy documents and demo keys.

Everything is derived from fixed seeds, so rerunning produces identical
bytes. Usage: python3 scripts/make_fixtures.py [--out fixtures]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from contentarcs.content_id import hamming, phash, write_netpbm
from contentarcs.identity import generate_keypair
from contentarcs.rights import ODRL_CONTEXT
from contentarcs.storage import write_document
from contentarcs.synthetic import natural_image

CREATOR_SEED = bytes([1]) * 32
DEVELOPER_SEED = bytes([2]) * 32
SECOND_CREATOR_SEED = bytes([3]) * 32


def image_at_distance(base, distance: int, rng: np.random.Generator, channels: int = 1):
    """Draw natural images until one hashes exactly ``distance`` bits from base."""
    target = phash(base)
    for _ in range(10_000):
        candidate = natural_image(rng, channels=channels)
        if hamming(phash(candidate), target) == distance:
            return candidate
    raise RuntimeError(f"no image at distance {distance} found")


def policy(uid: str, target: str, assigner: str, assignee: str, duty: int | None) -> dict:
    rule = {"action": "ai_training", "target": target, "assigner": assigner, "assignee": assignee}
    if duty is not None:
        rule["duty"] = [{"action": "compensate", "amount": duty, "beneficiary": assigner}]
    return {"@context": ODRL_CONTEXT, "@type": "Agreement", "uid": uid, "permission": [rule]}


def build(out: Path) -> None:
    rng = np.random.default_rng(2024)
    images = out / "images"
    images.mkdir(parents=True, exist_ok=True)

    creator = generate_keypair(CREATOR_SEED)
    developer = generate_keypair(DEVELOPER_SEED)
    second = generate_keypair(SECOND_CREATOR_SEED)

    artwork = natural_image(rng)
    photo = natural_image(rng, channels=3)
    sketch = natural_image(rng)
    write_netpbm(images / "artwork.pgm", artwork)
    write_netpbm(images / "photo.ppm", photo)
    write_netpbm(images / "sketch.pgm", sketch)
    (images / "corrupt.pgm").write_bytes(b"P5\n64 64\n255\n" + bytes(100))

    # two-owner attribution: base owned by one creator, far one exactly 32 bits away
    two = out / "two_owner"
    two.mkdir(exist_ok=True)
    base = natural_image(rng)
    write_netpbm(two / "base.pgm", base)
    write_netpbm(two / "far.pgm", image_at_distance(base, 32, rng))
    write_netpbm(two / "synthetic.pgm", base)

    policies = out / "policies"
    policies.mkdir(exist_ok=True)
    key = phash(artwork).hex()
    write_document(policies / "train_with_duty.json",
                   policy("urn:policy:train-duty", key, creator.actor, developer.actor, 100))
    write_document(policies / "train_free.json",
                   policy("urn:policy:train-free", key, creator.actor, developer.actor, None))
    write_document(policies / "malformed.json", {"@context": ODRL_CONTEXT, "uid": "urn:policy:bad"})

    keys = out / "keys"
    keys.mkdir(exist_ok=True)
    for name, kp in [("creator", creator), ("developer", developer), ("second_creator", second)]:
        write_document(keys / f"{name}.key", {"secret_key": kp.secret_key.hex()}, mode=0o600)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    build(parser.parse_args().out)


if __name__ == "__main__":
    main()
