"""Keys, actor identifiers, canonical serialization and signatures.

Everything that gets hashed or signed anywhere in the package goes through
:func:`canonical_bytes` first. The byte format is documented in
``docs/formats.md``.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

ACTOR_PREFIX = "arc:"
_ACTOR_RE = re.compile(r"^arc:[0-9a-f]{40}$")


class IdentityError(ValueError):
    pass


class CanonicalizationError(TypeError):
    pass


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hexdigest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes = b""

    def __repr__(self) -> str:
        return f"KeyPair(actor={actor_id(self.public_key)})"

    @property
    def actor(self) -> str:
        return actor_id(self.public_key)


@dataclass(frozen=True)
class Signature:
    bytes: bytes
    signer: str

    def hex(self) -> str:
        return self.bytes.hex()


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Ed25519 key pair; the 32-byte seed is the secret key."""
    if seed is None:
        seed = os.urandom(32)
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != 32:
        raise IdentityError("seed must be exactly 32 bytes")
    private = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(public_key=public, secret_key=bytes(seed))


def actor_id(public_key: bytes) -> str:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != 32:
        raise IdentityError("public key must be exactly 32 bytes")
    return ACTOR_PREFIX + hexdigest(bytes(public_key))[:40]


def parse_actor_id(text: str) -> str:
    if not isinstance(text, str) or not _ACTOR_RE.match(text):
        raise IdentityError(f"not an actor id: {text!r}")
    return text


def is_actor_id(text: Any) -> bool:
    return isinstance(text, str) and bool(_ACTOR_RE.match(text))


def _check(value: Any, path: str = "$") -> None:
    if value is None or isinstance(value, (bool, str)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        raise CanonicalizationError(f"floating-point value at {path}")
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise CanonicalizationError(f"non-string key {key!r} at {path}")
            _check(item, f"{path}.{key}")
        return
    raise CanonicalizationError(f"unsupported type {type(value).__name__} at {path}")


def canonical_bytes(value: Any) -> bytes:
    """Serialize a document of maps/lists/strings/ints/bools/null canonically.

    Keys are sorted by code point, there is no whitespace, output is UTF-8
    (non-ASCII is emitted raw, not escaped). Floats raise
    :class:`CanonicalizationError`.
    """
    _check(value)
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def parse_canonical(data: bytes | str) -> Any:
    """Parse a canonical document; floats are rejected on the way in too."""
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8")

    def no_float(text: str) -> Any:
        raise CanonicalizationError(f"floating-point literal {text}")

    return json.loads(data, parse_float=no_float, parse_constant=no_float)


def sign(message: bytes, key: KeyPair) -> Signature:
    if not key.secret_key:
        raise IdentityError("key pair has no secret key")
    private = Ed25519PrivateKey.from_private_bytes(key.secret_key)
    return Signature(bytes=private.sign(bytes(message)), signer=key.actor)


def verify(message: bytes, signature: Signature | bytes, public_key: bytes) -> bool:
    raw = signature.bytes if isinstance(signature, Signature) else signature
    if len(raw) != 64 or len(public_key) != 32:
        return False
    if isinstance(signature, Signature) and signature.signer != actor_id(public_key):
        return False
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(bytes(raw), bytes(message))
    except (InvalidSignature, ValueError):
        return False
    return True


def sign_document(document: Any, key: KeyPair) -> Signature:
    return sign(canonical_bytes(document), key)


def verify_document(document: Any, signature: Signature | bytes, public_key: bytes) -> bool:
    try:
        message = canonical_bytes(document)
    except CanonicalizationError:
        return False
    return verify(message, signature, public_key)


def keypair_from_hex(secret_hex: str) -> KeyPair:
    return generate_keypair(bytes.fromhex(secret_hex))


def public_key_from_hex(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except (TypeError, ValueError) as exc:
        raise IdentityError(f"bad public key hex: {text!r}") from exc
    if len(raw) != 32:
        raise IdentityError("public key must be exactly 32 bytes")
    return raw
