"""Content identification: DCT perceptual hashes, Hamming lookup, LSB watermark.

Also carries the birthday-bound collision estimate used to reason about how
many assets a fingerprint width can address before accidental matches
become likely.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image, UnidentifiedImageError

ALGORITHMS = {"phash64": (32, 8), "phash256": (64, 16)}
WATERMARK_BITS = 64
WATERMARK_AGREEMENT = 0.6


class ContentIdError(ValueError):
    pass


class AlgorithmMismatch(ContentIdError):
    pass


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major 8-bit image, shape (height, width) or (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise ContentIdError("pixels must be uint8")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ContentIdError(f"unsupported pixel shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ContentIdError("image must be non-empty")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, data: bytes) -> "ImageBuffer":
        if channels not in (1, 3):
            raise ContentIdError("channels must be 1 or 3")
        if len(data) != width * height * channels:
            raise ContentIdError("pixel buffer length does not match dimensions")
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(arr.reshape(shape).copy())

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


def read_netpbm(source: str | Path | bytes) -> ImageBuffer:
    """Decode binary P5/P6 with maxval 255."""
    data = Path(source).read_bytes() if not isinstance(source, bytes) else source
    if data[:2] not in (b"P5", b"P6"):
        raise ContentIdError("not a binary netpbm (P5/P6) file")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            if img.mode not in ("L", "RGB"):
                raise ContentIdError(f"unsupported netpbm mode {img.mode}")
            return ImageBuffer(np.array(img, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ContentIdError(f"corrupt netpbm data: {exc}") from exc


def encode_netpbm(image: ImageBuffer) -> bytes:
    mode = "L" if image.channels == 1 else "RGB"
    out = io.BytesIO()
    Image.fromarray(image.pixels, mode=mode).save(out, format="PPM")
    return out.getvalue()


def write_netpbm(path: str | Path, image: ImageBuffer) -> None:
    Path(path).write_bytes(encode_netpbm(image))


def luma(image: ImageBuffer) -> np.ndarray:
    """Integer luma, Y = (299R + 587G + 114B) // 1000."""
    if image.channels == 1:
        return image.pixels.astype(np.int64)
    p = image.pixels.astype(np.int64)
    return (299 * p[:, :, 0] + 587 * p[:, :, 1] + 114 * p[:, :, 2]) // 1000


def _resize_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres, edge-clamped
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def bilinear_resize(values: np.ndarray, size: int) -> np.ndarray:
    h, w = values.shape
    y0, y1, fy = _resize_axis(h, size)
    x0, x1, fx = _resize_axis(w, size)
    v = values.astype(np.float64)
    top = v[y0][:, x0] * (1 - fx) + v[y0][:, x1] * fx
    bottom = v[y1][:, x0] * (1 - fx) + v[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bottom * fy[:, None]


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    m[0, :] = math.sqrt(1.0 / n)
    return m


def dct2(block: np.ndarray) -> np.ndarray:
    m = dct_matrix(block.shape[0])
    return m @ block @ m.T


@dataclass(frozen=True)
class Fingerprint:
    algorithm: str
    bits: bytes

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ContentIdError(f"unknown fingerprint algorithm {self.algorithm!r}")
        width = ALGORITHMS[self.algorithm][1] ** 2
        if len(self.bits) * 8 != width:
            raise ContentIdError(f"{self.algorithm} needs {width} bits, got {len(self.bits) * 8}")

    @property
    def width(self) -> int:
        return len(self.bits) * 8

    def as_int(self) -> int:
        return int.from_bytes(self.bits, "big")

    def bit(self, index: int) -> int:
        return (self.bits[index // 8] >> (7 - index % 8)) & 1

    def hex(self) -> str:
        return f"{self.algorithm}:{self.bits.hex()}"

    __str__ = hex

    @classmethod
    def from_hex(cls, text: str) -> "Fingerprint":
        algorithm, sep, body = text.partition(":")
        if not sep or body != body.lower():
            raise ContentIdError(f"malformed fingerprint {text!r}")
        try:
            return cls(algorithm, bytes.fromhex(body))
        except ValueError as exc:
            raise ContentIdError(f"malformed fingerprint {text!r}") from exc

    @classmethod
    def from_int(cls, algorithm: str, value: int) -> "Fingerprint":
        width = ALGORITHMS[algorithm][1] ** 2
        return cls(algorithm, value.to_bytes(width // 8, "big"))


def phash(image: ImageBuffer, algorithm: str = "phash64") -> Fingerprint:
    """DCT perceptual hash.

    Luma, bilinear resize to 32x32 (64x64 for phash256), 2-D DCT-II, keep the
    top-left 8x8 (16x16) block including DC, then set a bit for every
    coefficient strictly above the lower median. Coefficients are rounded to
    six decimals before comparing so float noise cannot flip a bit.
    """
    if algorithm not in ALGORITHMS:
        raise ContentIdError(f"unknown fingerprint algorithm {algorithm!r}")
    if image.width < 8 or image.height < 8:
        raise ContentIdError("image must be at least 8x8")
    size, block = ALGORITHMS[algorithm]
    coeffs = dct2(bilinear_resize(luma(image), size))[:block, :block]
    flat = np.round(coeffs.reshape(-1), 6) + 0.0  # +0.0 folds -0.0
    median = np.sort(flat)[(flat.size - 1) // 2]
    bits = np.packbits(flat > median)
    return Fingerprint(algorithm, bits.tobytes())


def hamming(a: Fingerprint, b: Fingerprint) -> int:
    if a.algorithm != b.algorithm:
        raise AlgorithmMismatch(f"cannot compare {a.algorithm} with {b.algorithm}")
    return (a.as_int() ^ b.as_int()).bit_count()


@dataclass
class FingerprintIndex:
    """Exact linear-scan index; single writer, many readers."""

    algorithm: str | None = None
    entries: list[tuple[Fingerprint, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, fingerprint: Fingerprint, key: str) -> "FingerprintIndex":
        if self.algorithm is None:
            self.algorithm = fingerprint.algorithm
        elif fingerprint.algorithm != self.algorithm:
            raise AlgorithmMismatch(
                f"index holds {self.algorithm}, cannot insert {fingerprint.algorithm}"
            )
        self.entries.append((fingerprint, key))
        return self

    def query(self, probe: Fingerprint, max_distance: int) -> list[tuple[str, int]]:
        if not self.entries:
            return []
        if probe.algorithm != self.algorithm:
            raise AlgorithmMismatch(f"index holds {self.algorithm}, probe is {probe.algorithm}")
        target = probe.as_int()
        hits = []
        for fp, key in self.entries:
            d = (fp.as_int() ^ target).bit_count()
            if d <= max_distance:
                hits.append((key, d))
        hits.sort(key=lambda kd: (kd[1], kd[0]))
        return hits

    def nearest(self, probe: Fingerprint, k: int) -> list[tuple[str, int]]:
        return self.query(probe, probe.width)[:k]


def index_insert(index: FingerprintIndex, fingerprint: Fingerprint, key: str) -> FingerprintIndex:
    return index.insert(fingerprint, key)


def index_query(index: FingerprintIndex, probe: Fingerprint, max_distance: int) -> list[tuple[str, int]]:
    return index.query(probe, max_distance)


def build_index(items: Iterable[tuple[Fingerprint, str]]) -> FingerprintIndex:
    index = FingerprintIndex()
    for fp, key in items:
        index.insert(fp, key)
    return index


def collision_probability(n_assets: int, bits: int) -> float:
    """Birthday bound 1 - exp(-n^2 / 2^(bits+1)) for n random bits-wide ids."""
    if n_assets < 0 or bits < 1:
        raise ValueError("need n_assets >= 0 and bits >= 1")
    exponent = (n_assets * n_assets) / float(2 ** (bits + 1))
    return min(1.0, max(0.0, -math.expm1(-exponent)))


# -- watermark ---------------------------------------------------------------


def _positions(key: bytes, count: int) -> np.ndarray:
    if len(key) != 32:
        raise ContentIdError("watermark key must be 32 bytes")
    rng = np.random.default_rng(np.frombuffer(key, dtype=np.uint32))
    return rng.permutation(count)


def _writable(image: ImageBuffer) -> np.ndarray:
    if image.channels == 1:
        return np.ones(image.width * image.height, dtype=bool)
    p = image.pixels.reshape(-1, 3)
    # a pixel holding both 0 and 255 cannot shift all channels by one
    return ~((p == 0).any(axis=1) & (p == 255).any(axis=1))


def _carrier_pixels(image: ImageBuffer, key: bytes, repetition: int) -> np.ndarray:
    if repetition < 1:
        raise ContentIdError("repetition must be >= 1")
    needed = WATERMARK_BITS * repetition
    if image.width * image.height < needed:
        raise ContentIdError(f"image too small: need {needed} pixels")
    order = _positions(key, image.width * image.height)
    order = order[_writable(image)[order]]
    if order.size < needed:
        raise ContentIdError(f"image has only {order.size} writable pixels, need {needed}")
    return order[:needed]


def _payload_bits(payload: int) -> np.ndarray:
    if not 0 <= payload < 2**WATERMARK_BITS:
        raise ContentIdError("payload must be an unsigned 64-bit integer")
    return np.array([(payload >> (63 - i)) & 1 for i in range(WATERMARK_BITS)], dtype=np.int64)


def embed_watermark(image: ImageBuffer, payload: int, key: bytes, repetition: int = 3) -> ImageBuffer:
    """Write payload bits into luma LSBs at key-seeded positions.

    Bit i goes to carriers i, i+64, i+128, ... so each bit gets `repetition`
    votes. Grey pixels flip their LSB; RGB pixels shift all three channels
    by one, which moves integer luma by exactly one.
    """
    carriers = _carrier_pixels(image, key, repetition)
    want = np.tile(_payload_bits(payload), repetition)
    y = luma(image).reshape(-1)[carriers]
    wrong = carriers[(y & 1) != want]
    out = image.pixels.copy()
    if image.channels == 1:
        flat = out.reshape(-1)
        flat[wrong] ^= 1
    else:
        flat = out.reshape(-1, 3).astype(np.int16)
        sel = flat[wrong]
        step = np.where((sel < 255).all(axis=1), 1, -1)
        flat[wrong] = sel + step[:, None]
        out = flat.astype(np.uint8).reshape(image.pixels.shape)
    return ImageBuffer(out)


def extract_watermark(image: ImageBuffer, key: bytes, repetition: int = 3) -> int | None:
    """Majority-vote payload, or None when any bit's agreement is below 60%."""
    carriers = _carrier_pixels(image, key, repetition)
    lsb = (luma(image).reshape(-1)[carriers] & 1).reshape(repetition, WATERMARK_BITS)
    ones = lsb.sum(axis=0)
    agreement = np.maximum(ones, repetition - ones) / repetition
    if (agreement < WATERMARK_AGREEMENT).any():
        return None
    value = 0
    for bit in (2 * ones > repetition):
        value = (value << 1) | int(bit)
    return value
