"""Seeded synthetic images for experiments and tests."""

from __future__ import annotations

import numpy as np

from .content_id import ImageBuffer


def natural_image(rng: np.random.Generator, size: int = 64, channels: int = 1, alpha: float = 1.0) -> ImageBuffer:
    """Random-phase image with a 1/f^alpha amplitude spectrum.

    Natural photographs have roughly this spectrum, so energy is spread over
    all the low DCT bands the hash looks at.
    """
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.hypot(fx, fy)
    radius[0, 0] = 1.0
    planes = []
    for _ in range(channels):
        spectrum = (rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))) / radius**alpha
        spectrum[0, 0] = 0
        field = np.real(np.fft.ifft2(spectrum))
        field = (field - field.min()) / max(np.ptp(field), 1e-12)
        planes.append(np.round(20 + 215 * field).astype(np.uint8))
    pixels = planes[0] if channels == 1 else np.stack(planes, axis=2)
    return ImageBuffer(pixels)


def noise_image(rng: np.random.Generator, size: int = 64, channels: int = 1) -> ImageBuffer:
    shape = (size, size) if channels == 1 else (size, size, 3)
    return ImageBuffer(rng.integers(0, 256, size=shape, dtype=np.uint8))


def add_gaussian_noise(image: ImageBuffer, sigma: float, rng: np.random.Generator) -> ImageBuffer:
    noisy = image.pixels.astype(np.float64) + rng.normal(0.0, sigma, size=image.pixels.shape)
    return ImageBuffer(np.clip(np.round(noisy), 0, 255).astype(np.uint8))


def flat_image(value: int, width: int = 32, height: int = 32, channels: int = 1) -> ImageBuffer:
    shape = (height, width) if channels == 1 else (height, width, 3)
    return ImageBuffer(np.full(shape, value, dtype=np.uint8))
