"""Perceptual hash robustness and separation on synthetic images.

Robustness: Hamming distance between an image and a Gaussian-noised copy,
over a range of noise levels. Separation: mean pairwise distance between
unrelated images.
"""

from __future__ import annotations

import argparse
import itertools
from dataclasses import dataclass, field

import numpy as np

from contentarcs.content_id import hamming, phash
from contentarcs.synthetic import add_gaussian_noise, natural_image, noise_image


@dataclass
class FingerprintConfig:
    images: int = 100
    algorithm: str = "phash64"
    sigmas: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    seed: int = 6


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", type=int, default=FingerprintConfig.images)
    parser.add_argument("--algorithm", default=FingerprintConfig.algorithm, choices=["phash64", "phash256"])
    parser.add_argument("--sigmas", type=float, nargs="+", default=None)
    parser.add_argument("--seed", type=int, default=FingerprintConfig.seed)
    args = parser.parse_args()
    cfg = FingerprintConfig(args.images, args.algorithm, args.sigmas or FingerprintConfig().sigmas, args.seed)

    rng = np.random.default_rng(cfg.seed)
    originals = [natural_image(rng) for _ in range(cfg.images)]
    hashes = [phash(img, cfg.algorithm) for img in originals]
    print(f"{'sigma':>6} {'mean':>6} {'p95':>5} {'max':>4}")
    for sigma in cfg.sigmas:
        d = np.array([hamming(h, phash(add_gaussian_noise(img, sigma, rng), cfg.algorithm))
                      for img, h in zip(originals, hashes)])
        print(f"{sigma:6.1f} {d.mean():6.2f} {np.percentile(d, 95):5.1f} {d.max():4d}")

    for label, pool in [("natural", hashes), ("noise", [phash(noise_image(rng), cfg.algorithm) for _ in range(cfg.images)])]:
        pairs = [hamming(a, b) for a, b in itertools.combinations(pool, 2)]
        print(f"separation ({label}): mean {np.mean(pairs):.2f} of {pool[0].width} bits, min {min(pairs)}")


if __name__ == "__main__":
    main()
