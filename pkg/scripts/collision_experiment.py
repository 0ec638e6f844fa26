"""Monte Carlo check of the birthday bound for fingerprint collisions.

Draws ``n_assets`` uniform ids of ``bits`` bits per trial and compares the
fraction of trials with a repeat to 1 - exp(-n^2 / 2^(bits+1)).
"""

from __future__ import annotations

import argparse
import time
from dataclasses import asdict, dataclass

from contentarcs.content_id import collision_probability
from contentarcs.experiments import collision_experiment


@dataclass
class CollisionConfig:
    n_assets: int = 4096
    bits: int = 24
    trials: int = 2000
    seed: int = 0


def main() -> None:
    defaults = CollisionConfig()
    parser = argparse.ArgumentParser(description=__doc__)
    for name, value in asdict(defaults).items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=int, default=value)
    cfg = CollisionConfig(**vars(parser.parse_args()))

    start = time.perf_counter()
    result = collision_experiment(cfg.n_assets, cfg.bits, cfg.trials, cfg.seed)
    print(f"config     {asdict(cfg)}")
    print(f"empirical  {result.frequency:.4f}")
    print(f"predicted  {result.predicted:.4f}")
    print(f"64-bit ids, 5.06e9 assets: {collision_probability(5_060_000_000, 64):.4f}")
    print(f"elapsed    {time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
