"""Tamper campaigns against manifests and ledger chains.

Flips one random asset bit under a signed manifest, and edits or swaps
one record of a signed chain, then counts how often validation notices
(and, for chains, names the right record).
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from contentarcs.experiments import tamper_chain_campaign, tamper_manifest_campaign


@dataclass
class TamperConfig:
    trials: int = 1000
    chain_length: int = 8
    seed: int = 2


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=TamperConfig.trials)
    parser.add_argument("--chain-length", type=int, default=TamperConfig.chain_length)
    parser.add_argument("--seed", type=int, default=TamperConfig.seed)
    cfg = TamperConfig(**vars(parser.parse_args()))

    start = time.perf_counter()
    detected, n = tamper_manifest_campaign(cfg.trials, cfg.seed)
    print(f"asset bit flips detected: {detected}/{n}")
    located, n = tamper_chain_campaign(cfg.trials, cfg.seed, cfg.chain_length)
    print(f"ledger tampering located: {located}/{n}")
    print(f"elapsed {time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
