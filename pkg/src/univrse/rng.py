"""Deterministic seed derivation.

Every random draw in a run descends from one run-level seed. Per-record,
per-sample seeds are derived by hashing the record key together with a
lane code and a sample index, so partial reruns and fixture builders can
reproduce any individual draw without replaying the whole run.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Lanes keep the seed streams of the different sampling sites disjoint.
LANE_DEPLOY = 0        # the single low-temperature deployment response
LANE_ORIGINAL = 1      # M samples of the original-image branch
LANE_DISTORTED = 2     # M samples of the distorted-image branch
LANE_DISTORTION = 3    # the one-shot noise draw producing the distorted image
LANE_AUX = 4           # one response per auxiliary cross-checking model


def key_digest(key: str) -> int:
    """Stable 64-bit digest of a record key (platform independent)."""
    h = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


def derive_seed(run_seed: int, key: str, lane: int, index: int = 0) -> int:
    """Derive the seed for one draw site as an unsigned 64-bit integer."""
    ss = np.random.SeedSequence(entropy=[run_seed, key_digest(key), lane, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def branch_seeds(run_seed: int, key: str, lane: int, count: int) -> list[int]:
    """Seeds for the ``count`` samples of one branch, in sample order."""
    return [derive_seed(run_seed, key, lane, i) for i in range(count)]
