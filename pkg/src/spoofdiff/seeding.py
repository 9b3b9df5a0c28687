"""Deterministic seed derivation.

All randomness flows from one root seed; each component derives its own
stream by hashing its name (and any extra labels) into a SeedSequence, so
adding a component never shifts another component's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(name: str) -> int:
    """Stable 64-bit key for a component name."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed_sequence(root_seed: int, *labels: object) -> np.random.SeedSequence:
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        if isinstance(label, str):
            entropy.append(stream_key(label))
        else:
            entropy.append(int(label) & 0xFFFFFFFFFFFFFFFF)
    return np.random.SeedSequence(entropy)


def derive_rng(root_seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(root_seed, *labels))


def derive_u64(root_seed: int, *labels: object) -> int:
    """A single derived 64-bit seed (for APIs that take a plain integer)."""
    return int(derive_seed_sequence(root_seed, *labels).generate_state(1, np.uint64)[0])
