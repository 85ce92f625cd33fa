"""Namespaced random streams derived from a single run seed.

Every stochastic component (data generation, weight init, minibatching,
mixture base noise) pulls its generator from here so that one integer seed
fixes the whole run.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *tags) -> int:
    """Map (seed, tags...) to a stable 64-bit stream seed.

    Tags may be strings or integers; the derivation is order-sensitive and
    platform-independent (SHA-256 over the canonical byte encoding).
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Deterministic PCG64 generator for the given namespace."""
    return np.random.default_rng(derive_seed(seed, *tags))
