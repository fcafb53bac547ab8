"""Deterministic seed derivation.

Every random stream in the package is seeded through ``derive_seed`` so that
a single root seed reproduces a whole run, and so that independent
components own independent streams: the seed for component ("voter-init", 3)
does not change when more voters are added or when unrelated components
consume randomness.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, name: str, index: int = 0) -> int:
    """Mix (root seed, component name, index) into a 64-bit seed.

    Uses SHA-256 over the ASCII rendering "root\\x1fname\\x1findex" and takes
    the first 8 digest bytes little-endian. Pure function; stable across
    platforms and releases.
    """
    payload = f"{root}\x1f{name}\x1f{index}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(root: int, name: str, index: int = 0) -> np.random.Generator:
    """A PCG64 generator seeded with ``derive_seed(root, name, index)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, name, index)))
