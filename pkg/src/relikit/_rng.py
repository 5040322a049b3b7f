"""Seed derivation for reproducible sub-streams.

Every random draw in the package flows from an explicit base seed through
``derive_seed``, which hashes the base seed together with a tuple of string
tags naming the consumer (for example ``("split", 3)`` or
``("undersample", repeat, fold)``). The scheme is a plain CRC-32 over the
colon-joined textual form, so identical (base, tags) always yields the same
32-bit seed on every platform and Python version. No code in the package
touches global RNG state.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(base: int, *tags: object) -> int:
    """Derive a deterministic 32-bit sub-seed from a base seed and tags."""
    text = ":".join([str(int(base))] + [str(t) for t in tags])
    return zlib.crc32(text.encode("utf-8"))


def rng_for(base: int, *tags: object) -> np.random.Generator:
    """A fresh Generator seeded by ``derive_seed(base, *tags)``."""
    return np.random.default_rng(derive_seed(base, *tags))
