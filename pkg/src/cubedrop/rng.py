"""Seeded random streams.

Every random draw in the package goes through :func:`stream`, which builds a
``numpy.random.Generator`` on the counter-based Philox bit generator.  A stream
is identified by a root seed plus a tuple of non-negative integers (the spawn
key), so independent consumers never share state and results do not depend on
call order.

Stream ids used by the simulator::

    (seed, 0)  locations      (seed, 3)  nugget noise
    (seed, 1)  covariates     (seed, 4)  train/test permutation
    (seed, 2)  latent field
"""
from __future__ import annotations

import hashlib

import numpy as np

LOCATIONS, COVARIATES, FIELD, NOISE, SPLIT = range(5)


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(root: int, *parts) -> int:
    """Stable 63-bit seed from a root seed and arbitrary labels."""
    text = "/".join([str(int(root))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1
