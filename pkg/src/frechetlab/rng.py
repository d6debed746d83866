"""Counter-based RNG substreams.

Every random draw in the library comes from a generator built as::

    Generator(PCG64(SeedSequence(entropy=root_seed, spawn_key=key)))

where ``key`` is a tuple of non-negative integers, typically
``(study_id, trial, role_id)``.  String components are mapped to integers
with CRC-32 so the key is stable across processes and Python versions.
Substreams therefore do not depend on the order in which trials run.
"""

from __future__ import annotations

import zlib

import numpy as np


def key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("substream key components must be non-negative")
    return part


def substream(seed: int, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key_part(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class StreamFactory:
    """Hands out substreams below a fixed ``(seed, prefix...)`` root."""

    def __init__(self, seed: int, *prefix):
        self.seed = int(seed)
        self.prefix = tuple(prefix)

    def __call__(self, *key) -> np.random.Generator:
        return substream(self.seed, *self.prefix, *key)

    def child(self, *key) -> "StreamFactory":
        return StreamFactory(self.seed, *self.prefix, *key)
