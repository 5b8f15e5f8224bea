"""Named, counter-based random substreams derived from a master seed.

Every stochastic routine draws from ``substream(seed, name)``. Names are
hierarchical strings such as ``"sequence-block/3"`` or ``"wgs/init"``; the
name is hashed into the spawn key of a :class:`numpy.random.SeedSequence`
and fed to a Philox generator, so streams are independent, reproducible and
never touch ambient entropy.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream ``name`` under master ``seed``."""
    if seed is None:
        raise ValueError("a master seed is required for stochastic work")
    ss = np.random.SeedSequence(int(seed), spawn_key=_name_key(name))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng: np.random.Generator | int | None, seed: int | None, name: str) -> np.random.Generator:
    """Use an explicit generator if given, else the named substream of ``seed``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is not None:
        return substream(int(rng), name)
    return substream(seed, name)
