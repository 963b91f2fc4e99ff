"""Named, splittable random streams.

Every stochastic operation in the package draws from a generator created
here.  Streams are derived from a master seed plus a path of labels, so
independent components (init of one tensor, dropout at one step, the
shuffle of one epoch) get independent, reproducible streams regardless of
the order in which they are created.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_to_int(label: object) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    digest = hashlib.blake2s(str(label).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(master: int, *labels: object) -> np.random.SeedSequence:
    """Deterministic SeedSequence for the stream named by ``labels``."""
    entropy = [int(master) & 0xFFFFFFFFFFFFFFFF] + [_label_to_int(lb) for lb in labels]
    return np.random.SeedSequence(entropy)


def make_rng(master: int, *labels: object) -> np.random.Generator:
    """PCG64 generator for the named stream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *labels)))
