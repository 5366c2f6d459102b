"""Named, order-independent random substreams.

One master seed spawns an independent generator for any (module, year,
area, ...) name tuple, so steps can be reordered or parallelized without
changing results. Names are hashed with BLAKE2 (stable across platforms
and Python processes, unlike the builtin `hash`).
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(master_seed: int, *names) -> np.random.Generator:
    """Generator for the substream identified by `names` under the seed."""
    label = "/".join(str(n) for n in names)
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.default_rng(seq)
