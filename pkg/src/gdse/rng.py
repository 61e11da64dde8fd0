"""Counter-based random streams keyed by (seed, replication, purpose)."""
import zlib

import numpy as np


def tag_key(tag):
    return zlib.crc32(str(tag).encode("utf-8"))


def stream(seed, rep=0, tag=""):
    """Independent Philox generator for a (seed, rep, tag) triple.

    The same triple always yields the same stream, and different triples
    yield statistically independent streams, so replications can run in any
    order or in parallel without changing results.
    """
    if seed < 0 or rep < 0:
        raise ValueError("seed and rep must be non-negative")
    ss = np.random.SeedSequence([int(seed), int(rep), tag_key(tag)])
    return np.random.Generator(np.random.Philox(ss))
