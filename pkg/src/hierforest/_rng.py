"""Named, counter-style random streams derived from one integer seed."""

import zlib

import numpy as np


def _token(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


def derive_seed(seed, *keys):
    """Return a 64-bit seed for the sub-stream ``(seed, *keys)``.

    Integer keys are replicate or tree indices, string keys name a stream
    ("bottom", "top", ...). The mapping depends only on its arguments.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(_token(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def generator(seed, *keys):
    """A Philox generator for the sub-stream ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *keys)))
