"""Named, independent random streams.

A stream is addressed by ``(seed, name, *keys)``; the name is hashed to a
fixed integer, so adding draws to one stream never shifts another.
"""

import zlib

import numpy as np

STREAMS = ("germs", "lengths", "directions", "grf", "resampling", "sampling")


def _name_key(name):
    return zlib.crc32(name.encode("ascii"))


def _check_seed(seed):
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    return seed


def stream(seed, name, *keys):
    """Return a ``numpy.random.Generator`` for the named stream."""
    entropy = [_check_seed(seed), _name_key(name)] + [_check_seed(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed, *keys):
    """Child seed for replicate ``keys`` of a master seed (a 63-bit int)."""
    entropy = [_check_seed(seed)] + [_check_seed(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def keyed_streams(seed, name):
    """Factory ``key -> Generator`` of counter-based Philox streams.

    All streams share one 128-bit key derived from ``(seed, name)``; stream
    ``k`` starts at counter ``(0, 0, 0, k)``, so streams never overlap and
    are cheap to create (one per fiber).
    """
    state = np.random.SeedSequence([_check_seed(seed), _name_key(name)]).generate_state(2, dtype=np.uint64)
    key = (int(state[0]) << 64) | int(state[1])

    def make(k):
        return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, _check_seed(k)]))

    return make
