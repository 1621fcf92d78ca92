"""Deterministic random streams.

All randomness in the toolkit comes from xoshiro256** seeded through
SplitMix64, so a run is reproducible from its integer seeds alone.
Uniform doubles use the top 53 bits: ``(x >> 11) * 2**-53``.

Per-image and per-phase seeds are fanned out from one master seed with
:func:`derive_seed`, which hashes ``"<master>/<part>/<part>..."`` with
BLAKE2b (8-byte digest, little endian).
"""

import hashlib

import numba
import numpy as np

PRNG_NAME = "xoshiro256**/splitmix64"

_MASK64 = (1 << 64) - 1


def derive_seed(master, *parts):
    """Hash a master seed and a path of labels into a 64-bit seed."""
    text = "/".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_state(seed):
    """Expand a 64-bit seed into a xoshiro256** state with SplitMix64."""
    x = int(seed) & _MASK64
    state = np.empty(4, dtype=np.uint64)
    for k in range(4):
        x = (x + 0x9E3779B97F4A7C15) & _MASK64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        state[k] = z ^ (z >> 31)
    return state


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(cache=True)
def next_double(s):
    return np.float64(next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _fill_doubles(s, out):
    for k in range(out.shape[0]):
        out[k] = next_double(s)


class Xoshiro256:
    """Small Python-facing wrapper around the jitted generator."""

    name = PRNG_NAME

    def __init__(self, seed):
        self.state = seed_state(seed)

    def random(self, n=None):
        if n is None:
            return float(next_double(self.state))
        out = np.empty(int(n), dtype=np.float64)
        _fill_doubles(self.state, out)
        return out

    def next_u64(self):
        return int(next_u64(self.state))
