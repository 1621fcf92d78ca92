"""LSB matching (+/-1) embedding of random bits.

The message stream is consumed in raster order, one uniform draw for the
bit and, only when the pixel parity disagrees with it, a second draw for
the direction. A pixel at 0 always moves to 1 and a pixel at 255 always
moves to 254 (the direction draw is still consumed), so every pixel ends
up carrying its bit.

For rates below one, pixels are selected by independent Bernoulli draws
from a second stream seeded with ``derive_seed(seed, "select")``; the
message stream only advances on selected pixels, which makes ``rate=1``
identical to :func:`embed_full`.
"""

from dataclasses import dataclass

import numba
import numpy as np

from ._rng import PRNG_NAME, derive_seed, next_double, seed_state
from .image_io import GrayImage, as_array


@dataclass(frozen=True)
class EmbedParams:
    seed: int
    rate: float = 1.0
    boundary_policy: str = "force-valid-direction"

    def __post_init__(self):
        if not (0.0 < self.rate <= 1.0):
            raise ValueError(f"embedding rate must lie in (0, 1], got {self.rate}")
        if self.boundary_policy != "force-valid-direction":
            raise ValueError(f"unknown boundary policy {self.boundary_policy!r}")


@numba.njit(cache=True)
def _embed_pixel(p, s):
    bit = 0 if next_double(s) < 0.5 else 1
    if (p & 1) == bit:
        return p
    up = next_double(s) < 0.5
    if p == 0:
        return 1
    if p == 255:
        return 254
    return p + 1 if up else p - 1


@numba.njit(cache=True)
def _embed_all(flat, s):
    for k in range(flat.shape[0]):
        flat[k] = _embed_pixel(flat[k], s)


@numba.njit(cache=True)
def _embed_selected(flat, s, sel, rate):
    for k in range(flat.shape[0]):
        if next_double(sel) < rate:
            flat[k] = _embed_pixel(flat[k], s)


def _work_copy(img):
    return np.array(as_array(img), dtype=np.int64).ravel()


def embed_full(img, seed):
    """Embed one random bit in every pixel (1 bpp)."""
    a = as_array(img)
    flat = _work_copy(a)
    _embed_all(flat, seed_state(seed))
    return GrayImage(flat.astype(np.uint8).reshape(a.shape))


def embed_rate(img, params):
    """Embed random bits in a Bernoulli(rate) subset of the pixels."""
    if not isinstance(params, EmbedParams):
        raise TypeError("params must be an EmbedParams")
    if params.rate == 1.0:
        return embed_full(img, params.seed)
    a = as_array(img)
    flat = _work_copy(a)
    _embed_selected(flat, seed_state(params.seed),
                    seed_state(derive_seed(params.seed, "select")), params.rate)
    return GrayImage(flat.astype(np.uint8).reshape(a.shape))


def message_bits(img, seed):
    """Replay the bits :func:`embed_full` writes into ``img``.

    The direction draw is only taken for pixels whose parity disagrees
    with their bit, so the cover is needed to stay in step.
    """
    flat = _work_copy(img)
    bits = np.empty(flat.shape[0], dtype=np.uint8)
    _replay_bits(flat, seed_state(seed), bits)
    return bits.reshape(as_array(img).shape)


@numba.njit(cache=True)
def _replay_bits(flat, s, bits):
    for k in range(flat.shape[0]):
        bit = 0 if next_double(s) < 0.5 else 1
        bits[k] = bit
        if (flat[k] & 1) != bit:
            next_double(s)


def embed_block(values, state):
    """Apply one embedding pass to a small array in place, continuing ``state``.

    Used by the Monte Carlo pattern-shift experiments, where many
    independent embeddings of the same block share one stream.
    """
    _embed_all(values, state)
    return values


embedding_metadata = {"prng": PRNG_NAME, "boundary_policy": "force-valid-direction",
                      "selection": "bernoulli"}
