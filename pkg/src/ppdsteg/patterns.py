"""Patterns of pixel differences (PPD) and the feature extractor.

A block is the five pixels around a centre ``x22``::

    x12 x13
    x22 x23
        x33

Taking the block minimum (maximum) as reference ``b``, its four
neighbours are visited in the order given by :data:`NEIGHBOR_ORDER`
and the pattern is ``P[i] = min(|b - N[i]|, S - 1)``. Patterns are read
as base-S numbers with ``P[0]`` most significant. When several pixels
share the extreme value, the minimum pattern is the lexicographically
largest candidate and the maximum pattern the smallest one.

Indices are 1-based in the public API (``pattern_index`` returns values
in ``[1, S**4]``); count and feature arrays are plain 0-based numpy
arrays, so pattern index ``k`` lives at position ``k - 1``.
"""

from dataclasses import dataclass, field

import numpy as np

from .embed import embed_full
from .image_io import as_array

POSITIONS = ("x12", "x13", "x22", "x23", "x33")

# reference position -> (l, ul, ur, r)
NEIGHBOR_ORDER = {
    "x12": ("x22", "x23", "x33", "x13"),
    "x13": ("x23", "x33", "x22", "x12"),
    "x22": ("x12", "x13", "x33", "x23"),
    "x23": ("x33", "x22", "x12", "x13"),
    "x33": ("x23", "x13", "x12", "x22"),
}

S_MIN, S_MAX = 2, 16


def _check_s(S):
    if not (S_MIN <= int(S) <= S_MAX):
        raise ValueError(f"S must lie in [{S_MIN}, {S_MAX}], got {S}")
    return int(S)


@dataclass(frozen=True)
class PpdParams:
    S: int = 4
    calibration_seed: int = 0

    def __post_init__(self):
        _check_s(self.S)

    @property
    def dim(self):
        return self.S ** 4


@dataclass(frozen=True)
class PatternCounts:
    counts: np.ndarray
    S: int
    source_dims: tuple = (0, 0)

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class FeatureVector:
    f: np.ndarray
    S: int
    raw_ratio_min: float
    raw_ratio_max: float
    smoothing: str = field(default="add-one")


def limited_difference(x, y, S):
    return min(abs(int(x) - int(y)), S - 1)


def neighbor_order(ref_position, table=None):
    table = NEIGHBOR_ORDER if table is None else table
    try:
        return table[ref_position]
    except KeyError:
        raise ValueError(f"unknown block position {ref_position!r}") from None


def block_from_values(x12, x13, x22, x23, x33):
    return dict(zip(POSITIONS, (x12, x13, x22, x23, x33)))


def _as_block(block):
    if isinstance(block, dict):
        return block
    return block_from_values(*block)


def extract_patterns(block, S, table=None):
    """Return ``(P_min, P_max)`` for a five-pixel block.

    ``block`` is either a mapping keyed by position name or a sequence
    ``(x12, x13, x22, x23, x33)``.
    """
    S = _check_s(S)
    table = NEIGHBOR_ORDER if table is None else table
    block = _as_block(block)
    lo = min(block.values())
    hi = max(block.values())
    mins, maxs = [], []
    for ref in POSITIONS:
        b = block[ref]
        if b != lo and b != hi:
            continue
        p = [limited_difference(b, block[n], S) for n in table[ref]]
        if b == lo:
            mins.append(p)
        if b == hi:
            maxs.append(p)
    return max(mins), min(maxs)


def pattern_index(P, S):
    """Map a pattern to its 1-based integer label."""
    if len(P) != 4:
        raise ValueError("a pattern has exactly four digits")
    k = 0
    for digit in P:
        if not (0 <= digit < S):
            raise ValueError(f"pattern digit {digit} out of range for S={S}")
        k = k * S + int(digit)
    return k + 1


def pattern_from_index(index, S):
    """Inverse of :func:`pattern_index`."""
    if not (1 <= index <= S ** 4):
        raise ValueError(f"pattern index {index} out of range for S={S}")
    k = index - 1
    digits = []
    for _ in range(4):
        k, r = divmod(k, S)
        digits.append(r)
    return digits[::-1]


def block_planes(a):
    """Flattened views of the five block positions for every centre.

    Centres run over rows 1..H-2 and columns 0..W-2 (0-based).
    """
    a = np.asarray(a, dtype=np.int16)
    return {
        "x12": a[:-2, :-1].ravel(),
        "x13": a[:-2, 1:].ravel(),
        "x22": a[1:-1, :-1].ravel(),
        "x23": a[1:-1, 1:].ravel(),
        "x33": a[2:, 1:].ravel(),
    }


def pattern_labels(planes, S, table=None):
    """Vectorised ``(P_min, P_max)`` labels, 0-based, for stacked blocks."""
    table = NEIGHBOR_ORDER if table is None else table
    cap = S - 1
    diffs = {}

    def d(u, v):
        key = (u, v) if u < v else (v, u)
        if key not in diffs:
            delta = np.abs(planes[key[0]] - planes[key[1]])
            diffs[key] = np.minimum(delta, cap).astype(np.int32)
        return diffs[key]

    lo = np.minimum.reduce([planes[p] for p in POSITIONS])
    hi = np.maximum.reduce([planes[p] for p in POSITIONS])
    n = lo.shape[0]
    pmin = np.full(n, -1, dtype=np.int32)
    pmax = np.full(n, S ** 4, dtype=np.int32)
    for ref in POSITIONS:
        l, ul, ur, r = table[ref]
        label = ((d(ref, l) * S + d(ref, ul)) * S + d(ref, ur)) * S + d(ref, r)
        v = planes[ref]
        np.maximum(pmin, np.where(v == lo, label, -1), out=pmin)
        np.minimum(pmax, np.where(v == hi, label, S ** 4), out=pmax)
    return pmin, pmax


def count_patterns(img, S, table=None):
    """Occurrence counts of the min and max patterns over all blocks."""
    S = _check_s(S)
    a = as_array(img)
    pmin, pmax = pattern_labels(block_planes(a), S, table)
    n = S ** 4
    counts = np.bincount(pmin, minlength=n) + np.bincount(pmax, minlength=n)
    return PatternCounts(counts.astype(np.int64), S, a.shape)


def normalize_ratio(F):
    alpha = float(F.min())
    beta = float(F.max())
    if beta > alpha:
        f = (F - alpha) / (beta - alpha)
    else:
        f = np.zeros_like(F)
    return f, alpha, beta


def extract_features(img, params, table=None):
    """PPD feature vector of ``img``.

    The image is calibrated with a 1 bpp embedding seeded by
    ``params.calibration_seed``; the features are the add-one smoothed
    ratios ``(T + 1) / (T' + 1)`` of the pattern counts before and after,
    min-max scaled to [0, 1] (all zeros when the ratios are constant).
    """
    S = params.S
    before = count_patterns(img, S, table).counts
    after = count_patterns(embed_full(img, params.calibration_seed), S, table).counts
    F = (before + 1.0) / (after + 1.0)
    f, alpha, beta = normalize_ratio(F)
    return FeatureVector(f, S, alpha, beta)
