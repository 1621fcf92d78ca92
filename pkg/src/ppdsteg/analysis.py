"""Diagnostics on pattern counts: d-classes, shift experiments, trajectories.

A pattern's d-class is its largest digit, i.e. the clamped spread
``min(S - 1, max(B) - min(B))`` of the block that produced it.
"""

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from ._rng import derive_seed, seed_state
from .embed import embed_block, embed_full
from .patterns import (POSITIONS, PatternCounts, _check_s, count_patterns,
                       pattern_labels)

MAX_ENUMERATION = 10 ** 8


@dataclass(frozen=True)
class DClassHistogram:
    class_counts: np.ndarray
    S: int

    @property
    def total(self):
        return int(self.class_counts.sum())


@dataclass(frozen=True)
class ShiftRow:
    """Destination d-class counts for repeated embeddings of one block."""

    source_class: int
    counts: np.ndarray
    trials: int


@dataclass(frozen=True)
class ShiftMatrix:
    rows: np.ndarray
    trials: int
    S: int

    @classmethod
    def from_rows(cls, rows, S):
        trials = {r.trials for r in rows}
        if len(trials) != 1:
            raise ValueError("all rows must use the same number of trials")
        m = np.zeros((S, S), dtype=np.int64)
        for r in rows:
            m[r.source_class] += r.counts
        return cls(m, trials.pop(), S)


def _block_values(block):
    if isinstance(block, dict):
        return [int(block[p]) for p in POSITIONS]
    values = [int(v) for v in block]
    if len(values) != 5:
        raise ValueError("a block has five pixels")
    return values


def max_distance(block, S):
    values = _block_values(block)
    return min(S - 1, max(values) - min(values))


def d_class_table(S):
    """d-class of every 0-based pattern label."""
    k = np.arange(S ** 4)
    digits = np.stack([(k // S ** e) % S for e in range(4)])
    return digits.max(axis=0)


def d_class_histogram(counts, S=None):
    if isinstance(counts, PatternCounts):
        S = counts.S if S is None else S
        counts = counts.counts
    S = _check_s(S)
    counts = np.asarray(counts)
    if counts.shape != (S ** 4,):
        raise ValueError(f"expected {S ** 4} counters, got {counts.shape}")
    hist = np.bincount(d_class_table(S), weights=counts, minlength=S)
    return DClassHistogram(hist.astype(np.int64), S)


def theoretical_histogram(S, value_range_max=7):
    """Pattern counts over every block with pixel values in [0, value_range_max]."""
    S = _check_s(S)
    if value_range_max < 0:
        raise ValueError("value_range_max must be non-negative")
    m = value_range_max + 1
    if m ** 5 > MAX_ENUMERATION:
        raise ValueError(f"{m}^5 blocks exceeds the enumeration cap of {MAX_ENUMERATION}")
    grid = np.indices((m,) * 4).reshape(4, -1).astype(np.int16)
    n = S ** 4
    counts = np.zeros(n, dtype=np.int64)
    # chunk on the first pixel to bound memory
    for first in range(m):
        planes = {POSITIONS[0]: np.full(grid.shape[1], first, dtype=np.int16)}
        for name, row in zip(POSITIONS[1:], grid):
            planes[name] = row
        pmin, pmax = pattern_labels(planes, S)
        counts += np.bincount(pmin, minlength=n) + np.bincount(pmax, minlength=n)
    return PatternCounts(counts, S, (0, 0))


def _block_classes(values, S):
    spread = values.max(axis=-1) - values.min(axis=-1)
    return np.minimum(spread, S - 1)


def shift_experiment(block, S, trials, seed):
    """Embed ``trials`` independent 1 bpp messages into the same block.

    Every trial starts again from the original block; the stream of the
    generator seeded with ``seed`` carries over from one trial to the next.
    Both patterns of a block share its d-class, so each trial adds two.
    """
    S = _check_s(S)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    values = np.array(_block_values(block), dtype=np.int64)
    state = seed_state(seed)
    out = np.empty((trials, 5), dtype=np.int64)
    work = np.empty(5, dtype=np.int64)
    for t in range(trials):
        work[:] = values
        embed_block(work, state)
        out[t] = work
    classes = _block_classes(out, S)
    counts = 2 * np.bincount(classes, minlength=S)
    return ShiftRow(max_distance(values, S), counts.astype(np.int64), trials)


def _pixel_outcomes(p):
    if p == 0:
        return ((0, 0.5), (1, 0.5))
    if p == 255:
        return ((0, 0.5), (-1, 0.5))
    return ((0, 0.5), (1, 0.25), (-1, 0.25))


def exact_shift_distribution(block, S):
    """Probability of each destination d-class after one 1 bpp embedding.

    Enumerates the keep / +1 / -1 outcome of every pixel (3**5 cases,
    fewer at the 0 and 255 boundaries).
    """
    values = _block_values(block)
    probs = np.zeros(S)
    for combo in itertools.product(*[_pixel_outcomes(p) for p in values]):
        moved = [p + step for p, (step, _) in zip(values, combo)]
        weight = float(np.prod([w for _, w in combo]))
        probs[min(S - 1, max(moved) - min(moved))] += weight
    return probs


def sequential_embedding_trajectory(img, S, steps, seed):
    """d-class histograms of ``img`` and of ``steps`` cumulative 1 bpp embeddings.

    Step ``k`` is seeded with ``derive_seed(seed, "step", k)``.
    """
    S = _check_s(S)
    if steps < 0:
        raise ValueError("steps must be non-negative")
    hist = [d_class_histogram(count_patterns(img, S))]
    current = img
    for k in range(1, steps + 1):
        current = embed_full(current, derive_seed(seed, "step", k))
        hist.append(d_class_histogram(count_patterns(current, S)))
    return hist


def variation_summary(cover_counts, embedded_counts, S=None):
    """Signed change of every d-class total, embedded minus cover."""
    if isinstance(cover_counts, PatternCounts) and isinstance(embedded_counts, PatternCounts):
        if cover_counts.source_dims != embedded_counts.source_dims:
            raise ValueError(f"dimension mismatch: {cover_counts.source_dims} "
                             f"vs {embedded_counts.source_dims}")
    a = d_class_histogram(cover_counts, S)
    b = d_class_histogram(embedded_counts, S)
    if a.S != b.S:
        raise ValueError("counts use different S")
    return b.class_counts - a.class_counts


def write_index_csv(path, counts, header=("index", "count")):
    """One row per pattern index (1-based)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, c in enumerate(np.asarray(counts), start=1):
            w.writerow([k, int(c)])


def write_class_csv(path, columns):
    """One row per d-class; ``columns`` maps a column name to S values."""
    names = list(columns)
    rows = [np.asarray(columns[n]) for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d_class"] + names)
        for d in range(len(rows[0])):
            w.writerow([d] + [int(r[d]) for r in rows])
