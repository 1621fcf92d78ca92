import numpy as np
import pytest
from scipy.stats import chisquare

from ppdsteg.analysis import (MAX_ENUMERATION, ShiftMatrix, d_class_histogram, d_class_table,
                              exact_shift_distribution, max_distance,
                              sequential_embedding_trajectory, shift_experiment,
                              theoretical_histogram, variation_summary, write_class_csv,
                              write_index_csv)
from ppdsteg.embed import embed_full
from ppdsteg.patterns import count_patterns, pattern_from_index

from oracles import all_blocks

FIG7 = {
    "a": (100, 101, 100, 101, 100),
    "b": (100, 102, 102, 101, 100),
    "c": (102, 103, 102, 101, 100),
}


def natural_images(n=6):
    from desk_corpus import natural_tiles
    tiles = natural_tiles(n, size=128, stride=128)
    if len(tiles) < n:
        pytest.skip("sample images unavailable")
    return [a for _, a in tiles]


def test_max_distance_examples():
    assert max_distance(FIG7["a"], 4) == 1
    assert max_distance(FIG7["b"], 4) == 2
    assert max_distance(FIG7["c"], 4) == 3
    assert max_distance((5, 5, 5, 5, 5), 4) == 0


@pytest.mark.parametrize("S", [2, 3, 4, 5])
def test_d_class_histogram_matches_decode_oracle(S):
    counts = np.random.default_rng(S).integers(0, 1000, S ** 4)
    want = np.zeros(S, dtype=np.int64)
    for k in range(1, S ** 4 + 1):
        want[max(pattern_from_index(k, S))] += counts[k - 1]
    hist = d_class_histogram(counts, S)
    assert hist.class_counts.tolist() == want.tolist()
    assert hist.total == counts.sum()


def test_d_class_of_extremes():
    assert d_class_table(4)[255] == 3
    assert d_class_table(4)[0] == 0
    one_hot = np.zeros(256, dtype=np.int64)
    one_hot[0] = 10
    assert d_class_histogram(one_hot, 4).class_counts.tolist() == [10, 0, 0, 0]


def test_d_class_histogram_shape_error():
    with pytest.raises(ValueError):
        d_class_histogram(np.zeros(10), 4)


def test_theoretical_histogram_peaks():
    counts = theoretical_histogram(4, 7).counts
    assert counts.sum() == 2 * 8 ** 5
    top = int(np.argmax(counts)) + 1
    assert top == 256
    assert np.sum(counts == counts.max()) == 1
    for k in (64, 128, 192):
        assert counts[k - 1] > counts[k - 2] and counts[k - 1] > counts[k]
    assert counts[255] > counts[254]


def test_theoretical_histogram_matches_enumeration():
    from oracles import naive_index, naive_patterns
    S, m = 3, 5
    want = np.zeros(S ** 4, dtype=np.int64)
    for block in all_blocks(m):
        pmin, pmax = naive_patterns(block, S)
        want[naive_index(pmin, S) - 1] += 1
        want[naive_index(pmax, S) - 1] += 1
    assert np.array_equal(theoretical_histogram(S, m - 1).counts, want)


def test_theoretical_histogram_degenerate_and_cap():
    c = theoretical_histogram(4, 0).counts
    assert c[0] == 2 and c.sum() == 2
    with pytest.raises(ValueError, match="cap"):
        theoretical_histogram(4, int(round(MAX_ENUMERATION ** 0.2)) + 1)


def test_exact_distribution_sums_to_one():
    for block in list(FIG7.values()) + [(0, 0, 0, 0, 0), (255, 254, 0, 1, 128)]:
        p = exact_shift_distribution(block, 4)
        assert abs(p.sum() - 1) < 1e-12


def test_constant_block_shift():
    p = exact_shift_distribution((50,) * 5, 4)
    # spread 0 needs all five pixels to move identically
    assert p[0] > 0 and p[3] == 0
    row = shift_experiment((50,) * 5, 4, 5000, 3)
    assert row.source_class == 0
    assert row.counts[0] > 0 and row.counts[3] == 0


@pytest.mark.parametrize("name", ["a", "b", "c"])
def test_shift_experiment_agrees_with_enumeration(name):
    trials = 10_000
    row = shift_experiment(FIG7[name], 4, trials, seed=2024)
    assert row.counts.sum() == 2 * trials
    observed = row.counts // 2
    expected = trials * exact_shift_distribution(FIG7[name], 4)
    keep = expected > 0
    assert observed[~keep].sum() == 0
    assert chisquare(observed[keep], expected[keep]).pvalue > 0.01


def test_shift_directions():
    a = shift_experiment(FIG7["a"], 4, 10_000, seed=5).counts
    assert a[2] + a[3] > a.sum() / 2
    c = shift_experiment(FIG7["c"], 4, 10_000, seed=6).counts
    assert np.argmax(c) == 3


def test_shift_matrix_rows():
    rows = [shift_experiment(FIG7[k], 4, 200, seed=i) for i, k in enumerate("abc")]
    m = ShiftMatrix.from_rows(rows, 4)
    assert m.rows.sum(axis=1).tolist() == [0, 400, 400, 400]
    with pytest.raises(ValueError):
        ShiftMatrix.from_rows(rows + [shift_experiment(FIG7["a"], 4, 10, 0)], 4)


def test_shift_experiment_deterministic():
    r1 = shift_experiment(FIG7["b"], 4, 300, 9)
    r2 = shift_experiment(FIG7["b"], 4, 300, 9)
    assert np.array_equal(r1.counts, r2.counts)
    with pytest.raises(ValueError):
        shift_experiment(FIG7["b"], 4, 0, 9)


def test_trajectory_on_natural_images():
    for a in natural_images(4):
        hist = sequential_embedding_trajectory(a, 4, 3, seed=1)
        assert len(hist) == 4
        ones = [h.class_counts[1] for h in hist]
        threes = [h.class_counts[3] for h in hist]
        assert ones[1] < ones[0]
        assert threes[1] > threes[0]
        assert all(h.total == hist[0].total for h in hist)


def test_trajectory_zero_steps():
    a = np.random.default_rng(0).integers(0, 256, (10, 10), dtype=np.uint8)
    hist = sequential_embedding_trajectory(a, 4, 0, seed=1)
    assert len(hist) == 1
    with pytest.raises(ValueError):
        sequential_embedding_trajectory(a, 4, -1, seed=1)


def test_variation_summary():
    a = natural_images(1)[0]
    cover = count_patterns(a, 4)
    assert not variation_summary(cover, cover).any()
    delta = variation_summary(cover, count_patterns(embed_full(a, 3), 4))
    assert delta[0] < 0
    assert delta.sum() == 0
    small = count_patterns(a[:50, :50], 4)
    with pytest.raises(ValueError, match="mismatch"):
        variation_summary(cover, small)


def test_csv_writers(tmp_path):
    write_index_csv(tmp_path / "i.csv", np.arange(16))
    lines = (tmp_path / "i.csv").read_text().splitlines()
    assert lines[0] == "index,count" and lines[1] == "1,0" and len(lines) == 17
    write_class_csv(tmp_path / "c.csv", {"before": [1, 2], "after": [3, 4]})
    assert (tmp_path / "c.csv").read_text().splitlines() == ["d_class,before,after", "0,1,3",
                                                              "1,2,4"]
