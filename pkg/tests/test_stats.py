"""Rank tests and tail probabilities against hand values and a series oracle."""

import math

import numpy as np
import pytest

from microgan import stats


# --- independent oracles ----------------------------------------------------

def gamma_p_series(a, x, tol=1e-15):
    """Lower regularized incomplete gamma by power series."""
    term = 1.0 / a
    total = term
    n = a
    for _ in range(10000):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * tol:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q_continued_fraction(a, x, tol=1e-15):
    """Upper regularized incomplete gamma by Lentz's continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi2_sf_oracle(x, df):
    a = df / 2.0
    xx = x / 2.0
    if xx == 0.0:
        return 1.0
    if xx < a + 1.0:
        return 1.0 - gamma_p_series(a, xx)
    return gamma_q_continued_fraction(a, xx)


def kruskal_bruteforce(groups):
    """Independent H computation: explicit sort, midranks, tie correction."""
    pooled = [(v, gi) for gi, g in enumerate(groups) for v in g]
    pooled.sort(key=lambda t: t[0])
    n = len(pooled)
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[j + 1][0] == pooled[i][0]:
            j += 1
        for t in range(i, j + 1):
            ranks[t] = (i + j) / 2.0 + 1.0
        i = j + 1
    sums = [0.0] * len(groups)
    counts = [0] * len(groups)
    tie_sum = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[j + 1][0] == pooled[i][0]:
            j += 1
        t = j - i + 1
        tie_sum += t**3 - t
        i = j + 1
    for (v, gi), r in zip(pooled, ranks):
        sums[gi] += r
        counts[gi] += 1
    h = 12.0 / (n * (n + 1)) * sum(
        c * (s / c) ** 2 for s, c in zip(sums, counts)
    ) - 3.0 * (n + 1)
    return h / (1.0 - tie_sum / (n**3 - n))


# --- tests -------------------------------------------------------------------

class TestTails:
    @pytest.mark.parametrize("df", [1, 2, 3, 5, 10])
    @pytest.mark.parametrize("x", [0.0, 0.3, 1.0, 3.857, 10.0, 25.0])
    def test_chi2_sf_matches_series_oracle(self, x, df):
        assert stats.chi2_sf(x, df) == pytest.approx(chi2_sf_oracle(x, df), abs=1e-10)

    @pytest.mark.parametrize("z", [0.0, 0.5, 1.0, 1.964, 3.0, 5.0])
    def test_normal_two_sided_matches_chi2_identity(self, z):
        # two-sided normal tail equals the df=1 chi-square tail of z^2
        assert stats.normal_sf_two_sided(z) == pytest.approx(
            chi2_sf_oracle(z * z, 1), abs=1e-10
        )

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            stats.chi2_sf(-1.0, 2)


class TestKruskalWallis:
    def test_hand_computed_two_groups(self):
        h, p = stats.kruskal_wallis([[1, 2, 3], [4, 5, 6]])
        assert h == pytest.approx(3.857, abs=5e-4)
        assert p == pytest.approx(chi2_sf_oracle(h, 1), abs=1e-12)

    def test_identical_group_copies(self):
        h, p = stats.kruskal_wallis([[1, 2, 3], [1, 2, 3]])
        assert h == pytest.approx(0.0, abs=1e-12)
        assert p == 1.0

    def test_all_values_identical_rejected(self):
        with pytest.raises(ValueError, match="identical"):
            stats.kruskal_wallis([[2, 2], [2, 2, 2]])

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        groups = [rng.random(7), rng.random(5) + 0.2, rng.random(6)]
        h0, _ = stats.kruskal_wallis(groups)
        for f in (np.exp, lambda v: v**3, lambda v: 5 * v - 2):
            h1, _ = stats.kruskal_wallis([f(np.asarray(g)) for g in groups])
            assert h1 == pytest.approx(h0, abs=1e-9)

    def test_matches_bruteforce_on_random_groups(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            k = int(rng.integers(2, 5))
            groups = [
                np.round(rng.random(int(rng.integers(3, 9))), 1) for _ in range(k)
            ]
            try:
                h, _ = stats.kruskal_wallis(groups)
            except ValueError:
                continue  # degenerate draw, all values equal
            assert h == pytest.approx(kruskal_bruteforce([list(g) for g in groups]), abs=1e-9)

    def test_within_group_permutation_invariance(self):
        rng = np.random.default_rng(2)
        groups = [rng.random(6), rng.random(6), rng.random(6)]
        h0, _ = stats.kruskal_wallis(groups)
        shuffled = [rng.permutation(g) for g in groups]
        h1, _ = stats.kruskal_wallis(shuffled)
        assert h1 == pytest.approx(h0, abs=1e-12)

    def test_fewer_than_two_groups_rejected(self):
        with pytest.raises(ValueError):
            stats.kruskal_wallis([[1, 2, 3]])


class TestDunn:
    def test_hand_computed_two_groups(self):
        (cmp01,) = stats.dunn_test([[1, 2, 3], [4, 5, 6]])
        assert abs(cmp01.z) == pytest.approx(1.964, abs=5e-4)
        assert cmp01.p == pytest.approx(stats.normal_sf_two_sided(cmp01.z), abs=1e-15)
        assert cmp01.p_adjusted == cmp01.p  # single pair, Bonferroni x1

    def test_antisymmetry(self):
        rng = np.random.default_rng(3)
        a, b = list(rng.random(6)), list(rng.random(8) + 0.1)
        (z_ab,) = stats.dunn_test([a, b])
        (z_ba,) = stats.dunn_test([b, a])
        assert z_ab.z == pytest.approx(-z_ba.z, abs=1e-12)

    def test_identical_groups(self):
        (cmp01,) = stats.dunn_test([[1, 2, 3], [1, 2, 3]])
        assert cmp01.z == pytest.approx(0.0, abs=1e-12)
        assert cmp01.p_adjusted == 1.0

    def test_bonferroni_over_pairs(self):
        rng = np.random.default_rng(4)
        groups = [rng.random(5), rng.random(5) + 0.5, rng.random(5) + 1.0]
        results = stats.dunn_test(groups)
        assert len(results) == 3
        for r in results:
            assert r.p_adjusted == pytest.approx(min(1.0, r.p * 3), abs=1e-15)

    def test_pairs_cover_all_combinations(self):
        groups = [[1, 2], [3, 4], [5, 6], [7, 8]]
        results = stats.dunn_test(groups)
        assert [(r.group_a, r.group_b) for r in results] == [
            (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)
        ]


class TestBoxplotStats:
    def test_one_through_nine(self):
        d = stats.boxplot_stats(list(range(1, 10)))
        assert (d.median, d.q1, d.q3) == (5.0, 3.0, 7.0)
        assert d.outliers == []
        assert (d.whisker_low, d.whisker_high) == (1.0, 9.0)

    def test_single_value(self):
        d = stats.boxplot_stats([3.7])
        assert (
            d.median, d.q1, d.q3, d.whisker_low, d.whisker_high
        ) == (3.7, 3.7, 3.7, 3.7, 3.7)
        assert d.outliers == []

    def test_outlier_flagged(self):
        d = stats.boxplot_stats([1, 2, 3, 4, 100])
        assert d.outliers == [100.0]
        assert d.whisker_high == 4.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stats.boxplot_stats([])

    def test_quartile_order_invariant(self):
        rng = np.random.default_rng(5)
        vals = rng.random(37)
        d = stats.boxplot_stats(vals)
        assert d.q1 <= d.median <= d.q3
        assert d.whisker_low <= d.q1 and d.q3 <= d.whisker_high
