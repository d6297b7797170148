"""Rank-based significance tests and box-plot summaries.

The omnibus test uses midranks with the standard tie correction and a
chi-square upper tail; the pairwise post-hoc comparisons use normal tails
with Bonferroni adjustment (raw p-values are also reported).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc


def chi2_sf(x, df):
    """Upper tail of the chi-square distribution via the regularized
    upper incomplete gamma function."""
    if x < 0 or df <= 0:
        raise ValueError(f"need x >= 0 and df > 0, got x={x}, df={df}")
    return float(gammaincc(df / 2.0, x / 2.0))


def normal_sf_two_sided(z):
    """Two-sided tail probability of the standard normal."""
    return float(math.erfc(abs(z) / math.sqrt(2.0)))


def _midranks(pooled):
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size, dtype=np.float64)
    sorted_v = pooled[order]
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_term(pooled):
    _, counts = np.unique(pooled, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _validate_groups(groups):
    if len(groups) < 2:
        raise ValueError(f"need at least 2 groups, got {len(groups)}")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if any(a.size == 0 for a in arrays):
        raise ValueError("all groups must be non-empty")
    pooled = np.concatenate(arrays)
    if np.all(pooled == pooled[0]):
        raise ValueError("all values identical across all groups; rank test undefined")
    return arrays


def kruskal_wallis(groups):
    """Rank-based analysis of variance; returns (H, p).

    H = 12/(N(N+1)) * sum n_i * rbar_i^2 - 3(N+1), with midranks and the
    tie correction 1 - sum(t^3 - t)/(N^3 - N); p comes from the
    chi-square upper tail with k - 1 degrees of freedom.
    """
    arrays = _validate_groups(groups)
    pooled = np.concatenate(arrays)
    n_total = pooled.size
    ranks = _midranks(pooled)
    h = 0.0
    offset = 0
    for a in arrays:
        r_mean = float(np.mean(ranks[offset : offset + a.size]))
        h += a.size * r_mean * r_mean
        offset += a.size
    h = 12.0 / (n_total * (n_total + 1.0)) * h - 3.0 * (n_total + 1.0)
    correction = 1.0 - _tie_term(pooled) / (n_total**3 - n_total)
    h /= correction
    p = chi2_sf(h, len(arrays) - 1)
    return float(h), p


@dataclass
class DunnComparison:
    group_a: int
    group_b: int
    z: float
    p: float
    p_adjusted: float


def dunn_test(groups):
    """Pairwise post-hoc rank comparisons; returns DunnComparison records.

    z_ij = (rbar_i - rbar_j) / sqrt[(N(N+1)/12 - T/(12(N-1))) (1/n_i + 1/n_j)]
    where T is the tie term; p is the two-sided normal tail and the
    adjustment is Bonferroni over the number of pairs.
    """
    arrays = _validate_groups(groups)
    pooled = np.concatenate(arrays)
    n_total = pooled.size
    ranks = _midranks(pooled)
    means = []
    offset = 0
    for a in arrays:
        means.append(float(np.mean(ranks[offset : offset + a.size])))
        offset += a.size
    var_base = n_total * (n_total + 1.0) / 12.0 - _tie_term(pooled) / (
        12.0 * (n_total - 1.0)
    )
    k = len(arrays)
    n_pairs = k * (k - 1) // 2
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            se = math.sqrt(var_base * (1.0 / arrays[i].size + 1.0 / arrays[j].size))
            z = (means[i] - means[j]) / se
            p = normal_sf_two_sided(z)
            out.append(
                DunnComparison(
                    group_a=i,
                    group_b=j,
                    z=float(z),
                    p=p,
                    p_adjusted=min(1.0, p * n_pairs),
                )
            )
    return out


@dataclass
class MetricDistribution:
    """Box-plot summary of one metric over one comparison class."""

    label: str
    values: list
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list


def boxplot_stats(values, label=""):
    """Quartiles by linear interpolation, whiskers at the most extreme
    data within 1.5 IQR of the box, everything beyond marked outlier."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("cannot summarize an empty distribution")
    q1, median, q3 = (float(q) for q in np.quantile(arr, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    whisker_low = float(inside.min())
    whisker_high = float(inside.max())
    outliers = sorted(float(v) for v in arr[(arr < lo_fence) | (arr > hi_fence)])
    return MetricDistribution(
        label=label,
        values=[float(v) for v in arr],
        median=median,
        q1=q1,
        q3=q3,
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=outliers,
    )
