"""Descriptive and inferential statistics over RDT measurement series.

All functions accept a :class:`~vrdlab.profiler.MeasurementSeries` or a plain
sequence. NoFlip sentinels (``None``) are dropped before any computation.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import AnalysisError


def numeric_values(series) -> np.ndarray:
    vals = series.values if hasattr(series, "values") and not isinstance(series, np.ndarray) else series
    return np.asarray([v for v in vals if v is not None], dtype=float)


def _median(sorted_vals: np.ndarray) -> float:
    return float(np.median(sorted_vals))


def quartiles(values) -> tuple[float, float, float]:
    """Tukey hinges: Q1/Q3 are the medians of the lower and upper halves."""
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n == 0:
        raise AnalysisError("no values")
    if n == 1:
        return float(x[0]), float(x[0]), float(x[0])
    lower, upper = x[: n // 2], x[(n + 1) // 2:]
    return _median(lower), _median(x), _median(upper)


@dataclass(frozen=True)
class SeriesStats:
    n: int
    noflip: int
    mean: float
    stddev: float
    min: float
    max: float
    cv: float
    q1: float
    median: float
    q3: float
    unique_values: int
    histogram: tuple[tuple[float, float, int], ...]

    @property
    def quartiles(self) -> tuple[float, float, float]:
        return self.q1, self.median, self.q3

    @property
    def max_min_ratio(self) -> float:
        return self.max / self.min

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram"] = [list(b) for b in self.histogram]
        return d


def summarize(series) -> SeriesStats:
    """Moments, hinges, and an equal-width histogram with one bin per unique value.

    ``stddev`` is the population standard deviation, so ``cv`` is the spread of
    the whole series normalized to its mean.
    """
    raw = series.values if hasattr(series, "values") and not isinstance(series, np.ndarray) else list(series)
    x = numeric_values(raw)
    noflip = len(raw) - len(x)
    if len(x) == 0:
        raise AnalysisError("series has no numeric measurements")
    mean = float(x.mean())
    std = float(x.std())
    lo, hi = float(x.min()), float(x.max())
    uniq = int(len(np.unique(x)))
    if lo == hi:
        hist = ((lo, hi, len(x)),)
    else:
        counts, edges = np.histogram(x, bins=uniq, range=(lo, hi))
        hist = tuple((float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts))
    q1, med, q3 = quartiles(x)
    return SeriesStats(len(x), noflip, mean, std, lo, hi, std / mean if mean > 0 else float("nan"),
                       q1, med, q3, uniq, hist)


def run_lengths(series) -> dict[int, int]:
    """Histogram of maximal runs of equal consecutive values: ``{length: count}``."""
    x = numeric_values(series)
    if len(x) == 0:
        raise AnalysisError("series has no numeric measurements")
    change = np.flatnonzero(x[1:] != x[:-1]) + 1
    bounds = np.concatenate(([0], change, [len(x)]))
    return dict(sorted(Counter(np.diff(bounds).tolist()).items()))


def single_run_fraction(hist: dict[int, int]) -> float:
    """Share of runs that last exactly one measurement."""
    total = sum(hist.values())
    return hist.get(1, 0) / total if total else float("nan")


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation for lags ``0..max_lag`` (biased, denominator n)."""
    x = numeric_values(series)
    n = len(x)
    if max_lag < 0 or n <= max_lag:
        raise AnalysisError(f"series length {n} must exceed max_lag {max_lag}")
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0:
        raise AnalysisError("zero-variance series has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(d[:-k] @ d[k:]) / denom
    return out


def white_noise_band(n: int, width: float = 3.0) -> float:
    return width / np.sqrt(n)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    reject: bool
    bins: int
    dof: int

    def __iter__(self):
        return iter((self.statistic, self.p_value, self.reject))


def unique_value_bins(values) -> tuple[np.ndarray, np.ndarray]:
    """Observed counts per unique value and the bin edges between them.

    Edges are midpoints between consecutive unique values; the outer bins
    extend to infinity.
    """
    uniq, counts = np.unique(values, return_counts=True)
    mids = (uniq[1:] + uniq[:-1]) / 2.0
    edges = np.concatenate(([-np.inf], mids, [np.inf]))
    return counts.astype(float), edges


def merge_bins(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Merge adjacent bins left to right until each expected count >= ``min_expected``.

    A short tail is folded into the previous bin.
    """
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if obs_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.asarray(obs_out), np.asarray(exp_out)


def chi_square_normal_fit(series, alpha: float = 0.05, min_expected: float = 5.0,
                          fitted_params: int = 2) -> ChiSquareResult:
    """Pearson goodness of fit against Normal(sample mean, sample stddev).

    Degrees of freedom are ``bins - 1 - fitted_params``.
    """
    x = numeric_values(series)
    if len(np.unique(x)) < 2:
        raise AnalysisError("chi-square fit needs at least two distinct values")
    mu, sigma = float(x.mean()), float(x.std(ddof=1))
    observed, edges = unique_value_bins(x)
    cdf = sps.norm.cdf(edges, loc=mu, scale=sigma)
    expected = len(x) * np.diff(cdf)
    observed, expected = merge_bins(observed, expected, min_expected)
    bins = len(observed)
    dof = bins - 1 - fitted_params
    if dof < 1:
        raise AnalysisError(f"only {bins} bins after merging; need at least {fitted_params + 2}")
    stat = float(np.sum((observed - expected) ** 2 / expected))
    p = float(sps.chi2.sf(stat, dof))
    return ChiSquareResult(stat, p, p < alpha, bins, dof)


# --- emitters --------------------------------------------------------------

def write_stats_csv(path, rows: Sequence[tuple[str, SeriesStats]]):
    cols = ["series", "n", "noflip", "mean", "stddev", "min", "max", "cv", "q1", "median", "q3", "unique_values"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for name, s in rows:
            w.writerow([name] + [repr(getattr(s, c)) if isinstance(getattr(s, c), float) else getattr(s, c)
                                 for c in cols[1:]])


def write_histogram_csv(path, stats: SeriesStats):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in stats.histogram:
            w.writerow([repr(lo), repr(hi), c])


def write_xy(path, xs, ys, header=("x", "y")):
    """Two-column plot-data file."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in zip(xs, ys):
            w.writerow([x if isinstance(x, (int, np.integer)) else repr(float(x)),
                        y if isinstance(y, (int, np.integer)) else repr(float(y))])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
