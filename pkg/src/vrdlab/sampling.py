"""How well do N of M measurements find a row's minimum RDT?

N measurements are modeled as a uniform N-subset of the M-value series, drawn
without replacement. With a once-occurring minimum this gives N/M (0.5 at
N=500 of 1,000); sampling with replacement would give ~0.394 instead.

Exact values use big-integer binomials and :class:`fractions.Fraction`; the
Monte-Carlo estimator is the independent cross-check.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import AnalysisError
from .stats import numeric_values, quartiles, summarize

DEFAULT_N_GRID = (1, 3, 5, 10, 50, 500)
DEFAULT_MARGINS = (0.10, 0.20, 0.30, 0.40, 0.50)
MC_CHUNK = 2048


def _ints(series) -> list[int]:
    x = numeric_values(series)
    if len(x) == 0:
        raise AnalysisError("series has no numeric measurements")
    return [int(v) for v in x]


def _check_n(n: int, m: int):
    if not 1 <= n <= m:
        raise AnalysisError(f"N={n} must lie in [1, M={m}]")


def _margin_fraction(margin) -> Fraction:
    if margin < 0:
        raise AnalysisError("margin must be >= 0")
    # repr keeps 0.1 as exactly 1/10
    return Fraction(repr(margin)) if isinstance(margin, float) else Fraction(margin)


def _miss_all(m: int, k: int, n: int) -> Fraction:
    """P(an N-subset avoids all k marked items) = C(M-k, N) / C(M, N)."""
    return Fraction(math.comb(m - k, n), math.comb(m, n))


def prob_find_min(series, n: int, exact: bool = False):
    vals = _ints(series)
    m = len(vals)
    _check_n(n, m)
    lo = min(vals)
    k = vals.count(lo)
    p = 1 - _miss_all(m, k, n)
    return p if exact else float(p)


def prob_min_within_margin(series, n: int, margin: float, exact: bool = False):
    """P(min of an N-subset <= (1 + margin) * series minimum)."""
    vals = _ints(series)
    m = len(vals)
    _check_n(n, m)
    threshold = (1 + _margin_fraction(margin)) * min(vals)
    k = sum(1 for v in vals if v <= threshold)
    p = 1 - _miss_all(m, k, n)
    return p if exact else float(p)


def expected_normalized_min(series, n: int, exact: bool = False):
    """E[min of an N-subset] / series minimum, via order statistics.

    The i-th smallest value (1-indexed) is the subset minimum with probability
    C(M-i, N-1) / C(M, N).
    """
    vals = sorted(_ints(series))
    m = len(vals)
    _check_n(n, m)
    if vals[0] <= 0:
        raise AnalysisError("series minimum must be positive")
    total = math.comb(m, n)
    acc = 0
    for i, v in enumerate(vals, 1):
        if m - i < n - 1:
            break
        acc += v * math.comb(m - i, n - 1)
    e = Fraction(acc, total * vals[0])
    return e if exact else float(e)


@dataclass(frozen=True)
class Metric:
    name: str  # find_min | normalized_min | within_margin
    margin: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "Metric":
        text = text.strip()
        if text.startswith("within_margin"):
            inner = text[len("within_margin"):].strip("()= ")
            return cls("within_margin", float(inner))
        if text not in ("find_min", "normalized_min"):
            raise AnalysisError(f"unknown metric {text!r}")
        return cls(text)

    def __str__(self):
        return f"within_margin({self.margin:g})" if self.name == "within_margin" else self.name

    def exact(self, series, n: int) -> float:
        if self.name == "find_min":
            return prob_find_min(series, n)
        if self.name == "normalized_min":
            return expected_normalized_min(series, n)
        return prob_min_within_margin(series, n, self.margin)


FIND_MIN = Metric("find_min")
NORMALIZED_MIN = Metric("normalized_min")


def within_margin(m: float) -> Metric:
    return Metric("within_margin", m)


def _subset_minima(values: np.ndarray, n: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    # n smallest of i.i.d. uniform keys index a uniform n-subset
    keys = rng.random((iters, len(values)))
    if n < len(values):
        idx = np.argpartition(keys, n - 1, axis=1)[:, :n]
    else:
        idx = np.broadcast_to(np.arange(len(values)), (iters, n))
    return values[idx].min(axis=1)


def monte_carlo_estimate(series, n: int, metric: Metric | str = FIND_MIN, mc_iterations: int = 10_000,
                         seed: int = 0) -> tuple[float, float]:
    """Sample mean and standard error of ``metric`` over random N-subsets.

    Iterations run in fixed-size chunks, each with its own counter-derived
    generator, so results depend only on ``seed``.
    """
    if isinstance(metric, str):
        metric = Metric.parse(metric)
    vals = np.asarray(_ints(series), dtype=np.int64)
    m = len(vals)
    _check_n(n, m)
    if mc_iterations < 1:
        raise AnalysisError("mc_iterations must be >= 1")
    lo = int(vals.min())
    if metric.name == "within_margin":
        threshold = (1 + _margin_fraction(metric.margin)) * lo
    samples = []
    for c, start in enumerate(range(0, mc_iterations, MC_CHUNK)):
        size = min(MC_CHUNK, mc_iterations - start)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), c]))
        mins = _subset_minima(vals, n, size, rng)
        if metric.name == "find_min":
            samples.append((mins == lo).astype(float))
        elif metric.name == "normalized_min":
            samples.append(mins / lo)
        else:
            samples.append((mins * threshold.denominator <= threshold.numerator).astype(float))
    x = np.concatenate(samples)
    est = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return est, se


def cv_scurve(campaign: Iterable) -> list[tuple[int, float]]:
    """Per-row maximum CV over all parameter combinations, ascending."""
    best: dict[int, float] = {}
    count = 0
    for s in campaign:
        count += 1
        cv = summarize(s).cv
        row = s.row_address
        best[row] = max(best.get(row, cv), cv)
    if count == 0:
        raise AnalysisError("empty campaign")
    return sorted(best.items(), key=lambda kv: (kv[1], kv[0]))


# --- tabular outputs -------------------------------------------------------

def sampling_rows(series, row, n_values=DEFAULT_N_GRID, metrics: Sequence[Metric] = (FIND_MIN, NORMALIZED_MIN),
                  mc_iterations: int = 0, seed: int = 0) -> list[dict]:
    m = len(_ints(series))
    out = []
    for n in n_values:
        if n > m:
            continue
        for metric in metrics:
            rec = {"row": row, "N": n, "metric": str(metric), "exact": metric.exact(series, n),
                   "mc_estimate": "", "mc_stderr": ""}
            if mc_iterations:
                rec["mc_estimate"], rec["mc_stderr"] = monte_carlo_estimate(series, n, metric, mc_iterations, seed)
            out.append(rec)
    return out


SAMPLING_COLUMNS = ("row", "N", "metric", "exact", "mc_estimate", "mc_stderr")


def write_sampling_csv(path_or_file, records: Iterable[dict]):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLING_COLUMNS)
        for r in records:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SAMPLING_COLUMNS])
    finally:
        if own:
            fh.close()


def boxplot_data(records: Iterable[dict]) -> list[dict]:
    """Per (metric, N): hinges and min/max whiskers across rows."""
    groups: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        groups[(r["metric"], r["N"])].append(float(r["exact"]))
    out = []
    for (metric, n), vals in sorted(groups.items()):
        q1, med, q3 = quartiles(vals)
        out.append({"metric": metric, "N": n, "whisker_low": min(vals), "q1": q1, "median": med,
                    "q3": q3, "whisker_high": max(vals), "mean": float(np.mean(vals)), "rows": len(vals)})
    return out


def margin_table(series_list: Sequence, n_values=DEFAULT_N_GRID, margins=DEFAULT_MARGINS) -> list[dict]:
    """Mean and minimum within-margin probability across series, per (N, margin)."""
    out = []
    for margin in margins:
        for n in n_values:
            probs = [prob_min_within_margin(s, n, margin) for s in series_list if len(_ints(s)) >= n]
            if not probs:
                continue
            out.append({"margin": margin, "N": n, "mean": float(np.mean(probs)), "min": min(probs),
                        "series": len(probs)})
    return out
