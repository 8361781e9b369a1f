"""Figures for the ``report`` subcommand. Everything renders to files (Agg)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import stats  # noqa: E402
from .sampling import DEFAULT_MARGINS, DEFAULT_N_GRID, boxplot_data, cv_scurve, margin_table, sampling_rows  # noqa: E402


def figure(width=6.0, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height or width * golden))
    ax.grid(True, alpha=0.3, linestyle=":")
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_series(series, path, title=None):
    x = stats.numeric_values(series)
    fig, ax = figure(8, 3)
    ax.plot(np.arange(len(x)), x, ".", ms=2)
    ax.set_xlabel("measurement")
    ax.set_ylabel("RDT (hammer count)")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_histogram(series, path, title=None):
    st = stats.summarize(series)
    fig, ax = figure()
    lows = [b[0] for b in st.histogram]
    widths = [max(b[1] - b[0], 1e-9) for b in st.histogram]
    ax.bar(lows, [b[2] for b in st.histogram], width=widths, align="edge", edgecolor="k", linewidth=0.3)
    ax.set_xlabel("RDT")
    ax.set_ylabel("count")
    ax.set_title(title or f"{st.unique_values} bins")
    return _save(fig, path)


def plot_run_lengths(series_list, path):
    agg: dict[int, int] = {}
    for s in series_list:
        for k, v in stats.run_lengths(s).items():
            agg[k] = agg.get(k, 0) + v
    fig, ax = figure()
    ks = sorted(agg)
    ax.bar(ks, [agg[k] for k in ks])
    ax.set_yscale("log")
    ax.set_xlabel("consecutive measurements with the same RDT")
    ax.set_ylabel("runs")
    return _save(fig, path)


def plot_acf(series, path, max_lag=50):
    n = len(stats.numeric_values(series))
    r = stats.acf(series, min(max_lag, n - 1))
    fig, ax = figure()
    ax.stem(np.arange(len(r)), r, basefmt=" ")
    band = stats.white_noise_band(n)
    ax.axhspan(-band, band, color="tab:blue", alpha=0.15)
    ax.set_xlabel("lag")
    ax.set_ylabel("ACF")
    return _save(fig, path)


def plot_scurve(series_list, path):
    curve = cv_scurve(series_list)
    fig, ax = figure()
    ax.plot(np.linspace(0, 100, len(curve)) if len(curve) > 1 else [50], [c for _, c in curve], "o-", ms=3)
    ax.set_xlabel("rows (percentile)")
    ax.set_ylabel("max CV")
    return _save(fig, path)


def plot_sampling_boxes(series_list, path, n_values=DEFAULT_N_GRID):
    recs = []
    for i, s in enumerate(series_list):
        recs += sampling_rows(s, i, n_values)
    boxes = boxplot_data(recs)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    for ax, metric, label in ((top, "find_min", "P(find min)"), (bottom, "normalized_min", "E[min]/min")):
        sel = [b for b in boxes if b["metric"] == metric]
        stats_ = [{"med": b["median"], "q1": b["q1"], "q3": b["q3"], "whislo": b["whisker_low"],
                   "whishi": b["whisker_high"], "mean": b["mean"], "label": str(b["N"])} for b in sel]
        if stats_:
            ax.bxp(stats_, showmeans=True, showfliers=False)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3, linestyle=":")
    bottom.set_xlabel("N measurements")
    return _save(fig, path)


def plot_margins(series_list, path, n_values=DEFAULT_N_GRID, margins=DEFAULT_MARGINS):
    table = margin_table(series_list, n_values, margins)
    fig, ax = figure()
    for margin in margins:
        pts = [r for r in table if r["margin"] == margin]
        if not pts:
            continue
        ns = [r["N"] for r in pts]
        line, = ax.plot(ns, [r["mean"] for r in pts], "o-", label=f"{margin:.0%}")
        ax.plot(ns, [r["min"] for r in pts], "_", color=line.get_color(), ms=12)
    ax.set_xscale("log")
    ax.set_xlabel("N measurements")
    ax.set_ylabel("P(min within margin)")
    ax.legend(title="margin", fontsize=8)
    return _save(fig, path)


def plot_guardband_actions(outcomes_by_technique: dict, path):
    fig, ax = figure()
    for tech, outs in outcomes_by_technique.items():
        ax.plot([o.guardband for o in outs], [o.actions_per_million for o in outs], "o-", label=tech)
    ax.set_xlabel("guardband")
    ax.set_ylabel("preventive actions / M activations")
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_report(series_list, names, out_dir, max_series_plots: int = 8) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    usable = [(n, s) for n, s in zip(names, series_list) if s.numeric()]
    for name, s in usable[:max_series_plots]:
        paths.append(plot_series(s, out / f"{name}_series.png", name))
        paths.append(plot_histogram(s, out / f"{name}_hist.png", name))
        if len(set(s.numeric())) > 1 and len(s.numeric()) > 2:
            paths.append(plot_acf(s, out / f"{name}_acf.png"))
    if usable:
        only = [s for _, s in usable]
        paths.append(plot_run_lengths(only, out / "run_lengths.png"))
        paths.append(plot_scurve(only, out / "cv_scurve.png"))
        paths.append(plot_sampling_boxes(only, out / "sampling_boxes.png"))
        paths.append(plot_margins(only, out / "margins.png"))
    return paths
