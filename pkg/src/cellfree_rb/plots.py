"""Figure rendering for the experiment reports.

Figures are drawn from the delimited files the CLI already emitted, so a
rendered plot is always reproducible from the data on disk.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def render_compare_figures(out_dir) -> list[Path]:
    """Render the mean-rate bar chart and convergence curves for a compare
    run; returns the written figure paths."""
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    written = []

    summary = _read_rows(out_dir / "mean_sr.csv")
    if summary:
        fig, ax = plt.subplots(figsize=(6, 4))
        names = [r["algorithm"] for r in summary]
        means = [float(r["mean_sr_per_subcarrier"]) for r in summary]
        stds = [float(r["std_sr_per_subcarrier"]) for r in summary]
        ax.bar(names, means, yerr=stds, capsize=4, color="tab:blue", alpha=0.8)
        ax.set_ylabel("sum rate per subcarrier [bit/s/Hz]")
        ax.set_title(f"mean over {summary[0]['drops']} drops")
        ax.grid(True, axis="y", alpha=0.3)
        fig.tight_layout()
        path = fig_dir / "mean_sr.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    plotted = False
    for trace_file in sorted(out_dir.glob("trace_*.csv")):
        rows = _read_rows(trace_file)
        if not rows:
            continue
        by_iter = defaultdict(list)
        for r in rows:
            by_iter[int(r["iteration"])].append(float(r["sr_per_subcarrier"]))
        iters = sorted(by_iter)
        # average only over iterations every drop reached
        n_drops = max(len(v) for v in by_iter.values())
        iters = [i for i in iters if len(by_iter[i]) == n_drops]
        mean_sr = [sum(by_iter[i]) / len(by_iter[i]) for i in iters]
        ax.plot(iters, mean_sr, label=rows[0]["algorithm"])
        plotted = True
    if plotted:
        ax.set_xlabel("iteration")
        ax.set_ylabel("mean sum rate per subcarrier [bit/s/Hz]")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "convergence.png"
        fig.savefig(path, dpi=150)
        written.append(path)
    plt.close(fig)
    return written


def render_steps_figure(out_dir) -> list[Path]:
    """Rate versus time-step budget, from the ddm-eval report file."""
    out_dir = Path(out_dir)
    path = out_dir / "sr_vs_steps.csv"
    if not path.exists():
        return []
    rows = _read_rows(path)
    series = defaultdict(list)
    for r in rows:
        series[r["algorithm"]].append((int(r["steps"]),
                                       float(r["mean_sr_per_subcarrier"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=name)
    ax.set_xlabel("time steps")
    ax.set_ylabel("mean sum rate per subcarrier [bit/s/Hz]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    out = fig_dir / "sr_vs_steps.png"
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return [out]
