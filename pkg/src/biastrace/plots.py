"""Figure rendering for the report path (PNG files next to the CSV output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_scan_histogram(deltas: np.ndarray, path: str | Path, title: str = "") -> None:
    """Log-scale histogram of per-document differential bias."""
    fig, ax = plt.subplots(figsize=(6, 4))
    vals = deltas[np.isfinite(deltas)]
    ax.hist(vals, bins=60, color="tab:blue")
    ax.set_yscale("log")
    ax.set_xlabel("approximated differential bias of removal")
    ax.set_ylabel("documents")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_approx_vs_truth(
    approx_mean, approx_std, truth_mean, truth_std, baseline_mean, path: str | Path
) -> None:
    """Scatter of approximated vs ground-truth effect sizes with error bars."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.errorbar(
        approx_mean, truth_mean, xerr=approx_std, yerr=truth_std,
        fmt="o", capsize=3, color="tab:blue", ecolor="gray",
    )
    lims = [
        min(min(approx_mean), min(truth_mean)),
        max(max(approx_mean), max(truth_mean)),
    ]
    ax.plot(lims, lims, "k--", lw=0.8, label="y = x")
    ax.axvline(baseline_mean, ls=":", color="k", lw=0.8, label="baseline")
    ax.set_xlabel("approximated effect size")
    ax.set_ylabel("ground-truth effect size")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_per_set(
    names, approx_mean, approx_std, truth_mean, truth_std, baseline_mean, path: str | Path
) -> None:
    """Per-set comparison, one row per perturbation set."""
    n = len(names)
    fig, ax = plt.subplots(figsize=(6, 0.5 * n + 1.5))
    y = np.arange(n)
    ax.errorbar(approx_mean, y + 0.15, xerr=approx_std, fmt="s", capsize=3,
                color="tab:orange", label="approximated")
    ax.errorbar(truth_mean, y - 0.15, xerr=truth_std, fmt="o", capsize=3,
                color="tab:blue", label="ground truth")
    ax.axvline(baseline_mean, ls=":", color="k", lw=0.8, label="baseline")
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("WEAT effect size")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
