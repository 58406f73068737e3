"""Figures for sweep results.

Uses the non-interactive Agg backend so figures can be written from the CLI
on headless machines.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PANELS = [
    ("asii", "ASII"),
    ("mse_penalty", "MSE penalty [dB]"),
    ("power_increase_db", "Power increase [dB]"),
]


def _series(means, noise, target, column):
    cells = sorted((m["snr_db"], float(m[column])) for m in means
                   if m["noise"] == noise and m["astar"] == target)
    x = np.array([c[0] for c in cells])
    y = np.array([c[1] for c in cells])
    return x, y


def plot_target_sweep(means: list, path, noise: str | None = None):
    """Three stacked panels (ASII, MSE penalty, power increase) versus SNR,
    one curve per target intelligibility."""
    noise = noise or means[0]["noise"]
    targets = sorted({m["astar"] for m in means if m["noise"] == noise})
    fig, axes = plt.subplots(3, 1, figsize=(5.0, 7.5), sharex=True)
    cmap = plt.get_cmap("viridis")
    for i, target in enumerate(targets):
        color = cmap(i / max(len(targets) - 1, 1))
        for ax, (column, _) in zip(axes, PANELS):
            x, y = _series(means, noise, target, column)
            if column == "mse_penalty":
                # zero penalty (no processing) has no place on a dB axis
                with np.errstate(divide="ignore"):
                    y = np.where(y > 0, 10.0 * np.log10(y), np.nan)
            ax.plot(x, y, marker="o", ms=3, color=color, label=f"A*={target:g}")
    for ax, (_, label) in zip(axes, PANELS):
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=7, ncol=2)
    axes[0].set_title(f"{noise} noise")
    axes[-1].set_xlabel("Input SNR [dB]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_gain_plan(plan, path):
    """Band gains before and after limiting, and the projected bin gains."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(5.0, 5.0))
    centers = plan.weights.layout.center_freqs
    top.semilogx(centers, 20 * np.log10(plan.band_gains), "o-", label="optimal")
    top.semilogx(centers, 20 * np.log10(plan.limited_gains), "x--", label="limited")
    top.set_ylabel("Band gain [dB]")
    top.legend(fontsize=7)
    freqs = np.linspace(0, centers[-1], plan.bin_gains.size)
    bottom.plot(freqs, 20 * np.log10(plan.bin_gains))
    bottom.set_xlabel("Frequency [Hz]")
    bottom.set_ylabel("Bin gain [dB]")
    for ax in (top, bottom):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
