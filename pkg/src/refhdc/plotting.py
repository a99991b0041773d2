"""Accuracy-trajectory figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_trajectories(series, path, title=None, target=None):
    """``series`` maps a legend label to ``(rounds, accuracies)``."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for label, (rounds, acc) in series.items():
        ax.plot(rounds, acc, label=label, linewidth=1.2)
    if target is not None:
        ax.axhline(target, color="0.5", linestyle="--", linewidth=0.8, label="target")
    ax.set_xlabel("Global epoch")
    ax.set_ylabel("Test accuracy")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
