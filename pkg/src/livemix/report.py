"""Figure rendering for evaluation reports and training logs.

All figures go to files (Agg backend); the CLI writes them next to the
delimited output so a report directory is self-contained.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIG_DPI = 110


def save_gain_timeline_figure(timeline, clock, channel_names, path, title="") -> None:
    """Step plot of each channel's applied gain over stream time."""
    fig, ax = plt.subplots(figsize=(8.0, 3.2))
    t = np.arange(timeline.num_frames) * clock.f2_samples / clock.sample_rate
    for c in range(timeline.num_channels):
        label = channel_names[c] if c < len(channel_names) else f"ch{c}"
        ax.step(t, timeline.gains[c], where="post", linewidth=1.0, label=label)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("applied gain")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)


def save_metrics_figure(report, path) -> None:
    """Bar chart of per-policy spectral distance and largest gain jump."""
    names = [r.policy for r in report.policies]
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
    axes[0].bar(names, [r.stft_distance for r in report.policies], color="tab:blue")
    axes[0].set_ylabel("spectral distance to reference")
    axes[1].bar(names, [r.max_gain_step for r in report.policies], color="tab:orange")
    axes[1].set_ylabel("max gain step")
    for ax in axes:
        ax.tick_params(axis="x", rotation=30)
        ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)


def save_loss_curve(history, path) -> None:
    """Loss and learning-rate trajectory over training epochs."""
    epochs = [r.epoch for r in history]
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.plot(epochs, [r.loss for r in history], color="tab:blue", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    twin = ax.twinx()
    twin.plot(epochs, [r.lr for r in history], color="tab:gray", alpha=0.6, label="lr")
    twin.set_yscale("log")
    twin.set_ylabel("learning rate")
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
