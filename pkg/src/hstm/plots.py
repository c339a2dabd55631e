"""Figure rendering for the reporting commands (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["plot_rd_curve", "plot_training_trace", "plot_curve_pair"]


def plot_rd_curve(points, path, title: str = "Rate-distortion sweep"):
    """Scatter + line of (bpp, PSNR) for a sweep result."""
    rates = [p.bpp for p in points]
    quals = [p.psnr for p in points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rates, quals, marker="o", markersize=3, linewidth=1)
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_trace(trace, path):
    """Loss (left axis) and rate (right axis) against the training step."""
    steps = [row.step for row in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [row.loss for row in trace], label="loss", linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("RD loss")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(steps, [row.rate for row in trace], color="tab:orange",
             label="rate (bpp)", linewidth=1, alpha=0.7)
    ax2.set_ylabel("rate (bpp)")
    ax.legend(loc="upper left")
    ax2.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_curve_pair(test, anchor, path, metric: str = "psnr"):
    """Overlay two RD curves (used by the BD-rate report)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for curve, label in ((anchor, "anchor"), (test, "test")):
        ax.plot(curve.rates(), curve.qualities(metric), marker="o",
                markersize=3, linewidth=1, label=label)
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel("PSNR (dB)" if metric == "psnr" else metric)
    ax.set_xscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
