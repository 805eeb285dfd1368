"""Figure rendering for the CLI report paths (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import DensityGrid


def save_density_figure(grid: DensityGrid, overlap: float, path) -> None:
    """Both class densities with the shared (overlap) region shaded."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(grid.xs, grid.f_upper, label="upper range", color="tab:red", lw=1.5)
    ax.plot(grid.xs, grid.f_lower, label="lower range", color="tab:blue", lw=1.5)
    ax.fill_between(grid.xs, np.minimum(grid.f_upper, grid.f_lower), color="0.6", alpha=0.5, label="overlap")
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("density")
    ax.set_title(f"overlap = {overlap:.3f} ({100.0 * overlap:.1f}%)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_history_figure(history: list[dict], path) -> None:
    """Per-epoch training loss with the dev metric on a twin axis."""
    epochs = [h["epoch"] for h in history]
    losses = [h["train_loss"] for h in history]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(epochs, losses, marker="o", ms=3, color="tab:blue", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean train loss")
    dev = [(h["epoch"], h["dev_spearman"]) for h in history if h.get("dev_spearman") is not None]
    if dev:
        ax2 = ax.twinx()
        ax2.plot([d[0] for d in dev], [d[1] for d in dev], marker="s", ms=3, color="tab:orange", label="dev spearman")
        ax2.set_ylabel("dev spearman")
    stages = {h.get("stage") for h in history}
    if len(stages) > 1:
        boundary = max(h["epoch"] for h in history if h.get("stage") == "classifier")
        ax.axvline(boundary + 0.5, color="0.5", ls="--", lw=1)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
