"""Figure rendering for run and comparison reports.

Figures are written next to the delimited outputs (CSV) of the same
report; the Agg backend keeps everything headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_loss_curves(
    losses_per_seed: Mapping[int, Sequence[Mapping]],
    path: str | Path,
    title: str = "training loss",
) -> Path:
    """One panel per loss kind, one line per seed, saved as PNG."""
    path = Path(path)
    fig, (ax_mlm, ax_supcon) = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for seed in sorted(losses_per_seed):
        records = losses_per_seed[seed]
        steps = [r["step"] for r in records]
        ax_mlm.plot(steps, [r["mlm_loss"] for r in records], label=f"seed {seed}")
        supcon = [(r["step"], r["supcon_loss"]) for r in records if r["supcon_loss"] is not None]
        if supcon:
            ax_supcon.plot(*zip(*supcon), label=f"seed {seed}")
    ax_mlm.set_title("masked-LM loss")
    ax_supcon.set_title("contrastive loss")
    for ax in (ax_mlm, ax_supcon):
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        if ax.get_lines():
            ax.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_comparison_chart(
    rows: Sequence[Mapping],
    path: str | Path,
    title: str = "method comparison",
) -> Path:
    """Bar chart of per-method means with std error bars."""
    path = Path(path)
    methods = [row["method"] for row in rows]
    means = [row["mean"] for row in rows]
    stds = [row["std"] or 0.0 for row in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows)), 4))
    positions = range(len(rows))
    ax.bar(positions, means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(methods, rotation=30, ha="right")
    ax.set_ylabel(rows[0].get("metric", "metric") if rows else "metric")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
