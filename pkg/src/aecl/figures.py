"""Render training and diagnostic curves to PNG next to the CSV output."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _stage_shading(ax, records) -> None:
    bounds = {}
    for r in records:
        bounds.setdefault(r.stage, [r.epoch, r.epoch])
        bounds[r.stage][1] = r.epoch
    colors = {1: "#f2f2f2", 2: "#e0ecf4", 3: "#e5f5e0"}
    for stage, (lo, hi) in bounds.items():
        ax.axvspan(lo - 0.5, hi + 0.5, color=colors.get(stage, "#ffffff"),
                   zorder=0, label=f"stage {stage}")


def render_history_figures(history, out_dir: Path | str) -> list[Path]:
    """Loss-component and metric curves per epoch; returns written paths."""
    records = history.records
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if not records:
        return written
    epochs = [r.epoch for r in records]

    fig, ax = plt.subplots(figsize=(7, 4.2))
    _stage_shading(ax, records)
    for key, label in (("l_i", "instance"), ("l_c", "cluster"),
                       ("l_p", "pseudo-label"), ("l_e1", "row entropy"),
                       ("l_e2", "balance entropy")):
        ax.plot(epochs, [getattr(r, key) for r in records], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss component")
    ax.legend(fontsize=8, ncol=2)
    path = out_dir / "losses.png"
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    if any(r.acc is not None for r in records):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
        for ax in (ax1, ax2):
            _stage_shading(ax, records)
        ax1.plot(epochs, [r.acc for r in records], label="ACC")
        ax1.plot(epochs, [r.nmi for r in records], label="NMI")
        ax1.set_xlabel("epoch")
        ax1.set_ylim(0.0, 1.05)
        ax1.legend(fontsize=8)
        ax2.plot(epochs, [r.ns for r in records], label="NS")
        ax2.plot(epochs, [r.ps for r in records], label="PS")
        ax2.set_xlabel("epoch")
        ax2.set_ylim(0.0, 1.05)
        ax2.legend(fontsize=8)
        path = out_dir / "metrics.png"
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_cluster_sizes_figure(report, out_path: Path | str) -> Path:
    """Bar chart of predicted cluster occupancy for an evaluation report."""
    out_path = Path(out_path)
    sizes = list(report.cluster_sizes)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.bar(range(len(sizes)), sizes, color="#7570b3")
    ax.set_xlabel("predicted cluster")
    ax.set_ylabel("samples")
    ax.set_xticks(range(len(sizes)))
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_ns_figure(pairs: Sequence[tuple[float, float]],
                     out_path: Path | str,
                     title: Optional[str] = None) -> Path:
    """Per-batch NS/PS bars for the diagnose command."""
    out_path = Path(out_path)
    idx = list(range(len(pairs)))
    fig, ax = plt.subplots(figsize=(7, 3.8))
    ax.bar(idx, [p[0] for p in pairs], label="NS", color="#d95f02")
    ax.plot(idx, [p[1] for p in pairs], "o-", label="PS", color="#1b9e77")
    ax.set_xlabel("evaluation batch")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
