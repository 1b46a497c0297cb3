"""Figure rendering for the report path.

Every function writes one PNG next to the delimited outputs the CLI already
emits; nothing here feeds back into the pipeline. The Agg backend is forced
so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import ScoredVideo

_DPI = 120


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_p_value_figure(
    video_id: str,
    values: np.ndarray,
    window: tuple[int, int] | None,
    path: str | Path,
    alpha: float | None = None,
) -> Path:
    """Per-segment density trace for one video, with the selected window shaded."""
    fig, ax = plt.subplots(figsize=(7, 3), constrained_layout=True)
    ax.plot(np.arange(len(values)), values, marker=".", lw=1.0, color="tab:blue")
    if window is not None:
        start, length = window
        ax.axvspan(start - 0.5, start + length - 0.5, color="tab:red", alpha=0.2,
                   label=f"selected window [{start}, {start + length})")
        ax.legend(loc="upper right", fontsize=8)
    if alpha is not None:
        ax.axhline(alpha, color="tab:gray", ls="--", lw=1.0)
    ax.set_xlabel("segment index")
    ax.set_ylabel("density under null model")
    ax.set_title(video_id, fontsize=10)
    return _finish(fig, path)


def save_frame_score_figure(
    scored: ScoredVideo,
    truth_frames: Sequence[int] | None,
    path: str | Path,
) -> Path:
    """Frame-level anomaly score trace, with true anomalous stretches shaded."""
    fig, ax = plt.subplots(figsize=(7, 3), constrained_layout=True)
    frames = np.arange(scored.frame_scores.size)
    if truth_frames is not None:
        truth = np.asarray(truth_frames)[: frames.size]
        ax.fill_between(frames[: truth.size], 0, truth, step="mid",
                        color="tab:red", alpha=0.15, label="ground truth")
        ax.legend(loc="upper right", fontsize=8)
    ax.plot(frames, scored.frame_scores, lw=1.0, color="tab:blue")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("frame index")
    ax.set_ylabel("anomaly score")
    ax.set_title(scored.video_id, fontsize=10)
    return _finish(fig, path)


def save_loss_curve(epoch_losses: Sequence[float], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5), constrained_layout=True)
    ax.plot(np.arange(1, len(epoch_losses) + 1), epoch_losses, marker=".", lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    return _finish(fig, path)


def save_sweep_figure(rows: Sequence[Mapping], path: str | Path) -> Path:
    """AUC against the swept parameter value."""
    values = [row["value"] for row in rows]
    aucs = [row["auc"] for row in rows]
    param = rows[0]["param"] if rows else "value"
    fig, ax = plt.subplots(figsize=(6, 3.5), constrained_layout=True)
    ax.plot(values, aucs, marker="o", lw=1.2)
    ax.set_xlabel(param)
    ax.set_ylabel("frame-level AUC")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def save_ablation_figure(rows: Sequence[Mapping], path: str | Path) -> Path:
    """One bar per ablation mode."""
    modes = [row["mode"] for row in rows]
    aucs = [row["auc"] if row["auc"] is not None else 0.0 for row in rows]
    fig, ax = plt.subplots(figsize=(7, 3.5), constrained_layout=True)
    ax.bar(np.arange(len(modes)), aucs, color="tab:blue")
    ax.set_xticks(np.arange(len(modes)))
    ax.set_xticklabels(modes, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("frame-level AUC")
    ax.set_ylim(0.0, 1.0)
    for x, auc in enumerate(aucs):
        ax.text(x, auc + 0.01, f"{auc:.3f}", ha="center", fontsize=8)
    return _finish(fig, path)
