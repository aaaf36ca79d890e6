"""Figure rendering for the report paths: evaluation summaries next to the
eval CSV, and the per-level feature diagnostics next to the inspect CSV.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_eval_figure(rows: list[dict], path) -> Path:
    """Per-image PSNR and SSIM, degraded input vs restored output."""
    path = Path(path)
    idx = np.arange(len(rows))
    fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, key, label in ((ax_p, "psnr", "PSNR [dB]"), (ax_s, "ssim", "SSIM")):
        inp = [r[f"{key}_input"] for r in rows]
        res = [r[f"{key}_restored"] for r in rows]
        ax.plot(idx, inp, "o--", label="input", color="tab:gray")
        ax.plot(idx, res, "o-", label="restored", color="tab:blue")
        ax.set_xlabel("test image")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_inspect_figures(diag, out_stem: Path) -> list[Path]:
    """Sorted loss curve with the selection cutoff, the joint train/val
    ranking scatter, and generated-vs-selected loss curves."""
    out_stem = Path(out_stem)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    losses = np.sort(diag.raw_losses)
    ax.plot(losses, lw=1.2)
    ax.axvline(diag.selected.size, color="tab:red", ls="--", lw=1,
               label=f"selected = {diag.selected.size}")
    ax.set_xlabel("rank")
    ax.set_ylabel("loss")
    ax.set_title(f"level {diag.level}: sorted relevance losses")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    p = out_stem.with_name(out_stem.name + "_losses.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(5, 5))
    mask = np.zeros(diag.rank_train.size, dtype=bool)
    mask[diag.selected] = True
    ax.scatter(diag.rank_train[~mask], diag.rank_val[~mask], s=4, alpha=0.4,
               color="tab:gray", label="rejected")
    ax.scatter(diag.rank_train[mask], diag.rank_val[mask], s=8, color="tab:blue",
               label="selected")
    ax.set_xlabel("train rank")
    ax.set_ylabel("validation rank")
    ax.set_title(f"level {diag.level}: joint ranking")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    p = out_stem.with_name(out_stem.name + "_joint.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.sort(diag.selected_losses), lw=1.2, label="selected raw")
    if diag.lnt_losses.size:
        ax.plot(np.sort(diag.lnt_losses), lw=1.2, label="generated")
    ax.set_xlabel("rank")
    ax.set_ylabel("loss")
    ax.set_title(f"level {diag.level}: generated vs selected features")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    p = out_stem.with_name(out_stem.name + "_generated.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written
