"""Delimited outputs and the figures rendered alongside them.

All tables are tab-separated text with a single header line and no
timestamps, so reruns are byte-identical. Figures are rendered with the Agg
backend and stripped of software metadata for the same reason.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _plt():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=110, metadata={"Software": None})
    _plt().close(fig)


def save_loss_curve(path: Path, steps: Sequence[int], losses: Sequence[float],
                    title: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_threshold_curves(path: Path, sweep: Sequence[tuple[float, float, float]],
                          eer_value: float, eer_threshold: float, title: str) -> None:
    """FAR / FRR versus threshold with the EER operating point marked."""
    plt = _plt()
    finite = [(t, far, frr) for t, far, frr in sweep if np.isfinite(t)]
    fig, ax = plt.subplots(figsize=(6, 4))
    if finite:
        ts = [r[0] for r in finite]
        ax.plot(ts, [r[1] for r in finite], label="FAR (attack accepted)", lw=1.2)
        ax.plot(ts, [r[2] for r in finite], label="FRR (genuine rejected)", lw=1.2)
    if np.isfinite(eer_threshold):
        ax.axvline(eer_threshold, color="gray", ls="--", lw=0.8)
    ax.axhline(eer_value, color="gray", ls=":", lw=0.8,
               label=f"EER = {eer_value:.3f}")
    ax.set_xlabel("threshold")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def _to_display(img: np.ndarray) -> np.ndarray:
    """[3,H,W] in [-1,1] (or a nonnegative noise map) -> HWC in [0,1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.min() >= 0.0:   # noise maps: show relative magnitude
        top = max(arr.max(), 1e-8)
        arr = arr / top
    else:
        arr = (arr + 1.0) / 2.0
    return np.clip(arr.transpose(1, 2, 0), 0.0, 1.0)


def save_image_panel(path: Path, rows: Sequence[Sequence[np.ndarray]],
                     row_titles: Sequence[str], title: str) -> None:
    """Grid figure: one row per image list (e.g. input / recon / noise)."""
    plt = _plt()
    n_rows = len(rows)
    n_cols = max(len(r) for r in rows)
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(1.2 * n_cols, 1.4 * n_rows),
                             squeeze=False)
    for i, row in enumerate(rows):
        for j in range(n_cols):
            ax = axes[i][j]
            ax.set_axis_off()
            if j < len(row):
                ax.imshow(_to_display(row[j]), interpolation="nearest")
            if j == 0:
                ax.set_title(row_titles[i], fontsize=8, loc="left")
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def save_montage(path: Path, images: Sequence[np.ndarray], ncols: int,
                 title: str) -> None:
    plt = _plt()
    n = len(images)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(1.2 * ncols, 1.2 * nrows),
                             squeeze=False)
    for k in range(nrows * ncols):
        ax = axes[k // ncols][k % ncols]
        ax.set_axis_off()
        if k < n:
            ax.imshow(_to_display(images[k]), interpolation="nearest")
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)
