"""Figure rendering for evaluation reports.

Figures are rendered headlessly to files and accompany the delimited outputs
of the report path; nothing here opens a window.
"""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import HardNegativePoint, PRCurve


def save_pr_curve(curve: PRCurve, path: str | os.PathLike, title: str | None = None) -> None:
    """Render a precision/recall curve with its micro-AP to an image file."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    recalls = [0.0] + [p.recall for p in curve.points]
    precisions = [1.0] + [p.precision for p in curve.points]
    ax.step(recalls, precisions, where="post", color="tab:blue", lw=1.5)
    ax.fill_between(recalls, precisions, step="post", alpha=0.15, color="tab:blue")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    label = f"micro-AP = {curve.uap:.4f}"
    ax.set_title(f"{title} ({label})" if title else label)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_hard_negative_scatter(
    points: Sequence[HardNegativePoint],
    path: str | os.PathLike,
    label_a: str = "run A",
    label_b: str = "run B",
) -> None:
    """Scatter of precision-at-rank for shared hard negatives across two runs."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], color="gray", lw=0.8, ls="--")
    ax.scatter(
        [p.precision_a for p in points],
        [p.precision_b for p in points],
        s=18,
        alpha=0.6,
        color="tab:red",
    )
    ax.set_xlabel(f"precision at rank in {label_a}")
    ax.set_ylabel(f"precision at rank in {label_b}")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.set_title(f"hard negatives: {len(points)} pairs")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
