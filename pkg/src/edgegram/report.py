"""Render run metrics and benchmark comparisons to PNG figures.

Uses the Agg backend so figures render identically with no display
attached. Every function returns the list of files it wrote so callers
can log them in the run manifest.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analogy import AccuracyReport
from .engine import RunMetrics

FIG_DPI = 110


def _finite(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    mask = np.isfinite(ys)
    return xs[mask], ys[mask]


def save_training_figures(metrics: RunMetrics, stem: str) -> list[str]:
    """Loss curve, orthogonality trend and per-phase time breakdown.

    stem is a path prefix; files are written as <stem>_loss.png,
    <stem>_orthogonality.png and <stem>_time.png.
    """
    recs = metrics.records
    if not recs:
        return []
    written = []
    x = np.arange(len(recs))
    epochs = np.array([r.epoch for r in recs])
    epoch_starts = np.flatnonzero(np.diff(epochs, prepend=epochs[0] - 1))

    fig, ax = plt.subplots(figsize=(7, 4))
    xs, ys = _finite(x, [r.loss_mean for r in recs])
    ax.plot(xs, ys, lw=1.2, color="tab:blue")
    for e in epoch_starts[1:]:
        ax.axvline(e - 0.5, color="0.85", lw=0.6, zorder=0)
    ax.set_xlabel("round")
    ax.set_ylabel("sampled mean loss")
    ax.set_title("training loss")
    fig.tight_layout()
    path = f"{stem}_loss.png"
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    xs, ys = _finite(x, [r.mean_orthogonality for r in recs])
    if len(xs):
        ax.plot(xs, ys, lw=1.0, color="tab:green", alpha=0.6, label="per round")
        per_epoch = []
        for e in sorted(set(epochs.tolist())):
            per_epoch.append((e, metrics.epoch_mean_orthogonality(e)))
        ex, ey = _finite([p[0] for p in per_epoch], [p[1] for p in per_epoch])
        if len(ex):
            centers = [x[epochs == e].mean() for e in ex]
            ax.plot(centers, ey, "o-", color="tab:red", label="epoch mean")
        ax.legend()
    ax.set_xlabel("round")
    ax.set_ylabel("mean pairwise orthogonality")
    ax.set_title("gradient orthogonality trend")
    fig.tight_layout()
    path = f"{stem}_orthogonality.png"
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    inspect = np.array([r.inspect_s for r in recs])
    compute = np.array([r.compute_s for r in recs])
    comm = np.array([r.comm_s for r in recs])
    ax.stackplot(
        x,
        inspect,
        compute,
        comm,
        labels=["inspect", "compute", "communicate"],
        colors=["tab:purple", "tab:blue", "tab:orange"],
        alpha=0.8,
    )
    ax.set_xlabel("round")
    ax.set_ylabel("seconds")
    ax.set_title("per-round time breakdown")
    ax.legend(loc="upper right")
    fig.tight_layout()
    path = f"{stem}_time.png"
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
    written.append(path)
    return written


def save_benchmark_figure(rows: list[dict], stem: str) -> list[str]:
    """Grouped traffic-volume bars per scheme for the bench-sync command.

    Each row needs scheme, reduce_vectors, broadcast_vectors, id_count and
    bytes keys; writes <stem>_volume.png.
    """
    if not rows:
        return []
    schemes = [str(r["scheme"]) for r in rows]
    pos = np.arange(len(schemes))
    width = 0.35
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.bar(
        pos - width / 2,
        [int(r["reduce_vectors"]) for r in rows],
        width,
        label="reduce",
        color="tab:blue",
    )
    ax1.bar(
        pos + width / 2,
        [int(r["broadcast_vectors"]) for r in rows],
        width,
        label="broadcast",
        color="tab:orange",
    )
    ax1.set_xticks(pos, schemes)
    ax1.set_ylabel("vectors shipped")
    ax1.set_title("vector traffic by phase")
    ax1.legend()
    ax2.bar(pos, [int(r["bytes"]) / 1e6 for r in rows], 0.55, color="tab:green")
    ax2.set_xticks(pos, schemes)
    ax2.set_ylabel("total volume (MB)")
    ax2.set_title("bytes on the wire")
    fig.tight_layout()
    path = f"{stem}_volume.png"
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
    return [path]


def save_category_figure(report: AccuracyReport, path: str) -> list[str]:
    """Horizontal per-category accuracy bars for the eval command."""
    if not report.categories:
        return []
    names = [c.name for c in report.categories]
    accs = [c.accuracy for c in report.categories]
    colors = [
        "tab:orange" if c.kind == "syntactic" else "tab:blue"
        for c in report.categories
    ]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.35 * len(names) + 1)))
    ypos = np.arange(len(names))
    ax.barh(ypos, accs, color=colors)
    ax.set_yticks(ypos, names)
    ax.invert_yaxis()
    ax.set_xlabel("accuracy (%)")
    ax.set_xlim(0, 100)
    ax.set_title(f"analogy accuracy by category (total {report.total:.2f}%)")
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
    return [path]
