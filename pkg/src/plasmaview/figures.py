"""Figure rendering for the report-producing CLI paths.

Every figure lands next to its delimited output. Rendering is headless
(Agg) and carries fixed metadata so repeated runs produce identical
files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": "plasmaview"}

plt.rcParams.update(
    {
        "figure.figsize": (6.0, 4.0),
        "figure.dpi": 110,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
    }
)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def save_roc_curve(roc_points, auc: float, path: str | Path) -> Path:
    fig, ax = plt.subplots()
    if roc_points:
        xs = [p[0] for p in roc_points]
        ys = [p[1] for p in roc_points]
        ax.plot(xs, ys, marker="o", ms=3, lw=1.2, label=f"AUC = {auc:.3f}")
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("shot-level ROC (high-threshold sweep)")
    ax.legend(loc="lower right")
    return _save(fig, path)


def save_training_history(history, path: str | Path, labels=("loss",)) -> Path:
    """history: iterable of (step, v1[, v2...]) rows."""
    rows = list(history)
    fig, ax = plt.subplots()
    if rows:
        steps = [r[0] for r in rows]
        for j, label in enumerate(labels, start=1):
            ax.plot(steps, [r[j] for r in rows], lw=1.0, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training history")
    ax.legend()
    return _save(fig, path)


def save_dtw_histogram(view_dists, baseline_dists, path: str | Path) -> Path:
    fig, ax = plt.subplots()
    bins = 20
    ax.hist(view_dists, bins=bins, alpha=0.6, label="views", color="tab:cyan")
    ax.hist(baseline_dists, bins=bins, alpha=0.6, label="baseline augs", color="tab:orange")
    ax.set_xlabel("DTW distance to original")
    ax.set_ylabel("count")
    ax.set_title("augmentation distance distributions")
    ax.legend()
    return _save(fig, path)


def save_metrics_bars(rows, path: str | Path) -> Path:
    """rows: list of dicts with keys label, auc, f2."""
    fig, ax = plt.subplots()
    labels = [r["label"] for r in rows]
    x = range(len(rows))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [r["auc"] for r in rows], width, label="AUC")
    ax.bar([i + width / 2 for i in x], [r["f2"] for r in rows], width, label="F2")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_title("benchmark metrics by run")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def save_disruptivity_trace(times_ms, scores, path: str | Path, alarm_time_ms=None) -> Path:
    fig, ax = plt.subplots()
    ax.plot(times_ms, scores, lw=1.0)
    if alarm_time_ms is not None:
        ax.axvline(alarm_time_ms, color="tab:red", ls="--", lw=1.0, label="alarm")
        ax.legend()
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("disruptivity")
    ax.set_ylim(-0.02, 1.02)
    return _save(fig, path)
