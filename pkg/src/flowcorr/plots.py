"""Figure rendering for reports; file output only, no interactive windows.

Each helper takes already-computed results and writes one PNG. The figures
accompany the machine-readable artifacts (JSONL, CSV, JSON, PGM); nothing
downstream parses them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)


def render_sweep_figure(rows: list[dict], path) -> None:
    """Residual error versus horizontal offset for one sweep."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    du = [row["du"] for row in rows]
    err = [row["aepe"] for row in rows]
    ax.plot(du, err, marker="o", color="#1f77b4")
    ax.set_xlabel("horizontal offset (px)")
    ax.set_ylabel("mean residual norm (px)")
    ax.set_title("Shift-consistency sweep")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_heatmap_figure(heatmap, window, query, path) -> None:
    """Matching-score window around one query cell.

    `window` is (row0, row1, col0, col1) in volume-grid coordinates and the
    query marker is drawn when it falls inside the window.
    """
    row0, _row1, col0, _col1 = window
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    im = ax.imshow(heatmap, cmap="viridis", vmin=0.0, vmax=1.0, interpolation="nearest")
    qi, qj = query
    if 0 <= qi - row0 < heatmap.shape[0] and 0 <= qj - col0 < heatmap.shape[1]:
        ax.plot([qj - col0], [qi - row0], marker="+", color="white", markersize=12)
    ax.set_xlabel(f"target column (window starts at {col0})")
    ax.set_ylabel(f"target row (window starts at {row0})")
    ax.set_title(f"Match scores for query ({qi}, {qj})")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metric_figure(report, path) -> None:
    """Bar chart of the binned endpoint errors in a metric report."""
    labels = [label for label in report.binned if label != "All"]
    values = [report.binned[label].get("aepe", 0.0) for label in labels]
    counts = [report.binned[label]["count"] for label in labels]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    bars = ax.bar(labels, values, color="#ff7f0e")
    for bar, count in zip(bars, counts):
        ax.annotate(
            f"n={count}",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_xlabel("reference motion magnitude (px)")
    ax.set_ylabel("mean endpoint error (px)")
    ax.set_title(f"Endpoint error by motion range (overall {report.aepe:.3f} px)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
