"""Report figures written next to the JSON/CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}
# keep PNG bytes independent of the matplotlib version string
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, format="png", metadata=PNG_METADATA, bbox_inches="tight")
    plt.close(fig)


def plot_similarity_histogram(stats, path, title: str | None = None) -> None:
    """Bar histogram of pairwise category cosine similarities with the mean marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 2.4))
        lows = stats.edges[:-1]
        widths = np.diff(stats.edges)
        ax.bar(lows, stats.counts, width=widths, align="edge", color="#4c72b0", edgecolor="white", linewidth=0.3)
        ax.axvline(stats.mu, color="#c44e52", linewidth=1.0, linestyle="--")
        ax.text(stats.mu, ax.get_ylim()[1] * 0.95, f" μ={stats.mu:.3f}", color="#c44e52", va="top")
        ax.set_xlim(-1, 1)
        ax.set_xlabel("cosine similarity")
        ax.set_ylabel("pairs")
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_pq_by_category(report, names, path) -> None:
    """Horizontal bars of per-category PQ, SQ and RQ."""
    cats = sorted(report.per_category)
    with plt.rc_context(STYLE):
        height = max(1.6, 0.28 * len(cats) + 0.8)
        fig, ax = plt.subplots(figsize=(4.0, height))
        y = np.arange(len(cats))
        for offset, key, color in ((-0.25, "pq", "#4c72b0"), (0.0, "sq", "#55a868"), (0.25, "rq", "#dd8452")):
            vals = [getattr(report.per_category[c], key) for c in cats]
            ax.barh(y + offset, vals, height=0.25, color=color, label=key.upper())
        ax.set_yticks(y)
        ax.set_yticklabels([names[c] if c < len(names) else str(c) for c in cats])
        ax.invert_yaxis()
        ax.set_xlim(0, 1)
        ax.set_xlabel("score")
        ax.set_title(f"PQ {report.pq:.3f}  SQ {report.sq:.3f}  RQ {report.rq:.3f}")
        ax.legend(loc="lower right", frameon=False)
        _save(fig, path)
