"""SVG curve plots, rendered in-process and free of timestamps."""
from __future__ import annotations

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "splicegan"

_AXES = {
    "roc": ("False positive rate", "True positive rate"),
    "pr": ("Recall", "Precision"),
}


def plot_curves(path, kind: str, curves: dict, title: str = "") -> None:
    """``curves`` maps a legend label to ``(x, y)`` arrays."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, (x, y) in curves.items():
        ax.plot(x, y, label=label, linewidth=1.5, drawstyle="steps-post" if kind == "pr" else "default")
    if kind == "roc":
        ax.plot([0, 1], [0, 1], color="0.7", linestyle="--", linewidth=1)
    xlabel, ylabel = _AXES[kind]
    ax.set(xlabel=xlabel, ylabel=ylabel, xlim=(0, 1), ylim=(0, 1.02), title=title)
    ax.legend(loc="lower right" if kind == "roc" else "lower left")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
